"""Synthetic PV current generation: normal operation, arc faults, drift.

Every trace is a DC operating level plus inverter switching harmonics,
optional MPPT perturbation ripple, optional narrowband resonances, white
measurement noise, and a per-category transient recipe.  Arc faults add
pink-shaped broadband noise, impulsive bursts, and a DC drop after an
onset sample.

Category recipes (one sub-condition index per listed operating condition)
are all defined in this file so the parameterization can be audited:

  startup (7)                 DC ramp from zero, ramp time per sub-condition,
                              contactor click at ramp start
  parallel_strings (3)        2..4 string-join DC steps with small clicks
  direct_connection (6)       distinct DC operating points with slow wander
  breaker (4)                 brief DC interruptions plus open/close clicks
  variable_input (3)          slow sinusoidal irradiance swings of the DC level
  limited_feed_start_stop (2) trapezoidal on/off power cycling
  grid_connect_disconnect (4) DC steps with damped double-line-frequency ringing
  load_switching (4)          alternating DC load steps with clicks
  harmonic_grid (2)           3rd/5th/7th line-harmonic ripple injection
  steady                      no transient content

Determinism: every trace is a pure function of (profile, scenario) where
the scenario seed feeds a counter-based Philox generator; arc additions
draw from a separate child stream so the pre-onset samples of an arc
trace are bit-identical to the normal trace with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .features import DEFAULT_FRAME_LEN

DEFAULT_SAMPLE_RATE = 250_000.0

LABEL_NORMAL = 0
LABEL_ARC = 1


class InvalidProfile(ValueError):
    """A hardware profile field violates its constraints."""


class InvalidArcParams(ValueError):
    """Arc parameters violate their constraints for the host profile."""


class InvalidScenario(ValueError):
    """A scenario description violates its constraints."""


@dataclass(frozen=True)
class HardwareProfile:
    """Parametric spectral fingerprint of one inverter platform.

    harmonic_amps lists (multiple-of-switching-frequency, amplitude in A)
    pairs; resonances lists (center Hz, amplitude A RMS, Q) narrowband
    noise peaks (normally empty, populated by drift).
    """

    profile_id: str
    sample_rate: float = DEFAULT_SAMPLE_RATE
    dc_level: float = 10.0
    switching_freq: float = 20_000.0
    harmonic_amps: tuple[tuple[float, float], ...] = ((1.0, 0.25), (2.0, 0.12), (3.0, 0.06))
    noise_floor: float = 0.01
    mppt_perturb: tuple[float, float] = (0.0, 0.0)
    resonances: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        nyq = self.sample_rate / 2.0
        if self.sample_rate <= 0:
            raise InvalidProfile(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.switching_freq >= nyq:
            raise InvalidProfile(
                f"switching_freq {self.switching_freq} violates Nyquist for "
                f"sample_rate {self.sample_rate}"
            )
        if self.dc_level < 0:
            raise InvalidProfile(f"dc_level must be >= 0, got {self.dc_level}")
        if self.noise_floor < 0:
            raise InvalidProfile(f"noise_floor must be >= 0, got {self.noise_floor}")
        for mult, amp in self.harmonic_amps:
            if amp < 0:
                raise InvalidProfile(f"harmonic amplitude must be >= 0, got {amp}")
            if mult <= 0:
                raise InvalidProfile(f"harmonic multiple must be > 0, got {mult}")
            if mult * self.switching_freq >= nyq:
                raise InvalidProfile(
                    f"harmonic at {mult} x switching_freq exceeds Nyquist"
                )
        rate, depth = self.mppt_perturb
        if rate < 0:
            raise InvalidProfile(f"mppt_perturb rate must be >= 0, got {rate}")
        if not 0.0 <= depth < 1.0:
            raise InvalidProfile(f"mppt_perturb depth must be in [0, 1), got {depth}")
        for center, amp, q in self.resonances:
            if center <= 0 or center >= nyq:
                raise InvalidProfile(f"resonance center {center} outside (0, Nyquist)")
            if amp < 0:
                raise InvalidProfile(f"resonance amplitude must be >= 0, got {amp}")
            if q <= 0:
                raise InvalidProfile(f"resonance Q must be > 0, got {q}")

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0


@dataclass(frozen=True)
class ArcParams:
    """Additive arc signature: broadband floor lift, bursts, DC drop."""

    onset_index: int
    broadband_gain: float
    pink_exponent: float = 1.0
    burst_rate: float = 800.0
    burst_amp: float = 0.5
    dc_drop: float = 0.05

    def __post_init__(self) -> None:
        if self.onset_index < 0:
            raise InvalidArcParams(f"onset_index must be >= 0, got {self.onset_index}")
        if self.broadband_gain < 0:
            raise InvalidArcParams(
                f"broadband_gain must be >= 0, got {self.broadband_gain}"
            )
        if self.pink_exponent < 0:
            raise InvalidArcParams(
                f"pink_exponent must be >= 0, got {self.pink_exponent}"
            )
        if self.burst_rate < 0 or self.burst_amp < 0:
            raise InvalidArcParams("burst_rate and burst_amp must be >= 0")
        if not 0.0 <= self.dc_drop < 1.0:
            raise InvalidArcParams(f"dc_drop must be in [0, 1), got {self.dc_drop}")


# Table of nuisance categories and their sub-condition counts.
CATEGORY_CONDITIONS: dict[str, int] = {
    "startup": 7,
    "parallel_strings": 3,
    "direct_connection": 6,
    "breaker": 4,
    "variable_input": 3,
    "limited_feed_start_stop": 2,
    "grid_connect_disconnect": 4,
    "load_switching": 4,
    "harmonic_grid": 2,
}

NUISANCE_CATEGORIES = tuple(CATEGORY_CONDITIONS)
ALL_CATEGORIES = NUISANCE_CATEGORIES + ("steady", "arc")


@dataclass(frozen=True)
class ScenarioSpec:
    """One trace request: category, duration, seed, optional event times."""

    category: str
    duration: float
    seed: int
    event_times: tuple[float, ...] = ()
    sub_condition: int = 0

    def __post_init__(self) -> None:
        if self.category not in ALL_CATEGORIES:
            raise InvalidScenario(f"unknown category {self.category!r}")
        if not self.duration > 0:
            raise InvalidScenario(f"duration must be > 0, got {self.duration}")
        for t in self.event_times:
            if not 0.0 <= t <= self.duration:
                raise InvalidScenario(f"event time {t} outside [0, {self.duration}]")
        n_subs = CATEGORY_CONDITIONS.get(self.category, 1)
        if not 0 <= self.sub_condition < n_subs:
            raise InvalidScenario(
                f"sub_condition {self.sub_condition} out of range for "
                f"{self.category!r} (has {n_subs})"
            )


@dataclass(frozen=True)
class DriftSpec:
    """Field-drift transformation of a hardware profile."""

    noise_floor_scale: float = 1.0
    harmonic_shift: float = 0.0
    added_resonance: tuple[float, float, float] | None = None
    season_gain: float = 1.0

    def __post_init__(self) -> None:
        if not self.noise_floor_scale > 0:
            raise ValueError(f"noise_floor_scale must be > 0, got {self.noise_floor_scale}")
        if not self.season_gain > 0:
            raise ValueError(f"season_gain must be > 0, got {self.season_gain}")
        if self.harmonic_shift <= -1.0:
            raise ValueError(f"harmonic_shift must be > -1, got {self.harmonic_shift}")


@dataclass
class SignalTrace:
    """A labeled current trace with per-frame labels.

    frame_labels[i] covers samples [i*frame_len, (i+1)*frame_len); every
    frame overlapping [onset_index, end) of an arc trace is labeled arc.
    """

    samples: np.ndarray
    sample_rate: float
    frame_labels: np.ndarray
    profile_id: str
    category: str
    frame_len: int = DEFAULT_FRAME_LEN
    onset_index: int | None = None
    trace_id: str = ""

    @property
    def n_frames(self) -> int:
        return len(self.samples) // self.frame_len


def _frame_labels(n_samples: int, frame_len: int, onset_index: int | None) -> np.ndarray:
    n_frames = n_samples // frame_len
    labels = np.zeros(n_frames, dtype=np.uint8)
    if onset_index is not None and onset_index < n_frames * frame_len:
        labels[onset_index // frame_len :] = LABEL_ARC
    return labels


def _normal_and_arc_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    normal_ss, arc_ss = root.spawn(2)
    return (
        np.random.Generator(np.random.Philox(normal_ss)),
        np.random.Generator(np.random.Philox(arc_ss)),
    )


def _click(t: np.ndarray, fs: float, at: float, amp: float, ring_hz: float = 45_000.0,
           decay_s: float = 0.2e-3) -> np.ndarray:
    """Short damped oscillation modeling a relay/contactor transient."""
    tau = t - at
    pulse = np.zeros_like(t)
    mask = (tau >= 0) & (tau < 8 * decay_s)
    pulse[mask] = amp * np.exp(-tau[mask] / decay_s) * np.sin(2 * np.pi * ring_hz * tau[mask])
    return pulse


def _default_events(duration: float, count: int) -> tuple[float, ...]:
    return tuple(duration * (i + 1) / (count + 1) for i in range(count))


def _recipe(profile: HardwareProfile, scenario: ScenarioSpec,
            t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (dc envelope, additive transient) for the scenario category."""
    fs = profile.sample_rate
    dc = profile.dc_level
    dur = scenario.duration
    sub = scenario.sub_condition
    dc_env = np.full(t.shape, dc, dtype=np.float64)
    extra = np.zeros_like(t)
    cat = scenario.category

    if cat in ("steady", "arc"):
        return dc_env, extra

    if cat == "startup":
        ramp_frac = (0.10, 0.18, 0.28, 0.40, 0.55, 0.70, 0.85)[sub]
        ramp_end = ramp_frac * dur
        dc_env = dc * np.clip(t / max(ramp_end, 1e-9), 0.0, 1.0)
        extra += _click(t, fs, 0.002 * dur, amp=(0.04 + 0.015 * sub) * dc)

    elif cat == "parallel_strings":
        n_joins = sub + 2  # 2..4 strings joining
        events = scenario.event_times or _default_events(dur, n_joins)
        dc_env = dc / (n_joins + 1) * np.ones_like(t)
        for te in events:
            dc_env += dc / (n_joins + 1) * (t >= te)
            extra += _click(t, fs, te, amp=0.03 * dc)

    elif cat == "direct_connection":
        point = (0.3, 0.5, 0.7, 0.9, 1.1, 1.3)[sub]
        dc_env = dc * point * (1.0 + 0.02 * np.sin(2 * np.pi * 2.0 * t + 0.7 * sub))

    elif cat == "breaker":
        gap_s = (0.002, 0.004, 0.006, 0.008)[sub]
        events = scenario.event_times or _default_events(dur, 2)
        for te in events:
            dc_env *= 1.0 - ((t >= te) & (t < te + gap_s))
            extra += _click(t, fs, te, amp=(0.08 + 0.02 * sub) * dc)
            extra += _click(t, fs, te + gap_s, amp=0.05 * dc)

    elif cat == "variable_input":
        depth = (0.10, 0.20, 0.30)[sub]
        rate = (0.8, 1.5, 3.0)[sub]
        dc_env = dc * (1.0 + depth * np.sin(2 * np.pi * rate * t))

    elif cat == "limited_feed_start_stop":
        period = (0.15, 0.25)[sub]
        ramp = 0.005
        phase = (t % period) / period
        duty = 0.5
        # trapezoid between 0.2*dc and dc with `ramp`-second edges
        rise = np.clip((phase * period) / ramp, 0.0, 1.0)
        fall = np.clip(((phase - duty) * period) / ramp, 0.0, 1.0)
        level = np.where(phase < duty, 0.2 + 0.8 * rise, 1.0 - 0.8 * fall)
        dc_env = dc * level

    elif cat == "grid_connect_disconnect":
        amp = (0.05, 0.10, 0.15, 0.20)[sub]
        events = scenario.event_times or _default_events(dur, 2)
        for k, te in enumerate(events):
            sign = 1.0 if k % 2 == 0 else -1.0
            dc_env += sign * 0.1 * dc * (t >= te)
            tau = t - te
            mask = tau >= 0
            ring = np.zeros_like(t)
            ring[mask] = amp * dc * np.exp(-tau[mask] / 0.03) * np.sin(2 * np.pi * 100.0 * tau[mask])
            extra += ring

    elif cat == "load_switching":
        step = (-0.30, -0.15, 0.15, 0.30)[sub]
        events = scenario.event_times or _default_events(dur, 3)
        for k, te in enumerate(events):
            sign = 1.0 if k % 2 == 0 else -1.0
            dc_env += sign * step * dc * (t >= te)
            extra += _click(t, fs, te, amp=0.05 * dc)

    elif cat == "harmonic_grid":
        amps = ((0.020, 0.012, 0.008), (0.040, 0.025, 0.015))[sub]
        for h, a in zip((3, 5, 7), amps):
            extra += a * dc * np.sin(2 * np.pi * h * 50.0 * t)

    return dc_env, extra


def _band_noise(rng: np.random.Generator, n: int, fs: float, center: float,
                amp: float, q: float) -> np.ndarray:
    """Gaussian-band-filtered white noise with RMS = amp."""
    white = rng.standard_normal(n)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    bw = center / q
    window = np.exp(-0.5 * ((freqs - center) / (bw / 2.0)) ** 2)
    shaped = np.fft.irfft(np.fft.rfft(white) * window, n=n)
    rms = math.sqrt(float(np.mean(shaped**2)))
    if rms > 0:
        shaped *= amp / rms
    return shaped


def _pink_noise(rng: np.random.Generator, n: int, fs: float, exponent: float,
                rms: float) -> np.ndarray:
    """White noise shaped by a 1/f^(exponent/2) magnitude filter, RMS-scaled."""
    white = rng.standard_normal(n)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (-exponent / 2.0)
    shaped = np.fft.irfft(np.fft.rfft(white) * shape, n=n)
    measured = math.sqrt(float(np.mean(shaped**2)))
    if measured > 0:
        shaped *= rms / measured
    return shaped


def _normal_samples(profile: HardwareProfile, scenario: ScenarioSpec,
                    rng: np.random.Generator) -> np.ndarray:
    fs = profile.sample_rate
    n = int(scenario.duration * fs)
    if n < 1:
        raise InvalidScenario("duration too short for one sample")
    t = np.arange(n, dtype=np.float64) / fs

    dc_env, extra = _recipe(profile, scenario, t)

    # Switching content scales with the operating point so ramps fade it in.
    scale = dc_env / profile.dc_level if profile.dc_level > 0 else np.ones_like(t)
    switching = np.zeros_like(t)
    for mult, amp in profile.harmonic_amps:
        f = mult * profile.switching_freq
        if f < profile.nyquist and amp > 0:
            switching += amp * np.sin(2 * np.pi * f * t)
    rate, depth = profile.mppt_perturb
    if rate > 0 and depth > 0:
        switching += profile.dc_level * depth * np.sign(np.sin(2 * np.pi * rate * t))

    x = dc_env + scale * switching + extra
    for center, amp, q in profile.resonances:
        if amp > 0:
            x += _band_noise(rng, n, fs, center, amp, q)
    if profile.noise_floor > 0:
        x += profile.noise_floor * rng.standard_normal(n)
    return x


def synth_normal(profile: HardwareProfile, scenario: ScenarioSpec,
                 frame_len: int = DEFAULT_FRAME_LEN) -> SignalTrace:
    """Generate a normal-operation trace; every frame is labeled normal."""
    if scenario.category == "arc":
        raise InvalidScenario("synth_normal cannot generate the 'arc' category")
    normal_rng, _ = _normal_and_arc_streams(scenario.seed)
    x = _normal_samples(profile, scenario, normal_rng).astype(np.float32)
    return SignalTrace(
        samples=x,
        sample_rate=profile.sample_rate,
        frame_labels=_frame_labels(len(x), frame_len, None),
        profile_id=profile.profile_id,
        category=scenario.category,
        frame_len=frame_len,
    )


def synth_arc(profile: HardwareProfile, arc: ArcParams, scenario: ScenarioSpec,
              frame_len: int = DEFAULT_FRAME_LEN) -> SignalTrace:
    """Generate an arc trace: normal background plus arc signature after onset.

    Samples before onset_index are bit-identical to synth_normal with the
    same seed.  Rejects broadband_gain <= profile.noise_floor (an arc must
    elevate the floor); the degenerate all-zero case (both exactly 0) is
    allowed so pure DC-drop / burst-only arcs remain expressible.
    """
    if arc.broadband_gain <= profile.noise_floor and not (
        arc.broadband_gain == 0.0 and profile.noise_floor == 0.0
    ):
        raise InvalidArcParams(
            f"broadband_gain {arc.broadband_gain} must exceed the profile "
            f"noise_floor {profile.noise_floor}"
        )
    normal_rng, arc_rng = _normal_and_arc_streams(scenario.seed)
    base_scenario = scenario if scenario.category != "arc" else replace(scenario, category="steady")
    x = _normal_samples(profile, base_scenario, normal_rng)
    n = len(x)
    if arc.onset_index >= n:
        raise InvalidArcParams(
            f"onset_index {arc.onset_index} beyond trace length {n}"
        )

    onset = arc.onset_index
    m = n - onset
    fs = profile.sample_rate
    if arc.broadband_gain > 0:
        x[onset:] += _pink_noise(arc_rng, m, fs, arc.pink_exponent, arc.broadband_gain)
    if arc.burst_rate > 0 and arc.burst_amp > 0:
        n_bursts = arc_rng.poisson(arc.burst_rate * m / fs)
        if n_bursts > 0:
            starts = arc_rng.integers(0, m, size=n_bursts)
            signs = arc_rng.choice((-1.0, 1.0), size=n_bursts)
            k_len = max(int(0.2e-3 * fs), 2)
            kernel = np.exp(-5.0 * np.arange(k_len) / k_len)
            for s, sign in zip(starts, signs):
                end = min(s + k_len, m)
                x[onset + s : onset + end] += sign * arc.burst_amp * kernel[: end - s]
    if arc.dc_drop > 0:
        x[onset:] -= arc.dc_drop * profile.dc_level

    x = x.astype(np.float32)
    return SignalTrace(
        samples=x,
        sample_rate=fs,
        frame_labels=_frame_labels(n, frame_len, onset),
        profile_id=profile.profile_id,
        category="arc",
        frame_len=frame_len,
        onset_index=onset,
    )


def apply_drift(profile: HardwareProfile, drift: DriftSpec) -> HardwareProfile:
    """Return a drifted copy of the profile; the original is unmodified.

    Harmonics pushed past Nyquist by the frequency shift are dropped so the
    drifted profile always satisfies the profile invariants.
    """
    new_switching = profile.switching_freq * (1.0 + drift.harmonic_shift)
    nyq = profile.nyquist
    if new_switching >= nyq:
        raise InvalidProfile(
            f"harmonic_shift {drift.harmonic_shift} pushes switching_freq past Nyquist"
        )
    harmonics = tuple(
        (mult, amp)
        for mult, amp in profile.harmonic_amps
        if mult * new_switching < nyq
    )
    resonances = profile.resonances
    if drift.added_resonance is not None:
        resonances = resonances + (drift.added_resonance,)
    return replace(
        profile,
        switching_freq=new_switching,
        harmonic_amps=harmonics,
        noise_floor=profile.noise_floor * drift.noise_floor_scale,
        dc_level=profile.dc_level * drift.season_gain,
        resonances=resonances,
    )


def default_arc_params(profile: HardwareProfile, onset_index: int,
                       gain_scale: float = 1.0) -> ArcParams:
    """Arc parameters scaled to a profile: clearly above its noise floor."""
    gain = gain_scale * max(6.0 * profile.noise_floor, 0.008 * profile.dc_level)
    return ArcParams(
        onset_index=onset_index,
        broadband_gain=gain,
        pink_exponent=1.0,
        burst_rate=800.0,
        burst_amp=0.06 * profile.dc_level,
        dc_drop=0.05,
    )


# ---------------------------------------------------------------------------
# Dataset suite generation


@dataclass(frozen=True)
class TraceEntry:
    """Manifest row describing one generated trace."""

    trace_id: str
    profile_id: str
    category: str
    sub_condition: int
    repetition: int
    seed: int
    n_samples: int
    sample_rate: float
    frame_len: int
    onset_index: int | None
    frame_labels: tuple[int, ...]
    file: str = ""


@dataclass
class DatasetManifest:
    """Inventory of a generated suite with per-frame labels and balance."""

    seed: int
    per_category_count: int
    duration: float
    profile_ids: tuple[str, ...]
    entries: list[TraceEntry]

    @property
    def normal_frames(self) -> int:
        return sum(e.frame_labels.count(LABEL_NORMAL) for e in self.entries)

    @property
    def arc_frames(self) -> int:
        return sum(e.frame_labels.count(LABEL_ARC) for e in self.entries)

    def class_balance(self) -> dict[str, int]:
        return {"normal_frames": self.normal_frames, "arc_frames": self.arc_frames}


# Two stock inverter platforms with clearly distinct switching structure,
# used as the default source/target pair in experiments.
DEFAULT_PROFILE_A = HardwareProfile(
    "inverter-a",
    dc_level=10.0,
    switching_freq=20_000.0,
    harmonic_amps=((1.0, 0.25), (2.0, 0.12), (3.0, 0.06)),
    noise_floor=0.01,
    mppt_perturb=(120.0, 0.02),
)
DEFAULT_PROFILE_B = HardwareProfile(
    "inverter-b",
    dc_level=6.0,
    switching_freq=55_000.0,
    harmonic_amps=((1.0, 0.35), (1.5, 0.15), (2.0, 0.08)),
    noise_floor=0.03,
    mppt_perturb=(200.0, 0.05),
)


# Arc operating grid: PV current scale x severity x onset position.
ARC_DC_SCALES = (0.6, 1.0, 1.4)
ARC_GAIN_SCALES = (1.0, 1.6, 2.4)
ARC_ONSET_FRACS = (0.08, 0.20, 0.35, 0.50)


def _suite_trace_seed(master_seed: int, index: int) -> int:
    # Stable 63-bit per-trace seed derived from the master seed.
    mixed = np.random.SeedSequence((master_seed, index)).generate_state(1, np.uint64)[0]
    return int(mixed >> np.uint64(1))


def synth_suite(profiles: list[HardwareProfile], per_category_count: int, seed: int,
                duration: float = 0.6,
                frame_len: int = DEFAULT_FRAME_LEN) -> tuple[DatasetManifest, list[SignalTrace]]:
    """Generate the full labeled suite for a list of hardware profiles.

    Per profile and per count: one trace for every nuisance sub-condition
    (sum over the category table) plus one arc trace per point of the arc
    operating grid.  Returns the manifest and the traces in manifest order.
    """
    if per_category_count < 1:
        raise ValueError(f"per_category_count must be >= 1, got {per_category_count}")
    entries: list[TraceEntry] = []
    traces: list[SignalTrace] = []
    index = 0
    for profile in profiles:
        for category, n_subs in CATEGORY_CONDITIONS.items():
            for sub in range(n_subs):
                for rep in range(per_category_count):
                    t_seed = _suite_trace_seed(seed, index)
                    scenario = ScenarioSpec(category, duration, t_seed, sub_condition=sub)
                    trace = synth_normal(profile, scenario, frame_len)
                    trace.trace_id = f"{profile.profile_id}-{category}-{sub}-{rep}"
                    traces.append(trace)
                    entries.append(_entry_for(trace, sub, rep, t_seed))
                    index += 1
        arc_grid = [
            (ds, gs, of)
            for ds in ARC_DC_SCALES
            for gs in ARC_GAIN_SCALES
            for of in ARC_ONSET_FRACS
        ]
        for rep in range(per_category_count):
            for variant, (dc_scale, gain_scale, onset_frac) in enumerate(arc_grid):
                t_seed = _suite_trace_seed(seed, index)
                arc_profile = replace(profile, dc_level=profile.dc_level * dc_scale)
                n = int(duration * profile.sample_rate)
                arc = default_arc_params(arc_profile, int(onset_frac * n), gain_scale)
                scenario = ScenarioSpec("arc", duration, t_seed)
                trace = synth_arc(arc_profile, arc, scenario, frame_len)
                trace.trace_id = f"{profile.profile_id}-arc-{variant}-{rep}"
                traces.append(trace)
                entries.append(_entry_for(trace, variant, rep, t_seed))
                index += 1
    manifest = DatasetManifest(
        seed=seed,
        per_category_count=per_category_count,
        duration=duration,
        profile_ids=tuple(p.profile_id for p in profiles),
        entries=entries,
    )
    return manifest, traces


def _entry_for(trace: SignalTrace, sub: int, rep: int, seed: int) -> TraceEntry:
    return TraceEntry(
        trace_id=trace.trace_id,
        profile_id=trace.profile_id,
        category=trace.category,
        sub_condition=sub,
        repetition=rep,
        seed=seed,
        n_samples=len(trace.samples),
        sample_rate=trace.sample_rate,
        frame_len=trace.frame_len,
        onset_index=trace.onset_index,
        frame_labels=tuple(int(v) for v in trace.frame_labels),
    )
