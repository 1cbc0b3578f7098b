"""Run configuration: one JSON file validated up front, dotted overrides.

Unknown keys are rejected everywhere so a typo fails the run before any
work starts.  Every section is materialized into its owning dataclass,
which enforces the value constraints.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .adapt import CanaryConfig, EvolutionConfig
from .detector import DetectorConfig
from .features import FeatureConfig
from .fleet import FleetConfig, FleetDeviceSpec, SchedulePlan
from .nn import ArchSpec
from .synth import DEFAULT_PROFILE_A, DEFAULT_PROFILE_B, DriftSpec, HardwareProfile
from .train import TrainConfig
from .transfer import TransferConfig


class ConfigError(ValueError):
    """Configuration failed validation; the message names the field."""


_PROFILE_KEYS = {
    "profile_id", "sample_rate", "dc_level", "switching_freq",
    "harmonic_amps", "noise_floor", "mppt_perturb", "resonances",
}
_DRIFT_KEYS = {"noise_floor_scale", "harmonic_shift", "added_resonance", "season_gain"}
_SECTION_KEYS = {
    "seed", "profiles", "drift", "suite", "features", "arch", "train",
    "transfer", "detector", "evolution", "canary", "fleet", "scale", "sweeps",
}
_SUITE_KEYS = {"per_category_count", "duration"}
_FLEET_KEYS = {
    "n_devices", "n_drifted", "rounds", "trace_duration", "arc_every",
    "batch_threshold", "latency_s", "max_adaptations",
}
_SCALE_KEYS = {"fractions"}
_SWEEP_KEYS = {"source_fractions", "target_fractions"}


def _check_keys(section: str, mapping: dict, allowed: set[str]) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


@dataclass
class RunConfig:
    seed: int = 0
    profiles: list[HardwareProfile] = field(
        default_factory=lambda: [DEFAULT_PROFILE_A, DEFAULT_PROFILE_B]
    )
    drift: DriftSpec | None = None
    per_category_count: int = 1
    duration: float = 0.6
    features: FeatureConfig = field(default_factory=FeatureConfig)
    arch: ArchSpec = field(default_factory=ArchSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    canary: CanaryConfig = field(default_factory=CanaryConfig)
    fleet: dict = field(default_factory=dict)
    scale_fractions: list[float] = field(
        default_factory=lambda: [0.05, 0.1, 0.2, 0.4, 0.8, 1.0]
    )
    source_fractions: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.3, 0.8])
    target_fractions: list[float] = field(default_factory=lambda: [0.005, 0.01, 0.1])
    raw: dict = field(default_factory=dict)


def _build_profile(entry: dict, index: int) -> HardwareProfile:
    if not isinstance(entry, dict):
        raise ConfigError(f"profiles[{index}] must be an object")
    _check_keys(f"profiles[{index}]", entry, _PROFILE_KEYS)
    if "profile_id" not in entry:
        raise ConfigError(f"profiles[{index}]: profile_id is required")
    kwargs = {k: _tupled(v) for k, v in entry.items()}
    try:
        return HardwareProfile(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"profiles[{index}]: {exc}") from exc


def _build_section(section: str, mapping: dict, cls, rename: dict | None = None):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{section} must be an object")
    rename = rename or {}
    fields = {f for f in cls.__dataclass_fields__}  # noqa: C401 - set of names
    allowed = (fields - set(rename.values())) | set(rename)
    _check_keys(section, mapping, allowed)
    kwargs = {rename.get(k, k): _tupled(v) for k, v in mapping.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def parse_config(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys("config", payload, _SECTION_KEYS)
    cfg = RunConfig(raw=copy.deepcopy(payload))

    if "seed" in payload:
        if not isinstance(payload["seed"], int):
            raise ConfigError("seed must be an integer")
        cfg.seed = payload["seed"]
    if "profiles" in payload:
        if not isinstance(payload["profiles"], list) or not payload["profiles"]:
            raise ConfigError("profiles must be a non-empty list")
        cfg.profiles = [_build_profile(p, i) for i, p in enumerate(payload["profiles"])]
    if "drift" in payload:
        cfg.drift = _build_section("drift", payload["drift"], DriftSpec)
    if "suite" in payload:
        _check_keys("suite", payload["suite"], _SUITE_KEYS)
        suite = payload["suite"]
        if "per_category_count" in suite:
            if not isinstance(suite["per_category_count"], int) or suite["per_category_count"] < 1:
                raise ConfigError("suite.per_category_count must be a positive integer")
            cfg.per_category_count = suite["per_category_count"]
        if "duration" in suite:
            if not isinstance(suite["duration"], (int, float)) or suite["duration"] <= 0:
                raise ConfigError("suite.duration must be a positive number")
            cfg.duration = float(suite["duration"])
    if "features" in payload:
        cfg.features = _build_section("features", payload["features"], FeatureConfig)
    if "arch" in payload:
        cfg.arch = _build_section("arch", payload["arch"], ArchSpec)
    if "train" in payload:
        cfg.train = _build_section("train", payload["train"], TrainConfig)
    if "transfer" in payload:
        cfg.transfer = _build_section(
            "transfer", payload["transfer"], TransferConfig, rename={"lambda": "lam"}
        )
    if "detector" in payload:
        cfg.detector = _build_section("detector", payload["detector"], DetectorConfig)
    if "evolution" in payload:
        cfg.evolution = _build_section("evolution", payload["evolution"], EvolutionConfig)
    if "canary" in payload:
        cfg.canary = _build_section("canary", payload["canary"], CanaryConfig)
    if "fleet" in payload:
        _check_keys("fleet", payload["fleet"], _FLEET_KEYS)
        cfg.fleet = payload["fleet"]
    if "scale" in payload:
        _check_keys("scale", payload["scale"], _SCALE_KEYS)
        if "fractions" in payload["scale"]:
            cfg.scale_fractions = _fraction_list("scale.fractions", payload["scale"]["fractions"])
    if "sweeps" in payload:
        _check_keys("sweeps", payload["sweeps"], _SWEEP_KEYS)
        sweeps = payload["sweeps"]
        if "source_fractions" in sweeps:
            cfg.source_fractions = _fraction_list("sweeps.source_fractions", sweeps["source_fractions"])
        if "target_fractions" in sweeps:
            cfg.target_fractions = _fraction_list("sweeps.target_fractions", sweeps["target_fractions"])
    return cfg


def _fraction_list(name: str, value) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name} must be a non-empty list")
    out = []
    for v in value:
        if not isinstance(v, (int, float)) or not 0 < v <= 1:
            raise ConfigError(f"{name}: fractions must lie in (0, 1], got {v}")
        out.append(float(v))
    return out


def fleet_setup(cfg: RunConfig) -> tuple[list[FleetDeviceSpec], SchedulePlan, FleetConfig]:
    """Materialize the fleet section into simulation inputs."""
    f = cfg.fleet
    n_devices = f.get("n_devices", 10)
    n_drifted = f.get("n_drifted", 3)
    if not isinstance(n_devices, int) or n_devices < 1:
        raise ConfigError("fleet.n_devices must be a positive integer")
    if not isinstance(n_drifted, int) or not 0 <= n_drifted <= n_devices:
        raise ConfigError("fleet.n_drifted must be in [0, n_devices]")
    drift = cfg.drift or DriftSpec(
        noise_floor_scale=3.0, added_resonance=(70_000.0, 0.15, 8.0)
    )
    base = cfg.profiles[0]
    devices = [
        FleetDeviceSpec(
            device_id=f"dev-{i:02d}",
            profile=base,
            drift=drift if i < n_drifted else None,
        )
        for i in range(n_devices)
    ]
    plan = SchedulePlan(
        rounds=f.get("rounds", 6),
        trace_duration=f.get("trace_duration", 0.25),
        arc_every=f.get("arc_every", 2),
    )
    fleet_config = FleetConfig(
        batch_threshold=f.get("batch_threshold", 48),
        latency_s=f.get("latency_s", 0.010),
        max_adaptations=f.get("max_adaptations", 1),
        canary=cfg.canary,
        evolution=cfg.evolution,
        detector=cfg.detector,
        features=cfg.features,
    )
    return devices, plan, fleet_config


def apply_overrides(payload: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=json_value`` strings onto the raw config payload."""
    result = copy.deepcopy(payload)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, raw_value = item.split("=", 1)
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        node = result
        parts = path.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {path!r} crosses a non-object value")
        node[parts[-1]] = value
    return result


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    payload: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if overrides:
        payload = apply_overrides(payload, overrides)
    return parse_config(payload)
