"""Dual-threshold event decision: frame probability plus debounce counter.

A frame whose arc probability exceeds the probability threshold counts as
positive; an alarm is declared only after count_threshold consecutive
positive frames, which suppresses single-frame nuisance spikes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import featurize_trace
from .features import FeatureConfig
from .synth import SignalTrace


class DetectorLatched(RuntimeError):
    """detect_step was called on a latched detector without a reset."""


@dataclass(frozen=True)
class DetectorConfig:
    """p_threshold gates single frames; count_threshold gates the event.

    reset_policy "zero" clears the counter on any negative frame (strict
    consecutiveness); "decrement" steps it down by one instead and is a
    documented non-default alternative.
    """

    p_threshold: float = 0.5
    count_threshold: int = 8
    reset_policy: str = "zero"

    def __post_init__(self) -> None:
        if not 0.0 < self.p_threshold < 1.0:
            raise ValueError(f"p_threshold must be in (0, 1), got {self.p_threshold}")
        if self.count_threshold < 1:
            raise ValueError(
                f"count_threshold must be >= 1, got {self.count_threshold}"
            )
        if self.reset_policy not in ("zero", "decrement"):
            raise ValueError(f"unknown reset_policy {self.reset_policy!r}")


@dataclass(frozen=True)
class DetectorState:
    count: int = 0
    latched: bool = False


def detect_step(state: DetectorState, p_arc: float,
                config: DetectorConfig) -> tuple[DetectorState, bool]:
    """Advance the counter by one frame; returns (new state, alarm)."""
    if state.latched:
        raise DetectorLatched("latched detector requires a reset before stepping")
    positive = p_arc > config.p_threshold
    if positive:
        count = min(state.count + 1, config.count_threshold)
    elif config.reset_policy == "zero":
        count = 0
    else:
        count = max(state.count - 1, 0)
    alarm = positive and count >= config.count_threshold
    return DetectorState(count=count, latched=alarm), alarm


@dataclass
class EventReport:
    """Streaming detection outcome over one trace."""

    alarms: list[int] = field(default_factory=list)
    p_arc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_frames: int = 0
    first_arc_frame: int | None = None
    latency_frames: int | None = None
    latency_ms: float | None = None

    def as_dict(self) -> dict:
        return {
            "alarms": list(self.alarms),
            "n_frames": self.n_frames,
            "first_arc_frame": self.first_arc_frame,
            "latency_frames": self.latency_frames,
            "latency_ms": self.latency_ms,
            "p_arc": [float(p) for p in self.p_arc],
        }


def stream_alarms(p_arc: np.ndarray, config: DetectorConfig) -> list[int]:
    """Run the counter over a probability stream; re-arms after each alarm."""
    state = DetectorState()
    alarms = []
    for i, p in enumerate(p_arc):
        state, alarm = detect_step(state, float(p), config)
        if alarm:
            alarms.append(i)
            state = DetectorState()
    return alarms


def run_detector(model: nn.Model, trace: SignalTrace, det_config: DetectorConfig,
                 feat_config: FeatureConfig) -> EventReport:
    """Featurize a trace frame by frame and stream the alarm counter.

    Latency is measured from the first arc-labeled frame to the first
    alarm, in frames and in trace milliseconds.
    """
    dataset = featurize_trace(trace, feat_config)
    p_arc = nn.predict_proba(model, dataset.x)
    alarms = stream_alarms(p_arc, det_config)
    arc_frames = np.nonzero(trace.frame_labels[: len(p_arc)])[0]
    first_arc = int(arc_frames[0]) if arc_frames.size else None
    report = EventReport(
        alarms=alarms,
        p_arc=p_arc,
        n_frames=len(p_arc),
        first_arc_frame=first_arc,
    )
    if alarms and first_arc is not None:
        report.latency_frames = alarms[0] - first_arc
        report.latency_ms = (
            report.latency_frames * feat_config.frame_len / trace.sample_rate * 1000.0
        )
    return report
