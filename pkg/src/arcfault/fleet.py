"""Deterministic discrete-event simulation of a device fleet and cloud.

Devices stream framed detection over per-device trace schedules.  Alarms
travel to the cloud as wire messages, get verified against simulation
ground truth, and verified false alarms fill the adaptation batch.  A
full batch triggers stage-1 evolution, temporal validation, and a canary
rollout whose monitoring window feeds the promote/rollback decision.

Events are processed in (time, insertion-order); every random draw comes
from the run seed, so identical inputs produce byte-identical reports.
The candidate monitoring window covers the canary devices after their
swap; the baseline window is the same devices' trailing history just
before the swap, which keeps the comparison on the same hardware.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .adapt import (
    AdaptationBatch,
    AlarmRecord,
    CanaryConfig,
    CanaryDecision,
    EvolutionConfig,
    LabelOracle,
    WindowStats,
    canary_decide,
    capture_alarm,
    stage1_evolve,
    temporal_validate,
    verify,
)
from .dataio import FeatureDataset, featurize_trace, model_from_bytes, model_to_bytes
from .detector import DetectorConfig, DetectorState, detect_step
from .features import FeatureConfig
from .protocol import Message, MessageType, decode_message, encode_message, json_body, parse_json_body
from .rng import derive_seed, make_rng
from .synth import (
    NUISANCE_CATEGORIES,
    DriftSpec,
    HardwareProfile,
    ScenarioSpec,
    SignalTrace,
    apply_drift,
    default_arc_params,
    synth_arc,
    synth_normal,
)

FRAME_KIND = 0
UPLOAD_KIND = 1
OTA_ACK_KIND = 2
DECIDE_KIND = 3


@dataclass(frozen=True)
class FleetDeviceSpec:
    device_id: str
    profile: HardwareProfile
    drift: DriftSpec | None = None


@dataclass(frozen=True)
class SchedulePlan:
    """Per-device streaming plan: rounds of one normal trace then one arc
    trace, cycling through the nuisance categories."""

    rounds: int = 6
    trace_duration: float = 0.25
    arc_every: int = 2  # an arc trace after every `arc_every`-th normal trace

    def __post_init__(self) -> None:
        if self.rounds < 1 or self.arc_every < 1:
            raise ValueError("rounds and arc_every must be >= 1")


@dataclass(frozen=True)
class FleetConfig:
    batch_threshold: int = 48
    latency_s: float = 0.010
    max_adaptations: int = 1
    canary: CanaryConfig = CanaryConfig(canary_fraction=0.1, window_frames=120)
    evolution: EvolutionConfig = EvolutionConfig()
    detector: DetectorConfig = DetectorConfig()
    features: FeatureConfig = FeatureConfig()


@dataclass
class _DeviceRuntime:
    spec: FleetDeviceSpec
    effective_profile: HardwareProfile
    traces: list[SignalTrace]
    features: list[np.ndarray]
    version: str
    state: DetectorState = field(default_factory=DetectorState)
    # per-frame outcome log: (time, version, label, alarm_fired)
    outcomes: list[tuple[float, str, int, bool]] = field(default_factory=list)
    # arc event log: (time, version, detected)
    arc_events: list[tuple[float, str, bool]] = field(default_factory=list)
    version_history: list[tuple[float, str]] = field(default_factory=list)
    alarm_in_current_trace: bool = False
    proba_cache: dict = field(default_factory=dict)


@dataclass
class CloudNode:
    """Model registry, verification queue routing, and rollout bookkeeping."""

    registry: dict[str, nn.Model] = field(default_factory=dict)
    initial_version: str = "v1"
    baseline_version: str = "v1"
    candidate_version: str | None = None
    oracle: LabelOracle = field(default_factory=LabelOracle)
    batch: AdaptationBatch = field(default_factory=AdaptationBatch)
    archive_records: int = 0
    adaptation_rounds: int = 0
    decisions: list[dict] = field(default_factory=list)
    canary_roster: tuple[str, ...] = ()
    search_logs: list[dict] = field(default_factory=list)

    def next_version(self) -> str:
        return f"v{len(self.registry) + 1}"


def canary_roster(device_ids: list[str], fraction: float) -> tuple[str, ...]:
    """First ceil(fraction * fleet) devices by sorted id (deterministic)."""
    count = math.ceil(fraction * len(device_ids))
    return tuple(sorted(device_ids)[:count])


def ota_deploy(cloud: CloudNode, version: str, device_ids: list[str],
               canary: bool, now: float, latency_s: float):
    """Schedule OTA pushes; returns [(ack_time, device_id, version, push_bytes)].

    With canary=True the targets are restricted to the cloud's roster.
    Devices swap at the ack event; the push body is the model file itself.
    """
    if version not in cloud.registry:
        raise KeyError(f"version {version!r} not in the registry")
    targets = [d for d in device_ids if not canary or d in cloud.canary_roster]
    push = encode_message(Message(MessageType.OTA_PUSH, model_to_bytes(cloud.registry[version])))
    return [(now + latency_s, device_id, version, push) for device_id in sorted(targets)]


def _window_stats(outcomes, arc_events, t_lo: float, t_hi: float,
                  window_frames: int, version: str | None = None) -> WindowStats:
    """Aggregate device outcomes with t_lo < time <= t_hi into WindowStats."""
    normal = false_alarms = events = detected = 0
    for time, ver, label, alarm in outcomes:
        if not (t_lo < time <= t_hi) or (version is not None and ver != version):
            continue
        if label == 0:
            normal += 1
            false_alarms += int(alarm)
    for time, ver, ok in arc_events:
        if not (t_lo < time <= t_hi) or (version is not None and ver != version):
            continue
        events += 1
        detected += int(ok)
    return WindowStats(
        window_frames=window_frames,
        normal_frames=normal,
        false_alarms=false_alarms,
        arc_events=events,
        detected_events=detected,
    )


def _device_schedule(spec: FleetDeviceSpec, plan: SchedulePlan, seed: int,
                     frame_len: int) -> tuple[HardwareProfile, list[SignalTrace]]:
    profile = spec.profile if spec.drift is None else apply_drift(spec.profile, spec.drift)
    traces: list[SignalTrace] = []
    idx = 0
    for rnd in range(plan.rounds):
        for k in range(plan.arc_every):
            cat = NUISANCE_CATEGORIES[(rnd * plan.arc_every + k) % len(NUISANCE_CATEGORIES)]
            t_seed = _derive_seed(seed, spec.device_id, "normal", idx)
            scenario = ScenarioSpec(cat, plan.trace_duration, t_seed)
            trace = synth_normal(profile, scenario, frame_len)
            trace.trace_id = f"{spec.device_id}-n{idx}"
            traces.append(trace)
            idx += 1
        t_seed = _derive_seed(seed, spec.device_id, "arc", idx)
        n = int(plan.trace_duration * profile.sample_rate)
        arc = default_arc_params(profile, onset_index=n // 4)
        trace = synth_arc(profile, arc, ScenarioSpec("arc", plan.trace_duration, t_seed), frame_len)
        trace.trace_id = f"{spec.device_id}-a{idx}"
        traces.append(trace)
        idx += 1
    return profile, traces


def _derive_seed(seed: int, *parts) -> int:
    return derive_seed((seed,) + parts)


def _holdout_streams(devices: list[FleetDeviceSpec], plan: SchedulePlan, seed: int,
                     frame_len: int) -> list[SignalTrace]:
    """Validation traces never used in evolution: source nuisance and arc
    streams plus novel-regime (drifted) variants."""
    streams: list[SignalTrace] = []
    profiles = {d.profile.profile_id: d.profile for d in devices}
    drifted = {}
    for d in devices:
        if d.drift is not None:
            p = apply_drift(d.profile, d.drift)
            drifted[p.profile_id + "-drift"] = p
    idx = 0
    for tag, profile in list(profiles.items()) + list(drifted.items()):
        for cat in ("steady", "load_switching", "harmonic_grid"):
            t_seed = _derive_seed(seed, "holdout", tag, idx)
            trace = synth_normal(profile, ScenarioSpec(cat, plan.trace_duration, t_seed), frame_len)
            trace.trace_id = f"holdout-{tag}-{cat}-{idx}"
            streams.append(trace)
            idx += 1
        t_seed = _derive_seed(seed, "holdout-arc", tag, idx)
        n = int(plan.trace_duration * profile.sample_rate)
        arc = default_arc_params(profile, onset_index=n // 4)
        trace = synth_arc(profile, arc, ScenarioSpec("arc", plan.trace_duration, t_seed), frame_len)
        trace.trace_id = f"holdout-{tag}-arc-{idx}"
        streams.append(trace)
        idx += 1
    return streams


def run_sim(devices: list[FleetDeviceSpec], plan: SchedulePlan, model: nn.Model,
            archive: FeatureDataset, config: FleetConfig, seed: int) -> dict:
    """Drive the full fleet loop; returns the report as a plain dict.

    The report is serializable with fleet_report_bytes and reproducible
    bit-for-bit from (devices, plan, model, archive, config, seed).
    """
    if not devices:
        raise ValueError("fleet needs at least one device")
    ids = [d.device_id for d in devices]
    if len(set(ids)) != len(ids):
        raise ValueError("device ids must be unique")

    feat = config.features
    frame_period = feat.frame_len / devices[0].profile.sample_rate
    cloud = CloudNode(batch=AdaptationBatch(threshold=config.batch_threshold))
    cloud.registry[model.version] = model
    cloud.initial_version = model.version
    cloud.baseline_version = model.version
    cloud.canary_roster = canary_roster(ids, config.canary.canary_fraction)
    rng = make_rng((seed, "fleet"))

    runtimes: dict[str, _DeviceRuntime] = {}
    for spec in devices:
        profile, traces = _device_schedule(spec, plan, seed, feat.frame_len)
        feats = [featurize_trace(t, feat).x for t in traces]
        for t in traces:
            cloud.oracle.add_trace(t)
        runtimes[spec.device_id] = _DeviceRuntime(
            spec=spec, effective_profile=profile, traces=traces, features=feats,
            version=model.version, version_history=[(0.0, model.version)],
        )

    holdout = _holdout_streams(devices, plan, seed, feat.frame_len)

    # Event queue: (time, seq, kind, payload)
    heap: list[tuple[float, int, int, tuple]] = []
    seq = 0

    def push(time: float, kind: int, payload: tuple):
        nonlocal seq
        heapq.heappush(heap, (time, seq, kind, payload))
        seq += 1

    for device_id, rt in sorted(runtimes.items()):
        offset = 0
        for trace_idx in range(len(rt.traces)):
            n_frames = rt.features[trace_idx].shape[0]
            for frame_idx in range(n_frames):
                push((offset + frame_idx + 1) * frame_period, FRAME_KIND,
                     (device_id, trace_idx, frame_idx))
            offset += n_frames

    monitoring = {
        "active": False,
        "open_time": None,
        "counts": {},
        "pending_acks": set(),
        "decided": False,
        "baseline": None,
    }

    def device_proba(rt: _DeviceRuntime, trace_idx: int, frame_idx: int) -> float:
        key = (trace_idx, rt.version)
        if key not in rt.proba_cache:
            rt.proba_cache = {key: nn.predict_proba(cloud.registry[rt.version],
                                                    rt.features[trace_idx])}
        return float(rt.proba_cache[key][frame_idx])

    def start_adaptation(now: float):
        cloud.adaptation_rounds += 1
        evo_rng = make_rng((seed, "evolve", cloud.adaptation_rounds))
        candidate, log = stage1_evolve(
            cloud.registry[cloud.baseline_version], cloud.batch, archive,
            config.evolution, evo_rng,
        )
        cloud.search_logs.append(log)
        validation = temporal_validate(candidate, holdout, config.detector, feat)
        if not validation.passed:
            cloud.decisions.append({"time": now, "decision": "validation_failed",
                                    "version": None})
            return
        version = cloud.next_version()
        candidate.version = version
        cloud.registry[version] = candidate
        cloud.candidate_version = version
        for ack_time, device_id, ver, push_bytes in ota_deploy(
            cloud, version, ids, canary=True, now=now, latency_s=config.latency_s
        ):
            push(ack_time, OTA_ACK_KIND, (device_id, ver, push_bytes))
            monitoring["pending_acks"].add(device_id)
        monitoring["active"] = True
        monitoring["decided"] = False
        monitoring["counts"] = {d: 0 for d in cloud.canary_roster}

    def open_window(now: float):
        win = config.canary.window_frames
        baseline_parts = []
        for device_id in cloud.canary_roster:
            rt = runtimes[device_id]
            swap_time = rt.version_history[-1][0]
            baseline_parts.append(
                _window_stats(rt.outcomes, rt.arc_events,
                              swap_time - win * frame_period - 1e-9, swap_time, win)
            )
        monitoring["open_time"] = now
        monitoring["baseline"] = _merge_stats(baseline_parts, win)

    def finish_window(now: float):
        win = config.canary.window_frames
        candidate_parts = []
        for device_id in cloud.canary_roster:
            rt = runtimes[device_id]
            candidate_parts.append(
                _window_stats(rt.outcomes, rt.arc_events,
                              monitoring["open_time"], now, win,
                              version=cloud.candidate_version)
            )
        candidate_stats = _merge_stats(candidate_parts, win)
        decision = canary_decide(candidate_stats, monitoring["baseline"], config.canary)
        cloud.decisions.append({
            "time": now,
            "decision": decision.decision,
            "version": cloud.candidate_version,
            "candidate_stats": decision.candidate.as_dict(),
            "baseline_stats": decision.baseline.as_dict(),
            "rule_trace": decision.rule_trace,
        })
        if decision.decision == "promote":
            cloud.baseline_version = cloud.candidate_version
            for ack_time, device_id, ver, push_bytes in ota_deploy(
                cloud, cloud.candidate_version, ids, canary=False,
                now=now, latency_s=config.latency_s,
            ):
                if runtimes[device_id].version != ver:
                    push(ack_time, OTA_ACK_KIND, (device_id, ver, push_bytes))
        else:
            for ack_time, device_id, ver, push_bytes in ota_deploy(
                cloud, cloud.baseline_version, list(cloud.canary_roster),
                canary=True, now=now, latency_s=config.latency_s,
            ):
                push(ack_time, OTA_ACK_KIND, (device_id, ver, push_bytes))
        cloud.candidate_version = None
        monitoring["active"] = False
        monitoring["decided"] = True

    while heap:
        now, _, kind, payload = heapq.heappop(heap)
        if kind == FRAME_KIND:
            device_id, trace_idx, frame_idx = payload
            rt = runtimes[device_id]
            trace = rt.traces[trace_idx]
            label = int(trace.frame_labels[frame_idx])
            p_arc = device_proba(rt, trace_idx, frame_idx)
            rt.state, alarm = detect_step(rt.state, p_arc, config.detector)
            if alarm:
                rt.state = DetectorState()
                record = capture_alarm(
                    device_id, now,
                    trace.samples[frame_idx * feat.frame_len : (frame_idx + 1) * feat.frame_len],
                    feat, rt.effective_profile.profile_id, trace.category,
                    rt.version, trace.trace_id, frame_idx,
                )
                body = json_body({
                    "device_id": device_id, "trace_id": trace.trace_id,
                    "frame_index": frame_idx, "time": now, "version": rt.version,
                    "frame": [float(v) for v in record.frame],
                })
                push(now + config.latency_s, UPLOAD_KIND,
                     (device_id, encode_message(Message(MessageType.ALARM_UPLOAD, body))))
                if label == 1:
                    rt.alarm_in_current_trace = True
            rt.outcomes.append((now, rt.version, label, alarm and label == 0))
            if frame_idx == rt.features[trace_idx].shape[0] - 1:
                if np.any(trace.frame_labels == 1):
                    rt.arc_events.append((now, rt.version, rt.alarm_in_current_trace))
                rt.alarm_in_current_trace = False
                rt.state = DetectorState()  # detector re-arms between traces
            if monitoring["active"] and not monitoring["pending_acks"] \
                    and device_id in monitoring["counts"] \
                    and monitoring["counts"][device_id] < config.canary.window_frames:
                monitoring["counts"][device_id] += 1
                if all(c >= config.canary.window_frames for c in monitoring["counts"].values()):
                    push(now, DECIDE_KIND, ())
        elif kind == UPLOAD_KIND:
            device_id, wire = payload
            message = decode_message(wire)
            info = parse_json_body(message)
            frame = np.array(info["frame"], dtype=np.float32)
            record = capture_alarm(
                info["device_id"], info["time"], frame, feat,
                runtimes[device_id].effective_profile.profile_id,
                "upload", info["version"], info["trace_id"], info["frame_index"],
            )
            verdict = verify(record, cloud.oracle)
            if verdict.verdict == "true_arc":
                cloud.archive_records += 1
            else:
                cloud.batch.add(record)
                if (cloud.batch.ready and cloud.adaptation_rounds < config.max_adaptations
                        and cloud.candidate_version is None and not monitoring["active"]):
                    start_adaptation(now)
        elif kind == OTA_ACK_KIND:
            device_id, version, wire = payload
            pushed_model = model_from_bytes(decode_message(wire).body)
            assert pushed_model.version == version
            rt = runtimes[device_id]
            if rt.version != version:
                rt.version = version
                rt.proba_cache = {}
                rt.version_history.append((now, version))
            if monitoring["active"] and device_id in monitoring["pending_acks"]:
                monitoring["pending_acks"].discard(device_id)
                if not monitoring["pending_acks"]:
                    open_window(now)
        elif kind == DECIDE_KIND:
            if monitoring["active"] and not monitoring["decided"]:
                finish_window(now)

    return _build_report(runtimes, cloud, config, seed)


def _merge_stats(parts: list[WindowStats], window_frames: int) -> WindowStats:
    return WindowStats(
        window_frames=window_frames,
        normal_frames=sum(p.normal_frames for p in parts),
        false_alarms=sum(p.false_alarms for p in parts),
        arc_events=sum(p.arc_events for p in parts),
        detected_events=sum(p.detected_events for p in parts),
    )


def _segment_precision(rt: _DeviceRuntime, initial_version: str, before: bool):
    tp = fp = 0
    for _, version, _, false_alarm in rt.outcomes:
        if (version == initial_version) != before:
            continue
        if false_alarm:
            fp += 1
    for _, version, detected in rt.arc_events:
        if (version == initial_version) != before:
            continue
        tp += int(detected)
    if tp + fp == 0:
        return None, tp, fp
    return tp / (tp + fp), tp, fp


def _build_report(runtimes: dict[str, _DeviceRuntime], cloud: CloudNode,
                  config: FleetConfig, seed: int) -> dict:
    initial = cloud.initial_version
    devices = []
    metrics_reports = []
    for device_id in sorted(runtimes):
        rt = runtimes[device_id]
        prec_before, tp_b, fp_b = _segment_precision(rt, initial, before=True)
        prec_after, tp_a, fp_a = _segment_precision(rt, initial, before=False)
        report_body = json_body({"device_id": device_id, "version": rt.version})
        metrics_reports.append(
            parse_json_body(decode_message(encode_message(
                Message(MessageType.METRICS_REPORT, report_body))))
        )
        devices.append({
            "device_id": device_id,
            "drifted": rt.spec.drift is not None,
            "canary": device_id in cloud.canary_roster,
            "final_version": rt.version,
            "version_history": [[t, v] for t, v in rt.version_history],
            "alarms_before": tp_b + fp_b,
            "alarms_after": tp_a + fp_a,
            "true_positives_before": tp_b,
            "false_positives_before": fp_b,
            "true_positives_after": tp_a,
            "false_positives_after": fp_a,
            "precision_before": prec_before,
            "precision_after": prec_after,
        })
    return {
        "seed": seed,
        "canary_roster": list(cloud.canary_roster),
        "batch_threshold": config.batch_threshold,
        "adaptation_rounds": cloud.adaptation_rounds,
        "decisions": cloud.decisions,
        "archive_records": cloud.archive_records,
        "false_alarm_records": len(cloud.batch.records),
        "devices": devices,
        "metrics_reports": metrics_reports,
        "aggregate": {
            "alarms": sum(d["alarms_before"] + d["alarms_after"] for d in devices),
            "false_positives": sum(
                d["false_positives_before"] + d["false_positives_after"] for d in devices
            ),
            "true_positives": sum(
                d["true_positives_before"] + d["true_positives_after"] for d in devices
            ),
        },
    }


def fleet_report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, separators=(",", ":")) + "\n").encode()


def collect_fleet_metrics(report: dict) -> dict:
    """Per-device and aggregate alarm statistics from a finished report."""
    rows = []
    for d in report["devices"]:
        rows.append({
            "device_id": d["device_id"],
            "alarms": d["alarms_before"] + d["alarms_after"],
            "precision_before": d["precision_before"],
            "precision_after": d["precision_after"],
        })
    return {"devices": rows, "aggregate": report["aggregate"]}
