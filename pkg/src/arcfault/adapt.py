"""Self-adaptive model updates: alarm verification, evolutionary search,
temporal validation, and canary promote/rollback rules.

Verified false alarms accumulate into an adaptation batch.  Stage 1
evolves fine-tuning hyperparameters (the architecture is untouched, so
inference cost is preserved by construction); stage 2, gated on stage-1
saturation, mutates the architecture itself under a strict FLOPs budget
checked before any candidate is trained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import FeatureDataset
from .detector import DetectorConfig, run_detector
from .features import FeatureConfig, featurize
from .metrics import macro_f1_score
from .synth import SignalTrace
from .transfer import TransferConfig, adapt
from .train import SingleClassData, TrainConfig, fit, stratified_split

SATURATION_MIN_GAIN = 1e-3


class BatchNotReady(RuntimeError):
    """Adaptation requested before the novelty batch filled up."""


class StageGate(RuntimeError):
    """Stage 2 requested without a stage-1 saturation flag."""


class OracleCoverage(KeyError):
    """The label oracle has no ground truth for the record's trace."""


class SearchSpaceExhausted(RuntimeError):
    """No architecture candidate satisfied the compute budget."""


# ---------------------------------------------------------------------------
# Alarm capture and verification


@dataclass
class AlarmRecord:
    """Everything needed to re-run and audit one device alarm."""

    device_id: str
    timestamp: float
    frame: np.ndarray
    vector: np.ndarray
    profile_id: str
    category: str
    model_version: str
    trace_id: str
    frame_index: int


@dataclass(frozen=True)
class VerificationResult:
    verdict: str  # "true_arc" | "false_alarm"
    source: str = "oracle"


class LabelOracle:
    """Ground-truth frame labels per trace id (the simulation stand-in
    for expert verification)."""

    def __init__(self) -> None:
        self._labels: dict[str, np.ndarray] = {}

    def add_trace(self, trace: SignalTrace) -> None:
        if not trace.trace_id:
            raise ValueError("trace needs a trace_id for oracle coverage")
        self._labels[trace.trace_id] = np.asarray(trace.frame_labels, dtype=np.uint8)

    def label(self, trace_id: str, frame_index: int) -> int:
        if trace_id not in self._labels:
            raise OracleCoverage(f"oracle has no labels for trace {trace_id!r}")
        return int(self._labels[trace_id][frame_index])


def capture_alarm(device_id: str, timestamp: float, frame: np.ndarray,
                  feat_config: FeatureConfig, profile_id: str, category: str,
                  model_version: str, trace_id: str, frame_index: int) -> AlarmRecord:
    """Build the upload record for a latched frame; the stored vector is
    re-derivable from the raw frame."""
    return AlarmRecord(
        device_id=device_id,
        timestamp=timestamp,
        frame=np.asarray(frame, dtype=np.float32).copy(),
        vector=featurize(frame, feat_config),
        profile_id=profile_id,
        category=category,
        model_version=model_version,
        trace_id=trace_id,
        frame_index=frame_index,
    )


def verify(record: AlarmRecord, oracle: LabelOracle) -> VerificationResult:
    label = oracle.label(record.trace_id, record.frame_index)
    return VerificationResult(verdict="true_arc" if label == 1 else "false_alarm")


@dataclass
class AdaptationBatch:
    """Accumulates verified false alarms until the readiness threshold."""

    threshold: int = 64
    records: list[AlarmRecord] = field(default_factory=list)

    def add(self, record: AlarmRecord) -> None:
        self.records.append(record)

    @property
    def ready(self) -> bool:
        return len(self.records) >= self.threshold

    def vectors(self) -> np.ndarray:
        return np.stack([r.vector for r in self.records])


# ---------------------------------------------------------------------------
# Evolution configuration


@dataclass(frozen=True)
class EvolutionConfig:
    population: int = 8
    generations: int = 5
    tournament: int = 2
    mutation_rate: float = 0.3
    flops_bound: float = 1.05
    stage1_space: dict = field(
        default_factory=lambda: {
            "head_lr": (0.02, 0.01, 0.005, 0.002),
            "backbone_lr_ratio": (0.05, 0.1, 0.2),
            "alpha": (0.5, 1.0, 2.0),
            "beta": (0.0, 0.25, 0.5, 1.0),
            "lam": (0.0, 1e-4, 1e-3, 1e-2),
            "mix_ratio": (0.0, 0.5, 1.0, 2.0),
            "max_epochs": (4, 8, 12),
        }
    )
    stage2_channel_scales: tuple[float, ...] = (0.75, 1.0, 1.25)
    stage2_kernel_delta: int = 2
    stage2_fc_delta: int = 32
    stage2_dropouts: tuple[float, ...] = (0.1, 0.2, 0.3)

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError(f"population must be >= 2, got {self.population}")
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if not self.flops_bound >= 1.0:
            raise ValueError(f"flops_bound must be >= 1, got {self.flops_bound}")


# ---------------------------------------------------------------------------
# Stage 1: hyperparameter / parameter evolution


def _build_adaptation_sets(batch: AdaptationBatch, archive: FeatureDataset,
                           rng: np.random.Generator):
    """Novel false alarms (labeled normal) mixed 1:1 with archived arcs,
    split into a fit half and a held-out fitness half."""
    fa_x = batch.vectors()
    arc_idx = np.nonzero(archive.y == 1)[0]
    if len(arc_idx) == 0:
        raise ValueError("archive has no arc exemplars to mix in")
    pick = arc_idx[rng.integers(0, len(arc_idx), size=len(fa_x))]
    x = np.concatenate([fa_x, archive.x[pick]])
    y = np.concatenate([
        np.zeros(len(fa_x), dtype=np.uint8),
        np.ones(len(pick), dtype=np.uint8),
    ])
    ds = FeatureDataset(x, y, archive.config)
    val_idx, fit_idx = stratified_split(ds.y, 0.5, rng)
    return ds.subset(fit_idx), ds.subset(val_idx)


def _fitness(model: nn.Model, novel_val: FeatureDataset,
             archive_val: FeatureDataset) -> float:
    """Macro-F1 on the blend of held-out novel-regime and archive rows."""
    x = np.concatenate([novel_val.x, archive_val.x])
    y = np.concatenate([novel_val.y, archive_val.y])
    preds = (nn.predict_proba(nn.Model(model.arch, model.params), x) > 0.5).astype(np.uint8)
    return macro_f1_score(y, preds)


def _sample_candidate(space: dict, rng: np.random.Generator) -> dict:
    return {k: v[rng.integers(0, len(v))] for k, v in space.items()}


def _mutate_candidate(cand: dict, space: dict, rate: float,
                      rng: np.random.Generator) -> dict:
    out = dict(cand)
    for key, choices in space.items():
        if rng.random() < rate and len(choices) > 1:
            alternatives = [c for c in choices if c != out[key]]
            out[key] = alternatives[rng.integers(0, len(alternatives))]
    return out


def _stage1_transfer_config(cand: dict, seed: int) -> TransferConfig:
    return TransferConfig(
        alpha=cand["alpha"],
        beta=cand["beta"],
        lam=cand["lam"],
        backbone_lr_ratio=cand["backbone_lr_ratio"],
        mix_ratio=cand["mix_ratio"],
        max_epochs=int(cand["max_epochs"]),
        head_lr=cand["head_lr"],
        seed=seed,
    )


def stage1_evolve(model: nn.Model, batch: AdaptationBatch, archive: FeatureDataset,
                  evo: EvolutionConfig, rng: np.random.Generator):
    """Evolve fine-tuning hyperparameters over the novelty batch.

    Every candidate fine-tunes a copy of the deployed model (anchor = the
    deployed weights, archive rows as the replay source).  Returns the
    best adapted model and a search log; the log carries a saturation
    flag that gates stage 2.
    """
    if not batch.ready:
        raise BatchNotReady(
            f"batch has {len(batch.records)} records, threshold {batch.threshold}"
        )
    novel_fit, novel_val = _build_adaptation_sets(batch, archive, rng)
    arch_val_idx, _ = stratified_split(archive.y, min(1.0, 512 / max(len(archive), 1)), rng)
    archive_val = archive.subset(arch_val_idx)

    population = [_sample_candidate(evo.stage1_space, rng) for _ in range(evo.population)]
    log: list[dict] = []
    evaluated: list[tuple[float, dict, nn.Model]] = []
    best_per_gen: list[float] = []

    def run_candidate(cand: dict, gen: int, slot: int):
        cfg = _stage1_transfer_config(cand, seed=int(rng.integers(0, 2**31)))
        adapted, _ = adapt(model, archive, novel_fit, cfg)
        score = _fitness(adapted, novel_val, archive_val)
        log.append({"stage": 1, "generation": gen, "slot": slot,
                    "config": {k: float(v) for k, v in cand.items()},
                    "fitness": score})
        evaluated.append((score, cand, adapted))

    for slot, cand in enumerate(population):
        run_candidate(cand, 0, slot)
    best_per_gen.append(max(e[0] for e in evaluated))

    for gen in range(1, evo.generations):
        scored = sorted(evaluated, key=lambda e: -e[0])
        parents = scored[: evo.population]
        next_gen = [parents[0][1]]  # elitism
        while len(next_gen) < evo.population:
            contenders = [parents[rng.integers(0, len(parents))] for _ in range(evo.tournament)]
            winner = max(contenders, key=lambda e: e[0])[1]
            next_gen.append(_mutate_candidate(winner, evo.stage1_space, evo.mutation_rate, rng))
        for slot, cand in enumerate(next_gen[1:], start=1):
            run_candidate(cand, gen, slot)
        best_per_gen.append(max(e[0] for e in evaluated))

    best_score, best_cand, best_model = max(evaluated, key=lambda e: e[0])
    saturated = stage1_saturated(best_per_gen)
    search_log = {
        "stage": 1,
        "candidates": log,
        "best_fitness": best_score,
        "best_config": {k: float(v) for k, v in best_cand.items()},
        "best_per_generation": best_per_gen,
        "saturated": saturated,
    }
    best_model = nn.Model(best_model.arch, best_model.params,
                          version=model.version + "-s1")
    return best_model, search_log


def stage1_saturated(best_per_gen: list[float]) -> bool:
    """Improvement across the final two generations below the threshold."""
    if len(best_per_gen) < 3:
        return False
    return best_per_gen[-1] - best_per_gen[-3] < SATURATION_MIN_GAIN


# ---------------------------------------------------------------------------
# Stage 2: FLOPs-bounded micro-architecture evolution


def mutate_arch(arch: nn.ArchSpec, evo: EvolutionConfig,
                rng: np.random.Generator) -> nn.ArchSpec:
    """One random structural mutation inside the allowed search space.

    Emitted candidates always satisfy the non-increasing-kernel invariant;
    the FLOPs budget is checked separately by the caller.
    """
    for _ in range(32):
        blocks = [list(b) for b in arch.conv_blocks]
        gene = rng.integers(0, 4)
        try:
            if gene == 0:  # kernel size of one block
                i = int(rng.integers(0, len(blocks)))
                delta = evo.stage2_kernel_delta * (1 if rng.random() < 0.5 else -1)
                blocks[i][0] = max(1, blocks[i][0] + delta)
            elif gene == 1:  # channel width of one block
                i = int(rng.integers(0, len(blocks)))
                scale = evo.stage2_channel_scales[rng.integers(0, len(evo.stage2_channel_scales))]
                blocks[i][1] = max(1, int(round(blocks[i][1] * scale)))
            candidate_blocks = tuple(tuple(b) for b in blocks)
            fc = arch.fc_hidden
            dropout = arch.dropout_p
            if gene == 2:  # fully connected width
                delta = evo.stage2_fc_delta * (1 if rng.random() < 0.5 else -1)
                fc = max(8, arch.fc_hidden + delta)
            elif gene == 3:  # dropout rate
                dropout = evo.stage2_dropouts[rng.integers(0, len(evo.stage2_dropouts))]
            return nn.ArchSpec(
                conv_blocks=candidate_blocks,
                dropout_p=dropout,
                fc_hidden=fc,
                num_classes=arch.num_classes,
                input_dim=arch.input_dim,
            )
        except ValueError:
            continue  # mutation violated an arch invariant; resample
    return arch


def stage2_evolve(arch: nn.ArchSpec, batch: AdaptationBatch, archive: FeatureDataset,
                  evo: EvolutionConfig, rng: np.random.Generator,
                  stage1_is_saturated: bool):
    """Search micro-architecture variants under the FLOPs budget.

    Candidates exceeding flops_bound * flops(base) are logged and
    discarded before any training.  The winner is retrained from scratch
    on the archive blended with the novel batch.
    """
    if not stage1_is_saturated:
        raise StageGate("stage 2 requires the stage-1 saturation flag")
    if not batch.ready:
        raise BatchNotReady("stage 2 requires a ready novelty batch")
    base_flops = nn.flops(arch).total
    novel_fit, novel_val = _build_adaptation_sets(batch, archive, rng)
    arch_val_idx, arch_fit_idx = stratified_split(archive.y, 0.25, rng)
    archive_val = archive.subset(arch_val_idx)
    train_ds = archive.subset(arch_fit_idx).concat(novel_fit)

    train_cfg = TrainConfig(epochs=20, batch_size=32, folds=1,
                            split_seed=int(rng.integers(0, 2**31)))
    log: list[dict] = []
    evaluated: list[tuple[float, nn.ArchSpec, nn.Model]] = []

    def consider(candidate: nn.ArchSpec, gen: int, slot: int):
        ratio = nn.flops(candidate).total / base_flops
        entry = {"stage": 2, "generation": gen, "slot": slot,
                 "arch": {"conv_blocks": [list(b) for b in candidate.conv_blocks],
                          "fc_hidden": candidate.fc_hidden,
                          "dropout_p": candidate.dropout_p},
                 "flops_ratio": ratio, "trained": False, "fitness": None}
        if ratio > evo.flops_bound:
            log.append(entry)
            return
        val_idx, fit_idx = stratified_split(train_ds.y, 0.2, rng)
        model, _ = fit(train_ds.x[fit_idx], train_ds.y[fit_idx],
                       train_ds.x[val_idx], train_ds.y[val_idx],
                       candidate, train_cfg, seed=int(rng.integers(0, 2**31)))
        score = _fitness(model, novel_val, archive_val)
        entry["trained"] = True
        entry["fitness"] = score
        log.append(entry)
        evaluated.append((score, candidate, model))

    consider(arch, 0, 0)  # the base arch is always feasible (ratio 1.0)
    for slot in range(1, evo.population):
        consider(mutate_arch(arch, evo, rng), 0, slot)
    for gen in range(1, evo.generations):
        if not evaluated:
            break
        parent = max(evaluated, key=lambda e: e[0])[1]
        for slot in range(evo.population):
            consider(mutate_arch(parent, evo, rng), gen, slot)
    if not evaluated:
        raise SearchSpaceExhausted("no candidate satisfied the FLOPs bound")
    best_score, best_arch, best_model = max(evaluated, key=lambda e: e[0])
    search_log = {"stage": 2, "candidates": log, "best_fitness": best_score,
                  "base_flops": base_flops}
    return best_arch, nn.Model(best_arch, best_model.params, version="s2"), search_log


# ---------------------------------------------------------------------------
# Temporal validation and canary decision


@dataclass
class TemporalValidation:
    passed: bool
    stream_results: list[dict]


def temporal_validate(model: nn.Model, streams: list[SignalTrace],
                      det_config: DetectorConfig,
                      feat_config: FeatureConfig) -> TemporalValidation:
    """Streaming check over held-out traces.

    Pass requires zero alarms on every non-arc stream and, on every arc
    stream, at least one alarm that is not earlier than the arc onset.
    """
    results = []
    passed = True
    for trace in streams:
        report = run_detector(model, trace, det_config, feat_config)
        has_arc = bool(np.any(trace.frame_labels == 1))
        if has_arc:
            ok = bool(report.alarms) and report.alarms[0] >= (report.first_arc_frame or 0)
        else:
            ok = not report.alarms
        passed &= ok
        results.append({"trace_id": trace.trace_id, "category": trace.category,
                        "has_arc": has_arc, "alarms": list(report.alarms), "ok": ok})
    return TemporalValidation(passed=passed, stream_results=results)


@dataclass(frozen=True)
class CanaryConfig:
    canary_fraction: float = 0.1
    window_frames: int = 200
    regression_tolerance: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.canary_fraction <= 1.0:
            raise ValueError(
                f"canary_fraction must be in (0, 1], got {self.canary_fraction}"
            )
        if self.window_frames < 1:
            raise ValueError(f"window_frames must be >= 1, got {self.window_frames}")


@dataclass(frozen=True)
class WindowStats:
    """Monitored error statistics over one complete window."""

    window_frames: int
    normal_frames: int
    false_alarms: int
    arc_events: int
    detected_events: int

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarms / self.normal_frames if self.normal_frames else 0.0

    @property
    def miss_rate(self) -> float:
        return 1.0 - self.detected_events / self.arc_events if self.arc_events else 0.0

    def as_dict(self) -> dict:
        return {
            "window_frames": self.window_frames,
            "normal_frames": self.normal_frames,
            "false_alarms": self.false_alarms,
            "arc_events": self.arc_events,
            "detected_events": self.detected_events,
            "false_alarm_rate": self.false_alarm_rate,
            "miss_rate": self.miss_rate,
        }


@dataclass(frozen=True)
class CanaryDecision:
    decision: str  # "promote" | "rollback"
    candidate: WindowStats
    baseline: WindowStats
    rule_trace: dict


class IncompleteWindow(ValueError):
    """Statistics do not cover the configured monitoring window."""


def canary_decide(candidate: WindowStats, baseline: WindowStats,
                  config: CanaryConfig) -> CanaryDecision:
    """Promote only when the candidate is no worse on both error rates and
    strictly better on at least one; equal statistics roll back."""
    for stats, name in ((candidate, "candidate"), (baseline, "baseline")):
        if stats.window_frames != config.window_frames:
            raise IncompleteWindow(
                f"{name} stats cover {stats.window_frames} frames, "
                f"expected {config.window_frames}"
            )
    tol = config.regression_tolerance
    no_far_regression = candidate.false_alarm_rate <= baseline.false_alarm_rate + tol
    no_miss_regression = candidate.miss_rate <= baseline.miss_rate + tol
    strictly_better = (
        candidate.false_alarm_rate < baseline.false_alarm_rate
        or candidate.miss_rate < baseline.miss_rate
    )
    promote = no_far_regression and no_miss_regression and strictly_better
    return CanaryDecision(
        decision="promote" if promote else "rollback",
        candidate=candidate,
        baseline=baseline,
        rule_trace={
            "no_false_alarm_regression": no_far_regression,
            "no_miss_regression": no_miss_regression,
            "strictly_better": strictly_better,
        },
    )
