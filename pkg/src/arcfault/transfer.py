"""Cross-hardware adaptation by mixed-domain fine-tuning.

Each update step combines three weighted terms: supervised cross-entropy
on target-hardware mini-batches, cross-entropy on replayed source rows
(guarding against catastrophic forgetting), and an anchored L2 penalty
pulling trainable weights toward the pre-adaptation snapshot.  The
backbone trains at a reduced learning rate relative to the classifier
head; both halve together when the validation score plateaus, and early
stopping restores the best snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .dataio import FeatureDataset
from .metrics import macro_f1_score
from .rng import make_rng
from .train import (
    PLATEAU_MIN_DELTA,
    SingleClassData,
    TrainConfig,
    fit,
    stratified_split,
    stratified_subsample,
)

VAL_SAMPLE_CAP = 512


@dataclass(frozen=True)
class TransferConfig:
    """Weights and schedule of the composite adaptation objective.

    alpha scales the target-supervision loss, beta the source-replay loss,
    lam the anchored L2 penalty.  mix_ratio is the number of replayed
    source rows per target row in each step.
    """

    alpha: float = 1.0
    beta: float = 0.5
    lam: float = 1e-4
    backbone_lr_ratio: float = 0.1
    mix_ratio: float = 1.0
    plateau_patience: int = 3
    early_stop_patience: int = 5
    max_epochs: int = 40
    head_lr: float = 0.02
    batch_size: int = 32
    val_frac: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.lam < 0:
            raise ValueError("alpha, beta and lam must be >= 0")
        if not 0.0 < self.backbone_lr_ratio <= 1.0:
            raise ValueError(
                f"backbone_lr_ratio must be in (0, 1], got {self.backbone_lr_ratio}"
            )
        if self.mix_ratio < 0:
            raise ValueError(f"mix_ratio must be >= 0, got {self.mix_ratio}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


class ReplayBuffer:
    """Uniform sampling without replacement, reshuffled on exhaustion."""

    def __init__(self, x: np.ndarray, y: np.ndarray, seed: int = 0):
        if len(x) == 0:
            raise ValueError("replay buffer cannot be empty")
        self.x = np.asarray(x, dtype=np.float32)
        self.y = np.asarray(y, dtype=np.uint8)
        self._rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self._order = self._rng.permutation(len(self.x))
        self._cursor = 0

    def __len__(self) -> int:
        return len(self.x)

    def sample(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.empty(k, dtype=np.int64)
        filled = 0
        while filled < k:
            take = min(k - filled, len(self._order) - self._cursor)
            idx[filled : filled + take] = self._order[self._cursor : self._cursor + take]
            self._cursor += take
            filled += take
            if self._cursor == len(self._order):
                self._order = self._rng.permutation(len(self.x))
                self._cursor = 0
        return self.x[idx], self.y[idx]


def mixed_batch(replay: ReplayBuffer | None, x_t: np.ndarray, y_t: np.ndarray,
                mix_ratio: float):
    """Append ceil(mix_ratio * len(target)) replay rows to a target batch.

    Returns (x, y, is_source) where the boolean tag routes each row into
    the target or source loss term.
    """
    if len(x_t) == 0:
        raise ValueError("target batch must be non-empty")
    k = math.ceil(mix_ratio * len(x_t))
    if k == 0 or replay is None:
        return x_t, y_t, np.zeros(len(x_t), dtype=bool)
    x_s, y_s = replay.sample(k)
    x = np.concatenate([x_t, x_s])
    y = np.concatenate([y_t, y_s])
    tags = np.zeros(len(x), dtype=bool)
    tags[len(x_t):] = True
    return x, y, tags


@dataclass
class AdaptHistory:
    """Per-step loss terms and per-epoch schedule for auditing."""

    step_terms: list[tuple[float, float, float, float]] = field(default_factory=list)
    epoch_val_score: list[float] = field(default_factory=list)
    epoch_target_f1: list[float] = field(default_factory=list)
    epoch_source_f1: list[float] = field(default_factory=list)
    head_lr: list[float] = field(default_factory=list)
    backbone_lr: list[float] = field(default_factory=list)
    plateau_events: int = 0
    best_epoch: int = -1


def adapt(source_model: nn.Model, source: FeatureDataset | None,
          target: FeatureDataset, config: TransferConfig) -> tuple[nn.Model, AdaptHistory]:
    """Fine-tune a trained model to target-hardware data.

    The anchor of the L2 penalty is the incoming model's weights.  The
    plateau/early-stop validation score is the alpha/beta-weighted blend
    of target and source macro-F1.
    """
    if len(target) == 0:
        raise ValueError("target dataset must be non-empty")
    if len(np.unique(target.y)) < 2:
        raise SingleClassData("target dataset must contain both classes")
    if config.beta > 0 and (source is None or len(source) == 0):
        raise ValueError("beta > 0 requires a non-empty source dataset")

    rng = make_rng(config.seed)
    params = nn.copy_params(source_model.params)
    anchor = nn.copy_params(source_model.params)
    arch = source_model.arch
    anchored = nn.trainable_names(params)

    val_idx, train_idx = stratified_split(target.y, config.val_frac, rng)
    if len(train_idx) == 0 or len(val_idx) == 0:
        val_idx = train_idx = np.arange(len(target))
    x_tr, y_tr = target.x[train_idx], target.y[train_idx]
    x_val, y_val = target.x[val_idx], target.y[val_idx]

    replay = None
    src_val = None
    if source is not None and len(source) > 0:
        replay = ReplayBuffer(source.x, source.y, seed=config.seed + 1)
        n_val = min(VAL_SAMPLE_CAP, len(source))
        sub = stratified_subsample(source.y, n_val, rng) if n_val < len(source) else np.arange(len(source))
        src_val = (source.x[sub], source.y[sub])

    optimizer = nn.Momentum(momentum=0.9)
    head_lr = config.head_lr
    history = AdaptHistory()

    def val_score() -> tuple[float, float, float]:
        model = nn.Model(arch, params)
        tgt = macro_f1_score(y_val, (nn.predict_proba(model, x_val) > 0.5).astype(np.uint8))
        src = 0.0
        if config.beta > 0 and src_val is not None:
            src = macro_f1_score(
                src_val[1], (nn.predict_proba(model, src_val[0]) > 0.5).astype(np.uint8)
            )
            denom = config.alpha + config.beta
            blend = (config.alpha * tgt + config.beta * src) / denom if denom else 0.0
        else:
            blend = tgt
        return blend, tgt, src

    best_score, tgt0, src0 = val_score()
    best_params = nn.copy_params(params)
    history.epoch_val_score.append(best_score)
    history.epoch_target_f1.append(tgt0)
    history.epoch_source_f1.append(src0)
    since_improve = 0

    drop_rng = make_rng((config.seed, "dropout"))
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(x_tr))
        for start in range(0, len(x_tr), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb, tags = mixed_batch(
                replay if config.beta > 0 else None, x_tr[idx], y_tr[idx], config.mix_ratio
            )
            n_src = int(tags.sum())
            n_tgt = len(xb) - n_src
            weights = np.where(
                tags,
                config.beta / n_src if n_src else 0.0,
                config.alpha / n_tgt if n_tgt else 0.0,
            )
            logits, cache = nn.forward(arch, params, xb, "train", drop_rng)
            _, grads = nn.backward(arch, params, cache, logits, yb, sample_weights=weights)
            probs = nn.softmax(logits)
            ce = -np.log(np.maximum(probs[np.arange(len(yb)), yb], 1e-30))
            l_tgt = float(ce[~tags].mean()) if n_tgt else 0.0
            l_src = float(ce[tags].mean()) if n_src else 0.0
            penalty, pen_grads = nn.l2_sp(params, anchor, anchored)
            if config.lam > 0:
                for name, g in pen_grads.items():
                    grads[name] = grads.get(name, 0.0) + config.lam * g
            lr_map = nn.make_lr_map(params, head_lr, config.backbone_lr_ratio)
            params = optimizer.step(params, grads, lr_map)
            history.step_terms.append(
                (l_tgt, l_src, penalty,
                 config.alpha * l_tgt + config.beta * l_src + config.lam * penalty)
            )
        score, tgt_f1, src_f1 = val_score()
        history.epoch_val_score.append(score)
        history.epoch_target_f1.append(tgt_f1)
        history.epoch_source_f1.append(src_f1)
        history.head_lr.append(head_lr)
        history.backbone_lr.append(head_lr * config.backbone_lr_ratio)
        if score > best_score + PLATEAU_MIN_DELTA:
            best_score = score
            best_params = nn.copy_params(params)
            history.best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve % config.plateau_patience == 0:
                head_lr *= 0.5
                history.plateau_events += 1
            if history.plateau_events >= config.early_stop_patience:
                break
    adapted = nn.Model(arch, best_params, version=source_model.version + "-adapted")
    return adapted, history


@dataclass
class SweepRow:
    fraction: float
    target_macro_f1: float
    source_macro_f1: float
    target_arc_accuracy: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    skipped: list[tuple[float, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        fracs = [r.fraction for r in self.rows]
        if any(b <= a for a, b in zip(fracs, fracs[1:])):
            raise ValueError("sweep fractions must be strictly increasing")


def source_fraction_sweep(source: FeatureDataset, fractions: list[float],
                          arch: nn.ArchSpec, config: TrainConfig) -> list[tuple[float, float]]:
    """Macro-F1 on a fixed source test set vs supervision fraction."""
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
    rng = make_rng((config.split_seed, "src-sweep"))
    test_idx, pool_idx = stratified_split(source.y, config.test_frac, rng)
    curve = []
    for i, fraction in enumerate(sorted(fractions)):
        point_rng = make_rng((config.split_seed, "src-sweep", i))
        n = max(int(round(fraction * len(pool_idx))), 4)
        sub = pool_idx[stratified_subsample(source.y[pool_idx], n, point_rng)]
        if len(np.unique(source.y[sub])) < 2:
            raise SingleClassData(f"fraction {fraction} yields a single-class subset")
        val_idx, train_idx = stratified_split(source.y[sub], config.val_frac, point_rng)
        model, _ = fit(
            source.x[sub[train_idx]], source.y[sub[train_idx]],
            source.x[sub[val_idx]], source.y[sub[val_idx]],
            arch, config, seed=int(config.split_seed) * 31 + i,
        )
        preds = (nn.predict_proba(model, source.x[test_idx]) > 0.5).astype(np.uint8)
        curve.append((fraction, macro_f1_score(source.y[test_idx], preds)))
    return curve


def target_fraction_sweep(source_model: nn.Model, source: FeatureDataset,
                          target: FeatureDataset, fractions: list[float],
                          config: TransferConfig) -> SweepResult:
    """Adapt at increasing target supervision; shared target test set.

    Rows record target macro-F1, post-adaptation source macro-F1, and
    arc-class accuracy (recall over arc frames) on the target test set.
    Fractions whose subsample is single-class are skipped with a
    diagnostic instead of failing the sweep.
    """
    rng = make_rng((config.seed, "tgt-sweep"))
    test_idx, pool_idx = stratified_split(target.y, 0.25, rng)
    x_test, y_test = target.x[test_idx], target.y[test_idx]
    arc_mask = y_test == 1
    rows: list[SweepRow] = []
    skipped: list[tuple[float, str]] = []
    for i, fraction in enumerate(sorted(fractions)):
        point_rng = make_rng((config.seed, "tgt-sweep", i))
        n = max(int(round(fraction * len(pool_idx))), 1)
        try:
            sub = pool_idx[stratified_subsample(target.y[pool_idx], n, point_rng)]
        except SingleClassData as exc:
            skipped.append((fraction, str(exc)))
            continue
        if len(np.unique(target.y[sub])) < 2:
            skipped.append((fraction, "subsample contains a single class"))
            continue
        subset = target.subset(sub)
        adapted, _ = adapt(source_model, source, subset,
                           replace(config, seed=config.seed + 100 + i))
        tgt_preds = (nn.predict_proba(adapted, x_test) > 0.5).astype(np.uint8)
        src_preds = (nn.predict_proba(adapted, source.x) > 0.5).astype(np.uint8)
        rows.append(
            SweepRow(
                fraction=fraction,
                target_macro_f1=macro_f1_score(y_test, tgt_preds),
                source_macro_f1=macro_f1_score(source.y, src_preds),
                target_arc_accuracy=float(np.mean(tgt_preds[arc_mask] == 1))
                if arc_mask.any()
                else 0.0,
            )
        )
    return SweepResult(rows=rows, skipped=skipped)
