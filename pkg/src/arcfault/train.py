"""Supervised training of the spectral classifier.

Per fold: a stratified random train/val/test split, mini-batch SGD with
momentum, learning-rate halving when validation macro-F1 plateaus, early
stopping with best-snapshot restore, and full metrics on the held-out
test split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import FeatureDataset
from .metrics import Metrics, compute_metrics, macro_f1_score
from .rng import make_rng

PLATEAU_MIN_DELTA = 1e-3


class SingleClassData(ValueError):
    """Training or splitting requires both classes present."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    base_lr: float = 0.02
    lr_decay: float = 0.5
    plateau_patience: int = 2
    early_stop_patience: int = 5
    split_seed: int = 0
    folds: int = 5
    test_frac: float = 0.2
    val_frac: float = 0.15

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.folds < 1:
            raise ValueError(f"folds must be >= 1, got {self.folds}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


@dataclass
class FitHistory:
    epoch_loss: list[float] = field(default_factory=list)
    val_macro_f1: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = -1


@dataclass
class TrainResult:
    model: nn.Model
    fold_metrics: list[Metrics]
    histories: list[FitHistory]
    best_fold: int


_rng = make_rng


def stratified_split(y: np.ndarray, frac: float, rng: np.random.Generator):
    """Random per-class split; returns (held_idx, rest_idx)."""
    y = np.asarray(y)
    held, rest = [], []
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(len(idx))]
        k = int(round(frac * len(idx)))
        held.append(idx[:k])
        rest.append(idx[k:])
    held_idx = np.sort(np.concatenate(held))
    rest_idx = np.sort(np.concatenate(rest))
    return held_idx, rest_idx


def stratified_subsample(y: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Class-proportional subsample of n indices (at least 1 per class)."""
    y = np.asarray(y)
    if n > len(y):
        raise ValueError(f"cannot subsample {n} from {len(y)} rows")
    classes = np.unique(y)
    if n < len(classes):
        raise SingleClassData(f"subsample of {n} cannot cover {len(classes)} classes")
    picks = []
    remaining = n
    for i, cls in enumerate(classes):
        idx = np.nonzero(y == cls)[0]
        share = int(round(n * len(idx) / len(y))) if i < len(classes) - 1 else remaining
        share = max(1, min(share, remaining - (len(classes) - 1 - i)))
        idx = idx[rng.permutation(len(idx))]
        picks.append(idx[:share])
        remaining -= share
    return np.sort(np.concatenate(picks))


def fit(train_x: np.ndarray, train_y: np.ndarray, val_x: np.ndarray,
        val_y: np.ndarray, arch: nn.ArchSpec, config: TrainConfig,
        seed: int, select_metric: str = "macro_f1") -> tuple[nn.Model, FitHistory]:
    """Train one model; returns the best-validation snapshot.

    select_metric chooses the snapshot/plateau criterion: "macro_f1" for
    classification runs, "val_loss" for loss-curve experiments where the
    measured quantity is cross-entropy.
    """
    params = nn.init_params(arch, seed=seed)
    optimizer = nn.Momentum(momentum=0.9)
    batch_rng = _rng((seed, "batches"))
    drop_rng = _rng((seed, "dropout"))
    lr = config.base_lr
    history = FitHistory()
    best_score = -np.inf
    best_params = nn.copy_params(params)
    since_improve = 0

    n = len(train_y)
    for epoch in range(config.epochs):
        order = batch_rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, cache = nn.forward(arch, params, train_x[idx], "train", drop_rng)
            loss, grads = nn.backward(arch, params, cache, logits, train_y[idx])
            lr_map = nn.make_lr_map(params, head_lr=lr)
            params = optimizer.step(params, grads, lr_map)
            losses.append(loss)
        val_f1 = macro_f1_score(val_y, _predict(arch, params, val_x))
        if select_metric == "macro_f1":
            score, min_delta = val_f1, PLATEAU_MIN_DELTA
        else:
            score = -_dataset_ce(arch, params, val_x, val_y)
            min_delta = 1e-4
        history.epoch_loss.append(float(np.mean(losses)))
        history.val_macro_f1.append(val_f1)
        history.lr.append(lr)
        if score > best_score + min_delta:
            best_score = score
            best_params = nn.copy_params(params)
            history.best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve % config.plateau_patience == 0:
                lr *= config.lr_decay
            if since_improve >= config.early_stop_patience:
                history.stopped_epoch = epoch
                break
    return nn.Model(arch, best_params), history


def _dataset_ce(arch: nn.ArchSpec, params: nn.Params, x: np.ndarray,
                y: np.ndarray) -> float:
    total = 0.0
    for start in range(0, len(x), 512):
        chunk = x[start : start + 512]
        logits, _ = nn.forward(arch, params, chunk, "infer")
        probs = nn.softmax(logits)
        rows = np.arange(chunk.shape[0])
        total += float(
            -np.log(np.maximum(probs[rows, y[start : start + 512]], 1e-30)).sum()
        )
    return total / len(x)


def _predict(arch: nn.ArchSpec, params: nn.Params, x: np.ndarray) -> np.ndarray:
    model = nn.Model(arch, params)
    return (nn.predict_proba(model, x) > 0.5).astype(np.uint8)


def train(dataset: FeatureDataset, arch: nn.ArchSpec,
          config: TrainConfig) -> TrainResult:
    """Multi-fold training; returns the best fold's model and all metrics."""
    if len(np.unique(dataset.y)) < 2:
        raise SingleClassData("training requires both classes in the dataset")
    fold_metrics: list[Metrics] = []
    histories: list[FitHistory] = []
    models: list[nn.Model] = []
    for fold in range(config.folds):
        rng = _rng((config.split_seed, fold))
        test_idx, rest_idx = stratified_split(dataset.y, config.test_frac, rng)
        val_idx, train_idx = stratified_split(dataset.y[rest_idx], config.val_frac, rng)
        val_idx, train_idx = rest_idx[val_idx], rest_idx[train_idx]
        model, history = fit(
            dataset.x[train_idx], dataset.y[train_idx],
            dataset.x[val_idx], dataset.y[val_idx],
            arch, config, seed=int(config.split_seed) * 1000 + fold,
        )
        scores = nn.predict_proba(model, dataset.x[test_idx])
        fold_metrics.append(compute_metrics(dataset.y[test_idx], scores))
        histories.append(history)
        models.append(model)
    best_fold = int(np.argmax([m.macro_f1 for m in fold_metrics]))
    best = models[best_fold]
    best.version = "v1"
    return TrainResult(best, fold_metrics, histories, best_fold)


def evaluate(model: nn.Model, dataset: FeatureDataset,
             threshold: float = 0.5) -> Metrics:
    """Full metric set of a model over a labeled dataset."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    scores = nn.predict_proba(model, dataset.x)
    return compute_metrics(dataset.y, scores, threshold)


def mean_cross_entropy(model: nn.Model, dataset: FeatureDataset) -> float:
    """Mean softmax cross-entropy in infer mode (the test loss)."""
    return _dataset_ce(model.arch, model.params, dataset.x, dataset.y)


def _stratified_order(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Permutation whose every prefix keeps the class mix of the whole."""
    y = np.asarray(y)
    keys, indices = [], []
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(len(idx))]
        indices.append(idx)
        keys.append((np.arange(len(idx)) + 0.5) / len(idx))
    merged = np.concatenate(indices)
    return merged[np.argsort(np.concatenate(keys), kind="stable")]


def scale_point(dataset: FeatureDataset, pool_order: np.ndarray,
                holdout: FeatureDataset, fraction: float, point_index: int,
                arch: nn.ArchSpec, config: TrainConfig,
                replicates: int = 1) -> tuple[int, float]:
    """Train on the first fraction of the pool; report held-out loss.

    With replicates > 1 the point is the mean loss over independently
    seeded fits of the same subset, which damps snapshot luck at small n.
    """
    n = max(int(round(fraction * len(pool_order))), 4)
    sub = pool_order[:n]
    if len(np.unique(dataset.y[sub])) < 2 or np.min(np.bincount(dataset.y[sub])) < 2:
        raise SingleClassData(
            f"fraction {fraction} leaves fewer than 2 samples in a class"
        )
    losses = []
    for rep in range(replicates):
        rng = _rng((config.split_seed, "scale", point_index, rep))
        val_idx, train_idx = stratified_split(dataset.y[sub], config.val_frac, rng)
        model, _ = fit(
            dataset.x[sub[train_idx]], dataset.y[sub[train_idx]],
            dataset.x[sub[val_idx]], dataset.y[sub[val_idx]],
            arch, config, seed=int(config.split_seed) * 7919 + 31 * point_index + rep,
            select_metric="val_loss",
        )
        losses.append(mean_cross_entropy(model, holdout))
    return len(sub), float(np.mean(losses))


def scale_sweep(dataset: FeatureDataset, fractions: list[float],
                arch: nn.ArchSpec, config: TrainConfig,
                replicates: int = 1) -> list[tuple[int, float]]:
    """Held-out test loss at increasing training-set sizes.

    All points share one fixed stratified held-out set.  Subsets are
    nested: the pool is shuffled once into a class-balanced order and each
    point trains on its prefix, so composition noise between points stays
    out of the curve.  Snapshots are selected by validation loss since the
    reported quantity is cross-entropy.
    """
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fractions must lie in (0, 1], got {f}")
    rng = _rng((config.split_seed, "scale-holdout"))
    holdout_idx, pool_idx = stratified_split(dataset.y, config.test_frac, rng)
    holdout = dataset.subset(holdout_idx)
    pool_order = pool_idx[_stratified_order(dataset.y[pool_idx], _rng((config.split_seed, "scale-order")))]
    points = []
    for i, fraction in enumerate(fractions):
        points.append(
            scale_point(dataset, pool_order, holdout, fraction, i, arch, config,
                        replicates=replicates)
        )
    return points
