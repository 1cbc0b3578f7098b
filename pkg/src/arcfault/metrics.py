"""Binary classification metrics with the arc class as positive (label 1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetric(ValueError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_f1: float
    roc_auc: float
    pr_auc: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
        }


def confusion(labels: np.ndarray, preds: np.ndarray) -> tuple[int, int, int, int]:
    """Return (tp, fp, tn, fn) for the positive class 1."""
    labels = np.asarray(labels).astype(bool)
    preds = np.asarray(preds).astype(bool)
    tp = int(np.sum(preds & labels))
    fp = int(np.sum(preds & ~labels))
    tn = int(np.sum(~preds & ~labels))
    fn = int(np.sum(~preds & labels))
    return tp, fp, tn, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def macro_f1_score(labels: np.ndarray, preds: np.ndarray) -> float:
    """Unweighted mean of the per-class F1 scores."""
    tp, fp, tn, fn = confusion(labels, preds)
    _, _, f1_pos = _prf(tp, fp, fn)
    _, _, f1_neg = _prf(tn, fn, fp)
    return 0.5 * (f1_pos + f1_neg)


def auc(scores: np.ndarray, labels: np.ndarray, kind: str = "roc") -> float:
    """Area under the ROC curve (trapezoidal over all score thresholds) or
    the PR curve (step-wise average precision)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # one curve point per distinct threshold (ties grouped)
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate([boundary, [labels.size - 1]])
    tp = np.cumsum(sorted_labels)[cut].astype(np.float64)
    fp = (cut + 1) - tp
    if kind == "roc":
        tpr = np.concatenate([[0.0], tp / n_pos])
        fpr = np.concatenate([[0.0], fp / n_neg])
        return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) * 0.5))
    if kind == "pr":
        precision = tp / (tp + fp)
        recall = tp / n_pos
        prev_recall = np.concatenate([[0.0], recall[:-1]])
        return float(np.sum((recall - prev_recall) * precision))
    raise ValueError(f"kind must be 'roc' or 'pr', got {kind!r}")


def compute_metrics(labels: np.ndarray, scores: np.ndarray,
                    threshold: float = 0.5) -> Metrics:
    """All metric fields from scores plus a hard threshold for the counts."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    preds = scores > threshold
    tp, fp, tn, fn = confusion(labels, preds)
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else 0.0
    precision, recall, f1 = _prf(tp, fp, fn)
    _, _, f1_neg = _prf(tn, fn, fp)
    return Metrics(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=0.5 * (f1 + f1_neg),
        roc_auc=auc(scores, labels, "roc"),
        pr_auc=auc(scores, labels, "pr"),
    )
