"""Independent reference implementations used to check the library.

These stay deliberately naive (direct sums, O(n^2) pairwise counts) so a
bug in the optimized path cannot hide in its own oracle.
"""

from __future__ import annotations

import numpy as np


def naive_dft(frame: np.ndarray) -> np.ndarray:
    """Direct O(L^2) evaluation of X[k] = sum_n x[n] e^{-j2pi kn/L}."""
    x = np.asarray(frame, dtype=np.float64)
    n = len(x)
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return basis @ x


def pairwise_roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC-AUC as the probability a positive outranks a negative."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def recount_confusion(labels: np.ndarray, preds: np.ndarray):
    """Element-by-element confusion recount."""
    tp = fp = tn = fn = 0
    for y, p in zip(labels, preds):
        if p and y:
            tp += 1
        elif p and not y:
            fp += 1
        elif not p and not y:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def grad_check(loss_fn, params: dict, grads: dict, eps: float = 1e-3,
               rtol: float = 1e-4, atol: float = 1e-6,
               max_per_tensor: int | None = None, rng=None):
    """Central finite differences against analytic gradients.

    Checks |fd - g| <= rtol*max(|fd|,|g|) + atol per coordinate; atol
    covers directions whose true derivative is exactly zero (a conv bias
    followed by batch norm, whose mean subtraction cancels any shift).

    A coordinate failing at the requested step is re-measured at eps/100:
    central differences straddling a ReLU or max-pool kink disagree with
    the (correct) one-sided gradient by O(eps), so only coordinates that
    fail at both step sizes are reported.
    Returns the list of failures.
    """

    def fd_at(name, i, step):
        orig = params[name].reshape(-1)[i]
        probe = {k: v.copy() for k, v in params.items()}
        probe[name].reshape(-1)[i] = orig + step
        up = loss_fn(probe)
        probe[name].reshape(-1)[i] = orig - step
        down = loss_fn(probe)
        return (up - down) / (2 * step)

    failures = []
    for name, grad in grads.items():
        flat = params[name].reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        if max_per_tensor is not None and len(flat) > max_per_tensor:
            idxs = rng.choice(len(flat), max_per_tensor, replace=False)
        else:
            idxs = range(len(flat))
        for i in idxs:
            bad = None
            for step in (eps, eps / 100.0):
                fd = fd_at(name, i, step)
                err = abs(fd - gflat[i])
                if err <= rtol * max(abs(fd), abs(gflat[i])) + atol:
                    bad = None
                    break
                bad = (name, int(i), float(fd), float(gflat[i]), float(err))
            if bad is not None:
                failures.append(bad)
    return failures
