"""Power-law fit of test loss against training-set size.

Model: loss(n) = a * n^(-alpha) + floor.  The floor is found by a coarse
grid over [0, min(loss)) refined around the best cell; for each candidate
floor the remaining two parameters come from a closed-form log-linear
regression.  The reported residual is the RMSE in the original loss
space, and ties are broken toward the smallest floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateFit(ValueError):
    """The points cannot support a decreasing power-law fit."""


@dataclass(frozen=True)
class ScalingFit:
    a: float
    alpha: float
    l_inf: float
    rmse: float

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise DegenerateFit(f"fitted a must be > 0, got {self.a}")
        if not self.alpha > 0:
            raise DegenerateFit(f"fitted alpha must be > 0, got {self.alpha}")
        if self.l_inf < 0:
            raise DegenerateFit(f"fitted floor must be >= 0, got {self.l_inf}")

    def predict(self, n) -> np.ndarray:
        return self.a * np.asarray(n, dtype=np.float64) ** (-self.alpha) + self.l_inf


def _fit_floor(log_n: np.ndarray, loss: np.ndarray, floor: float):
    z = np.log(loss - floor)
    slope, intercept = np.polyfit(log_n, z, 1)
    a = float(np.exp(intercept))
    alpha = float(-slope)
    pred = a * np.exp(log_n) ** (-alpha) + floor
    rmse = float(np.sqrt(np.mean((pred - loss) ** 2)))
    return a, alpha, rmse


def fit_scaling_law(points) -> ScalingFit:
    """Least-squares power-law fit over (n, loss) points.

    Needs at least two points with distinct n and positive, non-constant
    losses; stable three-parameter fits want four or more.
    """
    pts = sorted((float(n), float(l)) for n, l in points)
    if len(pts) < 2:
        raise DegenerateFit("need at least 2 points")
    ns = np.array([p[0] for p in pts])
    loss = np.array([p[1] for p in pts])
    if len(np.unique(ns)) != len(ns):
        raise DegenerateFit("points must have distinct n")
    if np.any(ns <= 0) or np.any(loss <= 0):
        raise DegenerateFit("n and loss must be positive")
    if np.allclose(loss, loss[0]):
        raise DegenerateFit("losses are all equal")

    log_n = np.log(ns)
    upper = float(loss.min()) * (1.0 - 1e-9)
    # improvements below float jitter do not count, so exact ties resolve
    # to the smallest floor visited first
    tol = 1e-14 * (1.0 + float(loss.min()))
    best = None  # (rmse, floor, a, alpha)
    for floor in np.linspace(0.0, upper, 241):
        a, alpha, rmse = _fit_floor(log_n, loss, floor)
        if best is None or rmse < best[0] - tol:
            best = (rmse, floor, a, alpha)
    # local refinement around the winning grid cell
    width = upper / 240.0
    for _ in range(4):
        lo = max(0.0, best[1] - width)
        hi = min(upper, best[1] + width)
        for floor in np.linspace(lo, hi, 41):
            a, alpha, rmse = _fit_floor(log_n, loss, floor)
            if rmse < best[0] - tol:
                best = (rmse, floor, a, alpha)
        width /= 20.0
    rmse, floor, a, alpha = best
    return ScalingFit(a=a, alpha=alpha, l_inf=floor, rmse=rmse)
