"""Relative entropy and the inequalities used in the H-drift argument."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


def relative_entropy(p: np.ndarray, q: np.ndarray) -> float:
    """sum_x p_x log(p_x / q_x) with 0 log 0 = 0; p, q need not be normalized."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("relative entropy needs nonnegative vectors")
    pos = p > 0
    if np.any(q[pos] == 0):
        return float("inf")
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def pinsker_slack(p: np.ndarray, q: np.ndarray) -> float:
    """D(p||q) - (1/2) ||p - q||_1^2 for probability vectors (never negative)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return relative_entropy(p, q) - 0.5 * float(np.abs(p - q).sum()) ** 2


def square_deviation_slack(p: np.ndarray, q: np.ndarray, constant: float = 0.5) -> float:
    """sum p log(p/q) - (constant / sum p) sum (p - q)^2 for equal-mass p, q.

    Nonnegative for ``constant`` up to 1 (a consequence of Pinsker's
    inequality with sum (p-q)^2 <= (1/2) (sum |p-q|)^2 when sum (p-q) = 0).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    total = p.sum()
    if not np.isclose(total, q.sum(), rtol=1e-12, atol=1e-15):
        raise ValueError("p and q must carry the same total mass")
    return relative_entropy(p, q) - constant / total * float(np.sum((p - q) ** 2))


@dataclass(frozen=True)
class SplitReport:
    """Proportional split of a link's service over its classes."""

    lhs: float
    closed_form_value: float
    grid_value: float
    gamma_closed: np.ndarray
    gamma_grid: np.ndarray

    @property
    def identity_error(self) -> float:
        return abs(self.lhs - self.grid_value)

    @property
    def attainment_error(self) -> float:
        return abs(self.closed_form_value - self.grid_value)


def _split_value(x: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return (x * np.log(gamma)).sum(axis=-1)


def grid_split_optimum(
    x: np.ndarray, sigma: float, step: float = 1e-6, coarse: int = 40, keep: float = 3.0
) -> tuple[float, np.ndarray]:
    """Maximize sum_r x_r log gamma_r over sum_r gamma_r = sigma by grid zooming.

    A coarse lattice on the simplex is refined around the incumbent until its
    spacing (in simplex coordinates) is at most ``step``.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    if k == 1:
        return float(x[0] * np.log(sigma)), np.array([sigma])
    lo = np.zeros(k - 1)
    width = 1.0
    best = None
    h = width / coarse
    while True:
        axes = [lo[i] + h * np.arange(coarse + 1) for i in range(k - 1)]
        pts = np.array(list(product(*axes))) if k > 2 else axes[0][:, None]
        free = pts.sum(axis=1)
        ok = (pts.min(axis=1) > 0) & (free < 1)
        pts = pts[ok]
        w = np.column_stack([pts, 1 - pts.sum(axis=1)])
        vals = _split_value(x, sigma * w)
        i = int(np.argmax(vals))
        best = (float(vals[i]), sigma * w[i])
        if h <= step:
            return best
        centre = pts[i]
        half = keep * h
        lo = np.maximum(centre - half, 0.0)
        h = 2 * half / coarse


def split_identity_check(x: np.ndarray, sigma: float, step: float = 1e-6) -> SplitReport:
    """Compare q log sigma + sum_r x_r log(x_r / q) with max sum_r x_r log gamma_r
    over sum_r gamma_r = sigma; the closed form maximizer is gamma_r = x_r sigma / q."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or not sigma > 0:
        raise ValueError("needs positive class amounts and positive service")
    q = x.sum()
    lhs = float(q * np.log(sigma) + np.sum(x * np.log(x / q)))
    gamma = x * sigma / q
    grid_val, grid_gamma = grid_split_optimum(x, sigma, step)
    return SplitReport(lhs, float(_split_value(x, gamma)), grid_val, gamma, grid_gamma)
