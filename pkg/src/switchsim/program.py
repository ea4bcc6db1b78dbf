"""Concave scheduling programs over the convex hull of a schedule set.

The (alpha, g) program maximizes sum_j g(s_j) * q_j**alpha over s in the hull
of the schedules.  ``solve_program`` returns the optimal mean schedule together
with the convex weights the solver used, ``caratheodory_decompose`` reduces those
weights to at most |J| + 1 atoms, and ``sample_schedule`` draws a schedule with
the optimal mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import nnls

from . import _fw
from .model import ScheduleSet

G_KINDS = ("log", "power", "linear")

DISCRETE_TOL = 1e-8
FLUID_TOL = 1e-10
MAX_ITERS = 100_000


class SolverError(RuntimeError):
    pass


class NotInHull(ValueError):
    pass


@dataclass(frozen=True)
class Objective:
    """alpha > 0 and a per-link utility g: log, power(beta) or linear.

    ``power`` means g(s) = s**(1 - beta) / (1 - beta) with beta > 0, beta != 1.
    """

    alpha: float = 1.0
    g: str = "log"
    beta: float | None = None

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.g not in G_KINDS:
            raise ValueError(f"unknown utility {self.g!r}; expected one of {G_KINDS}")
        if self.g == "power":
            if self.beta is None or not self.beta > 0 or self.beta == 1:
                raise ValueError("power utility needs beta > 0 and beta != 1")

    @classmethod
    def alpha_fair(cls, alpha: float) -> "Objective":
        """The alpha-fair special case g(s) = s^(1-alpha)/(1-alpha), log at alpha = 1."""
        if alpha == 1:
            return cls(1.0, "log")
        return cls(alpha, "power", alpha)

    @property
    def is_linear(self) -> bool:
        return self.g == "linear"

    @property
    def _code(self) -> tuple[int, float]:
        return (_fw.LOG, 0.0) if self.g == "log" else (_fw.POWER, float(self.beta))

    def weights(self, q: np.ndarray) -> np.ndarray:
        q = np.maximum(np.asarray(q, dtype=float), 0.0)
        return q if self.alpha == 1.0 else q**self.alpha

    def utility(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.g == "log":
            with np.errstate(divide="ignore"):
                return np.log(s)
        if self.g == "linear":
            return s
        return s ** (1 - self.beta) / (1 - self.beta)

    def derivative(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.g == "log":
            return 1.0 / s
        if self.g == "linear":
            return np.ones_like(s)
        return s ** (-self.beta)

    def value(self, s: np.ndarray, q: np.ndarray) -> float:
        """G_q(s) = sum_j g(s_j) q_j^alpha, with 0 * g(s) = 0."""
        w = self.weights(q)
        pos = w > 0
        return float(np.sum(w[pos] * self.utility(np.asarray(s, dtype=float)[pos])))


@dataclass(frozen=True)
class MeanSchedule:
    """Optimal mean schedule with its Frank-Wolfe certificate.

    ``gap`` bounds the suboptimality G(s*) - G(s) in the caller's units.
    ``lam`` are convex weights over ``atoms`` reproducing ``s``.
    """

    s: np.ndarray
    gap: float
    lam: np.ndarray
    atoms: np.ndarray
    iterations: int = 0


@dataclass(frozen=True)
class Decomposition:
    weights: np.ndarray
    atoms: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def __len__(self) -> int:
        return self.weights.size

    def check(self) -> None:
        w = self.weights
        if w.ndim != 1 or w.size != self.atoms.shape[0] or w.size == 0:
            raise ValueError("decomposition weights do not match its atoms")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"decomposition weights must be a probability vector (sum={w.sum()!r})")

    @cached_property
    def cdf(self) -> np.ndarray:
        """Cumulative weights; validates the decomposition on first use."""
        self.check()
        return np.cumsum(self.weights)


def linear_oracle(w: np.ndarray, S: ScheduleSet) -> np.ndarray:
    """Schedule maximizing w . sigma; ties go to the lexicographically smallest atom."""
    scores = S.atoms @ np.asarray(w, dtype=float)
    return S.atoms[int(np.argmax(scores))].copy()


def initial_weights(atoms: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Uniform weights on the non-zero atoms, so every servable link starts positive."""
    lam = atoms.any(axis=1).astype(float)
    total = lam.sum()
    if total == 0:
        lam[0] = 1.0
    else:
        lam /= total
    starved = (w > 0) & (lam @ atoms <= 0)
    if starved.any():
        j = int(np.argmax(starved))
        raise SolverError(f"no strictly positive feasible start: link index {j} is never served")
    return lam


def solve_program(
    obj: Objective,
    S: ScheduleSet | np.ndarray,
    q: np.ndarray,
    *,
    tol: float = DISCRETE_TOL,
    max_iters: int = MAX_ITERS,
    warm_start: np.ndarray | None = None,
) -> MeanSchedule:
    """Maximize sum_j g(s_j) q_j^alpha over the hull of ``S``.

    Links with q_j = 0 drop out of the objective.  ``tol`` is the stopping
    duality gap relative to sum_j q_j^alpha (the argmax does not depend on the
    scale of q).  ``warm_start`` is a previous ``lam`` over the same atoms.
    """
    atoms = S.atoms if isinstance(S, ScheduleSet) else np.asarray(S)
    w = obj.weights(q)
    m, n = atoms.shape
    if w.shape != (n,):
        raise ValueError(f"queue vector has shape {w.shape}, expected ({n},)")
    scale = w.sum()
    if scale == 0.0:
        lam = np.zeros(m)
        zero = int(np.flatnonzero(~np.any(atoms != 0, axis=1))[0]) if m else 0
        lam[zero] = 1.0
        return MeanSchedule(np.zeros(n), 0.0, lam, atoms, 0)
    if obj.is_linear:
        scores = atoms @ w
        i = int(np.argmax(scores))
        lam = np.zeros(m)
        lam[i] = 1.0
        return MeanSchedule(atoms[i].astype(float), 0.0, lam, atoms, 0)
    wn = w / scale
    fatoms = atoms.astype(np.float64)
    lam0 = None
    if warm_start is not None and warm_start.shape == (m,):
        s0 = warm_start @ fatoms
        if np.all(s0[wn > 0] > 0):
            lam0 = warm_start.astype(np.float64)
    if lam0 is None:
        lam0 = initial_weights(atoms, wn)
    kind, beta = obj._code
    lam, s, gap, it = _fw.solve(fatoms, wn, kind, beta, lam0, tol, max_iters)
    if not np.isfinite(gap):
        raise SolverError("solver produced a non-finite duality gap")
    return MeanSchedule(s, max(float(gap * scale), 0.0), lam, atoms, int(it))


def _reduce(lam: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Caratheodory reduction: move along null-space directions of the active
    atoms (lifted by a row of ones) until they are affinely independent."""
    lam = lam.copy()
    while True:
        act = np.flatnonzero(lam > 0)
        if act.size <= 1:
            return lam
        M = np.vstack([atoms[act].T.astype(float), np.ones(act.size)])
        _, sv, vt = np.linalg.svd(M)
        rank = int(np.sum(sv > sv[0] * max(M.shape) * np.finfo(float).eps))
        if rank == act.size:
            return lam
        v = vt[-1]
        if not np.any(v > 1e-12):
            v = -v
        pos = v > 1e-12
        ratios = lam[act][pos] / v[pos]
        k = int(np.argmin(ratios))
        lam[act] -= ratios[k] * v
        lam[act[np.flatnonzero(pos)[k]]] = 0.0
        lam[lam < 1e-15] = 0.0
        lam /= lam.sum()


def caratheodory_decompose(mean: MeanSchedule | np.ndarray, S: ScheduleSet) -> Decomposition:
    """Express a hull point as a convex combination of at most |J| + 1 schedules.

    A ``MeanSchedule`` from ``solve_program`` carries its own weights; a bare
    point is first fitted by nonnegative least squares.
    """
    if isinstance(mean, MeanSchedule):
        atoms = np.asarray(mean.atoms)
        lam = np.asarray(mean.lam, dtype=float)
        target = np.asarray(mean.s, dtype=float)
        keep = np.flatnonzero(lam > 1e-15)
        if 0 < keep.size <= atoms.shape[1] + 1:
            # solver atoms are distinct, so a small support is already a valid answer
            weights = lam[keep] / lam[keep].sum()
            return Decomposition(weights, atoms[keep].astype(np.int64))
    else:
        atoms = S.atoms
        target = np.asarray(mean, dtype=float)
        A = np.vstack([atoms.T.astype(float), np.ones(len(atoms))])
        lam, _ = nnls(A, np.append(target, 1.0))
    lam = np.where(lam > 1e-15, lam, 0.0)
    if lam.sum() <= 0:
        raise NotInHull("no convex weights found for the point")
    lam = lam / lam.sum()
    err = np.max(np.abs(lam @ atoms - target), initial=0.0)
    if err > 1e-7:
        raise NotInHull(f"point is not in the schedule hull (reconstruction error {err:.3g})")
    lam = _reduce(lam, atoms)
    keep = np.flatnonzero(lam > 0)
    kept_atoms = atoms[keep]
    weights = lam[keep]
    # merge repeated atoms (only possible for caller-supplied atom arrays)
    if len({row.tobytes() for row in kept_atoms}) < kept_atoms.shape[0]:
        uniq, inv = np.unique(kept_atoms, axis=0, return_inverse=True)
        weights = np.bincount(inv.ravel(), weights=weights, minlength=uniq.shape[0])
        kept_atoms = uniq
    weights = weights / weights.sum()
    return Decomposition(weights, kept_atoms.astype(np.int64))


def sample_schedule(d: Decomposition, rng: np.random.Generator) -> np.ndarray:
    """Draw atom i with probability ``d.weights[i]``."""
    cdf = d.cdf
    if cdf.size == 1:
        return d.atoms[0].copy()
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return d.atoms[min(i, cdf.size - 1)].copy()
