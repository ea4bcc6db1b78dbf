"""Shared pieces of the fluid integrators."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import ScheduleSet
from ..program import FLUID_TOL, Objective, SolverError, solve_program

ZERO_QUEUE = 1e-9


@dataclass
class FluidTrajectory:
    """Sampled fluid path.

    ``state`` holds q (single hop) or x per station (multihop) at times ``t``;
    ``sigma`` is the mean schedule used on the step leaving each sample.
    """

    t: np.ndarray
    state: np.ndarray
    q: np.ndarray
    sigma: np.ndarray
    dt: float
    links: tuple[str, ...]
    monitors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        return self.q.sum(axis=1)

    def hitting_time(self, level: float = 1e-6) -> float:
        """First sampled time after which every queue stays at or below ``level``."""
        above = np.flatnonzero(self.q.max(axis=1) > level)
        if above.size == 0:
            return float(self.t[0])
        k = above[-1] + 1
        return float(self.t[k]) if k < len(self.t) else float("inf")

    def to_csv(self, stride: int = 1) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.monitors)
        w.writerow(["t", "total_queue", *names, *[f"q_{j}" for j in self.links]])
        for k in range(0, len(self.t), stride):
            row = [f"{self.t[k]:.6f}", f"{self.total[k]:.10g}"]
            row += [f"{self.monitors[n][k]:.10g}" for n in names]
            row += [f"{v:.10g}" for v in self.q[k]]
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path: str | Path, stride: int = 1) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_csv(stride), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write trajectory to {path}: {exc.strerror}") from exc
        return path


TIE_WEIGHT = 1e-6


class MeanScheduleTracker:
    """sigma*(q) over the full hull, warm-started from the previous call.

    Queues below ``ZERO_QUEUE`` leave the objective.  With ``favor_empty``
    set, links listed in it that are empty get a weight of ``TIE_WEIGHT``
    times the total instead, which breaks ties among optimal schedules toward
    serving them (the limit of the program as those queues tend to zero).
    """

    def __init__(
        self, obj: Objective, S: ScheduleSet, tol: float = FLUID_TOL, favor_empty: np.ndarray | None = None
    ):
        self.obj = obj
        self.S = S
        self.tol = tol
        self.favor_empty = favor_empty
        self._lam: np.ndarray | None = None

    def __call__(self, q: np.ndarray, t: float = 0.0) -> np.ndarray:
        qq = np.where(q >= ZERO_QUEUE, q, 0.0)
        if self.favor_empty is not None and qq.any():
            tie = TIE_WEIGHT * qq.sum()
            qq = np.where(self.favor_empty & (qq == 0), tie, qq)
        try:
            res = solve_program(self.obj, self.S, qq, tol=self.tol, warm_start=self._lam)
        except SolverError as exc:
            raise SolverError(f"at t={t:.6g}: {exc}") from exc
        if qq.any():
            self._lam = res.lam
        return res.s


def snap_to_zero(state: np.ndarray, dt: float, arrival_total: float) -> bool:
    """True when the remaining mass is within one step of arrivals.

    Below that level explicit Euler only re-injects dt * a_bar into emptied
    coordinates, so the path would chatter at O(dt) instead of resting at 0.
    """
    return float(state.sum()) <= dt * arrival_total
