"""Re-indexing a fixed-route network by (link, route) stations.

Each station has deterministic routing to the next hop of its route.  The
station-level proportionally fair fluid splits every link's service over its
classes through an expanded schedule set, so it can be integrated
independently of the link-level model and compared with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..model import Network, ScheduleSet, load_headroom
from ..program import FLUID_TOL, Objective
from .common import FluidTrajectory, MeanScheduleTracker, snap_to_zero
from .multihop import integrate_multihop

MAX_EXPANDED_ATOMS = 200_000
# halving the step should halve the distance; allow 10% slack on the factor 2
MIN_ORDER_RATIO = 1.8


@dataclass(frozen=True)
class JacksonNetwork:
    stations: tuple[tuple[str, str], ...]
    P: np.ndarray  # P[i, k] = 1 when station i feeds station k
    a: np.ndarray  # external arrival rate per station
    a_bar: np.ndarray  # effective load per station
    station_link: np.ndarray
    links: tuple[str, ...]

    def link_loads(self) -> np.ndarray:
        return np.bincount(self.station_link, weights=self.a_bar, minlength=len(self.links))

    def order(self) -> np.ndarray:
        """Stations in an order where every station follows its feeders."""
        indeg = (self.P > 0).sum(axis=0)
        ready = [i for i in range(len(self.stations)) if indeg[i] == 0]
        out = []
        while ready:
            i = ready.pop(0)
            out.append(i)
            for k in np.flatnonzero(self.P[i] > 0):
                indeg[k] -= 1
                if indeg[k] == 0:
                    ready.append(k)
        if len(out) != len(self.stations):
            raise ValueError("station routing has a cycle")
        return np.array(out)


def kelly_to_jackson(net: Network) -> JacksonNetwork:
    """Stations (j, r); P routes (j, r) to (next hop of r, r); arrivals enter at
    each route's first hop; loads solve a_bar = a + P^T a_bar."""
    n = len(net.stations)
    P = np.zeros((n, n))
    nxt = net.station_next
    has = nxt >= 0
    P[np.flatnonzero(has), nxt[has]] = 1.0
    a = np.zeros(n)
    a[net.ingress] = net.route_rate_vector
    a_bar = np.linalg.solve(np.eye(n) - P.T, a)
    return JacksonNetwork(net.stations, P, a, a_bar, net.station_link.copy(), net.links)


def expanded_schedules(net: Network, S: ScheduleSet | None = None) -> ScheduleSet:
    """Station-level schedules: a link schedule with each link's service given
    to one of its classes."""
    S = net.schedules if S is None else S
    members = net.link_members
    n = len(net.stations)
    rows = []
    count = 0
    for sigma in S.atoms:
        served = [j for j in np.flatnonzero(sigma) if members[j].size > 0]
        count += int(np.prod([members[j].size for j in served])) if served else 1
        if count > MAX_EXPANDED_ATOMS:
            raise ValueError(f"expanded schedule set exceeds {MAX_EXPANDED_ATOMS} atoms")
        for pick in product(*[members[j] for j in served]):
            row = np.zeros(n, dtype=np.int64)
            for j, i in zip(served, pick):
                row[i] = sigma[j]
            rows.append(row)
    names = tuple(f"{j}|{r}" for j, r in net.stations)
    return ScheduleSet(names, np.array(rows))


def integrate_jackson(
    x0: np.ndarray,
    jn: JacksonNetwork,
    S_expanded: ScheduleSet,
    T: float,
    dt: float = 1e-3,
    tol: float = FLUID_TOL,
) -> FluidTrajectory:
    """Station-level fluid: dx_i/dt = a_i + sum_k P_ki gamma*_k - gamma*_i, with
    gamma* maximizing sum_i x_i log gamma_i over the expanded schedule hull.

    Same explicit scheme as the link-level integrator: stations are updated in
    routing order with outflow capped by what is present.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = len(jn.stations)
    if x.shape != (n,) or np.any(x < 0):
        raise ValueError("x0 must be a nonnegative amount per station")
    interior = load_headroom(jn.link_loads(), _link_set(jn, S_expanded)) > 0
    tracker = MeanScheduleTracker(Objective(1.0, "log"), S_expanded, tol, favor_empty=jn.a_bar > 0)
    order = jn.order()
    feeders = [np.flatnonzero(jn.P[:, i] > 0) for i in range(n)]
    n_steps = int(round(T / dt))
    xs = np.zeros((n_steps + 1, n))
    sig = np.zeros((n_steps + 1, len(jn.links)))
    xs[0] = x
    a_total = float(jn.a.sum())
    for k in range(n_steps):
        if interior and not x.any():
            break
        gamma = tracker(x, k * dt)
        sig[k] = np.bincount(jn.station_link, weights=gamma, minlength=len(jn.links))
        new = x.copy()
        out = np.zeros(n)
        for i in order:
            inflow = jn.a[i] + sum(jn.P[f, i] * out[f] for f in feeders[i]) / dt
            avail = x[i] + dt * inflow
            out[i] = min(dt * gamma[i], avail)
            new[i] = avail - out[i]
        x = new
        if interior and snap_to_zero(x, dt, a_total):
            x[:] = 0.0
        xs[k + 1] = x
    if x.any():
        gamma = tracker(x, T)
        sig[n_steps] = np.bincount(jn.station_link, weights=gamma, minlength=len(jn.links))
    t = np.arange(n_steps + 1) * dt
    inc = np.zeros((len(jn.links), n))
    inc[jn.station_link, np.arange(n)] = 1.0
    return FluidTrajectory(t, xs, xs @ inc.T, sig, dt, jn.links)


def _link_set(jn: JacksonNetwork, S_expanded: ScheduleSet) -> ScheduleSet:
    inc = np.zeros((len(jn.stations), len(jn.links)), dtype=np.int64)
    inc[np.arange(len(jn.stations)), jn.station_link] = 1
    return ScheduleSet(jn.links, S_expanded.atoms @ inc)


@dataclass(frozen=True)
class ReductionReport:
    """Distances between the link-level and station-level fluid paths.

    ``sup_diff`` compares both at step ``dt``.  Both use the same update
    order, so that distance is solver noise; the convergence order is read
    from the cross-resolution distances instead: link level at ``dt`` against
    station level at ``dt / 2`` (``cross``), and at ``dt / 2`` against
    ``dt / 4`` (``cross_half``).  First-order agreement halves the distance.
    """

    dt: float
    sup_diff: float
    sup_diff_half: float | None = None
    cross: float | None = None
    cross_half: float | None = None

    @property
    def ratio(self) -> float | None:
        """cross / cross_half; about 2 for first-order convergence to a common path."""
        if self.cross is None or not self.cross_half:
            return None
        return self.cross / self.cross_half

    def passed(self, factor: float = 10.0, min_ratio: float = MIN_ORDER_RATIO) -> bool:
        if self.sup_diff > factor * self.dt:
            return False
        if self.cross is None:
            return True
        if self.cross > factor * self.dt:
            return False
        return self.ratio is not None and self.ratio >= min_ratio

    def as_dict(self) -> dict:
        return {
            "dt": self.dt,
            "sup_diff": self.sup_diff,
            "sup_diff_half": self.sup_diff_half,
            "cross_resolution": self.cross,
            "cross_resolution_half": self.cross_half,
            "ratio": self.ratio,
            "verdict": "pass" if self.passed() else "fail",
        }


def _sup_on_coarse_grid(coarse: FluidTrajectory, fine: FluidTrajectory) -> float:
    step = (len(fine.t) - 1) // (len(coarse.t) - 1)
    return float(np.abs(coarse.state - fine.state[::step]).max())


def reduction_equivalence(
    net: Network, x0: np.ndarray, T: float, dt: float = 1e-3, refine: bool = False
) -> ReductionReport:
    """Compare the link-level and station-level fluid paths from ``x0``.

    With ``refine`` the cross-resolution distances used for the order check
    are computed too (three more integrations).
    """
    jn = kelly_to_jackson(net)
    S_exp = expanded_schedules(net)
    link = integrate_multihop(x0, net, T, dt)
    station = integrate_jackson(x0, jn, S_exp, T, dt)
    same = _sup_on_coarse_grid(link, station)
    if not refine:
        return ReductionReport(dt, same)
    link_half = integrate_multihop(x0, net, T, dt / 2)
    station_half = integrate_jackson(x0, jn, S_exp, T, dt / 2)
    station_quarter = integrate_jackson(x0, jn, S_exp, T, dt / 4)
    return ReductionReport(
        dt,
        same,
        _sup_on_coarse_grid(link_half, station_half),
        _sup_on_coarse_grid(link, station_half),
        _sup_on_coarse_grid(link_half, station_quarter),
    )
