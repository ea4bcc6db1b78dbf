"""Multihop proportionally fair fluid model and the entropy Lyapunov function H."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Network, ScheduleSet, load_headroom
from ..program import FLUID_TOL, Objective, solve_program
from .common import ZERO_QUEUE, FluidTrajectory, MeanScheduleTracker, snap_to_zero

PF = Objective(1.0, "log")


def _initial_shares(net: Network, x: np.ndarray) -> np.ndarray:
    q = net.link_totals(x)
    share = np.zeros(len(net.stations))
    for j, members in enumerate(net.link_members):
        if members.size == 0:
            continue
        share[members] = x[members] / q[j] if q[j] >= ZERO_QUEUE else 1.0 / members.size
    return share


def integrate_multihop(
    x0: np.ndarray,
    net: Network,
    T: float,
    dt: float = 1e-3,
    route_rates: np.ndarray | None = None,
    obj: Objective = PF,
    S: ScheduleSet | None = None,
    tol: float = FLUID_TOL,
) -> FluidTrajectory:
    """Euler scheme for the per-(link, route) fluid.

    Station (j, r) is drained at rate (x_jr / q_j) sigma*_j(q) and feeds the next
    hop of r; the first hop receives a_r.  Hops are updated in route order with
    outflow capped by what is present, so mass is conserved exactly.  Class
    shares at links with q_j below ``ZERO_QUEUE`` are frozen at their last value,
    and such links carrying load are served where that costs the others nothing.
    """
    S = net.schedules if S is None else S
    a_r = net.route_rate_vector if route_rates is None else np.asarray(route_rates, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    n_st = len(net.stations)
    if x.shape != (n_st,) or np.any(x < 0):
        raise ValueError("x0 must be a nonnegative amount per station")
    if a_r.shape != (len(net.route_ids),) or np.any(a_r < 0):
        raise ValueError("route rates must be nonnegative, one per route")
    if not dt > 0:
        raise ValueError("dt must be positive")
    link_load = np.zeros(len(net.links))
    for r, rid in enumerate(net.route_ids):
        for j in net.routes[rid]:
            link_load[net.link_index[j]] += a_r[r]
    interior = load_headroom(link_load, S) > 0
    n_steps = int(round(T / dt))
    sigma_star = MeanScheduleTracker(obj, S, tol, favor_empty=link_load > 0)
    chains = [np.array([net.station_index[(j, rid)] for j in net.routes[rid]]) for rid in net.route_ids]
    link_of = net.station_link
    share = _initial_shares(net, x)
    xs = np.zeros((n_steps + 1, n_st))
    sig = np.zeros((n_steps + 1, len(net.links)))
    xs[0] = x
    a_total = float(a_r.sum())
    for k in range(n_steps):
        if interior and not x.any():
            break
        q = net.link_totals(x)
        live = q[link_of] >= ZERO_QUEUE
        share[live] = x[live] / q[link_of[live]]
        s = sigma_star(q, k * dt)
        sig[k] = s
        rate = share * s[link_of]
        new = x.copy()
        for r, chain in enumerate(chains):
            inflow = a_r[r]
            for i in chain:
                avail = x[i] + dt * inflow
                out = min(dt * rate[i], avail)
                new[i] = avail - out
                inflow = out / dt
        x = new
        if interior and snap_to_zero(x, dt, a_total):
            x[:] = 0.0
        xs[k + 1] = x
    if x.any():
        sig[n_steps] = sigma_star(net.link_totals(x), T)
    t = np.arange(n_steps + 1) * dt
    qs = xs @ net.incidence.T.astype(float)
    return FluidTrajectory(t, xs, qs, sig, dt, net.links)


def lyapunov_H(
    x: np.ndarray,
    net: Network,
    route_rates: np.ndarray | None = None,
    sigma: np.ndarray | None = None,
    tol: float = FLUID_TOL,
) -> float:
    """H(x) = sum_r sum_{j in r} x_jr log(x_jr sigma*_j(q) / (q_j a_r)).

    Terms with x_jr = 0 contribute 0.  ``sigma`` may carry a precomputed
    sigma*(q); otherwise the proportionally fair program is solved.
    """
    x = np.asarray(x, dtype=float)
    if not x.any():
        return 0.0
    a_r = net.station_route_rate if route_rates is None else np.asarray(route_rates, dtype=float)[
        [net.route_ids.index(r) for _, r in net.stations]
    ]
    q = net.link_totals(x)
    if sigma is None:
        sigma = solve_program(PF, net.schedules, q, tol=tol).s
    pos = x > 0
    if np.any(pos & (a_r <= 0)):
        raise ValueError("H is undefined: a route with zero rate holds mass")
    j = net.station_link[pos]
    return float(np.sum(x[pos] * np.log(x[pos] * sigma[j] / (q[j] * a_r[pos]))))


def entropy_split(x: np.ndarray, net: Network, sigma: np.ndarray) -> tuple[float, float]:
    """(sum_j q_j log(sigma_j / a_j), sum_jr x_jr log((x_jr/q_j) / (a_r/a_j))).

    H is the sum of the two parts; the second is a weighted relative entropy
    and so nonnegative.
    """
    x = np.asarray(x, dtype=float)
    q = net.link_totals(x)
    a_link = net.link_loads
    a_st = net.station_route_rate
    link = net.station_link
    live = q > 0
    first = float(np.sum(q[live] * np.log(sigma[live] / a_link[live])))
    pos = x > 0
    second = float(
        np.sum(x[pos] * np.log((x[pos] / q[link[pos]]) / (a_st[pos] / a_link[link[pos]])))
    )
    return first, second


def grad_H_closed_form(x: np.ndarray, net: Network, sigma: np.ndarray) -> np.ndarray:
    q = net.link_totals(x)
    j = net.station_link
    return np.log(x * sigma[j] / (q[j] * net.station_route_rate))


@dataclass(frozen=True)
class GradientReport:
    max_rel_error: float
    closed_form: np.ndarray
    finite_difference: np.ndarray


def grad_H_check(x: np.ndarray, net: Network, h: float = 1e-6, tol: float = 1e-14) -> GradientReport:
    """Central differences of H against log(x_jr sigma*_j / (q_j a_r)).

    The error of each partial is measured relative to max(|closed form|, 1).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("the gradient check needs every class amount positive")
    sigma = solve_program(PF, net.schedules, net.link_totals(x), tol=tol).s
    cf = grad_H_closed_form(x, net, sigma)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (lyapunov_H(x + e, net, tol=tol) - lyapunov_H(x - e, net, tol=tol)) / (2 * h)
    err = np.abs(fd - cf) / np.maximum(np.abs(cf), 1.0)
    return GradientReport(float(err.max()), cf, fd)


@dataclass
class EntropyMonitor:
    t: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    epsilon_hat: float
    worst_drift: float
    hitting_time: float
    stays_zero: bool
    nonincreasing: bool
    strictly_negative: bool
    floor_ok: bool
    first_violation: float | None
    headroom: float

    @property
    def passed(self) -> bool:
        return self.stays_zero and self.nonincreasing and self.strictly_negative

    def as_dict(self) -> dict:
        return {
            "headroom": self.headroom,
            "epsilon_hat": self.epsilon_hat,
            "min_decrease_rate": -self.worst_drift,
            "hitting_time": self.hitting_time,
            "stays_zero": self.stays_zero,
            "H_nonincreasing": "pass" if self.nonincreasing else "fail",
            "dH_negative": "pass" if self.strictly_negative else "fail",
            "dH_below_floor": "pass" if self.floor_ok else "fail",
            "first_violation_t": self.first_violation,
            "verdict": "pass" if self.passed else "fail",
        }


def certify_H_drift(
    traj: FluidTrajectory,
    net: Network,
    epsilon_hat: float | None = None,
    tol: float = 1e-9,
    zero_level: float = 1e-6,
    window: float = 0.02,
) -> EntropyMonitor:
    """Difference H along a multihop trajectory over time steps of ``window``.

    Differencing over a few Euler steps averages out the step-to-step
    alternation of service between empty links that share capacity.

    Checks that H never increases, that the forward difference of H is
    strictly negative wherever q != 0, and reports the smallest observed
    decrease rate next to the floor ``epsilon_hat``.  By default the floor is
    (delta / L^2)^2 sigma_max with delta the load headroom and L the longest
    route; it is reported, not required, since its form is uncertain.
    """
    delta = load_headroom(net.link_loads, net.schedules)
    if not delta > 0:
        raise ValueError(f"load is not interior (headroom {delta:.4g})")
    longest = max(len(p) for p in net.routes.values())
    if epsilon_hat is None:
        epsilon_hat = (delta / longest**2) ** 2 * net.schedules.sigma_max
    stride = max(1, int(round(window / traj.dt)))
    idx = np.arange(0, len(traj.t), stride)
    H = np.array([lyapunov_H(traj.state[k], net, sigma=traj.sigma[k]) for k in idx])
    dH = np.diff(H) / (stride * traj.dt)
    moving = traj.q[idx[:-1]].max(axis=1) > 0
    worst = float(dH[moving].max()) if moving.any() else 0.0
    increase = moving & (dH > tol)
    not_negative = moving & (dH >= 0)
    hit = traj.hitting_time(zero_level)
    after = traj.t >= hit
    stays = bool(np.all(traj.q[after].max(axis=1) <= zero_level)) if np.isfinite(hit) else False
    bad = np.flatnonzero(not_negative)
    return EntropyMonitor(
        t=traj.t[idx],
        H=H,
        dH=np.append(dH, 0.0),
        epsilon_hat=float(epsilon_hat),
        worst_drift=worst,
        hitting_time=hit,
        stays_zero=stays,
        nonincreasing=not increase.any(),
        strictly_negative=not not_negative.any(),
        floor_ok=worst <= -epsilon_hat + tol,
        first_violation=float(traj.t[idx[bad[0]]]) if bad.size else None,
        headroom=float(delta),
    )
