"""Single-hop fluid model and its Lyapunov drift certificate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ScheduleSet, load_headroom
from ..program import FLUID_TOL, Objective
from .common import FluidTrajectory, MeanScheduleTracker, snap_to_zero


def integrate_single_hop(
    q0: np.ndarray,
    a_bar: np.ndarray,
    obj: Objective,
    S: ScheduleSet,
    T: float,
    dt: float = 1e-3,
    tol: float = FLUID_TOL,
) -> FluidTrajectory:
    """Explicit Euler with projection: q <- max(q + dt (a_bar - sigma*(q)), 0).

    sigma*(q) maximizes the objective over the full schedule hull with empty
    queues left out.  When the load is interior the empty state is absorbing,
    and a state within one step of arrivals is set to zero.
    """
    q = np.asarray(q0, dtype=float).copy()
    a = np.asarray(a_bar, dtype=float)
    if q.shape != (S.n_links,) or a.shape != (S.n_links,):
        raise ValueError("q0 and a_bar need one entry per link")
    if np.any(q < 0) or np.any(a < 0):
        raise ValueError("q0 and a_bar must be nonnegative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(T / dt))
    interior = load_headroom(a, S) > 0
    sigma_star = MeanScheduleTracker(obj, S, tol)
    qs = np.zeros((n_steps + 1, S.n_links))
    sig = np.zeros((n_steps + 1, S.n_links))
    qs[0] = q
    a_total = float(a.sum())
    for k in range(n_steps):
        if interior and not q.any():
            break  # absorbed: the rest of the path is zero
        s = sigma_star(q, k * dt)
        sig[k] = s
        q = np.maximum(q + dt * (a - s), 0.0)
        if interior and snap_to_zero(q, dt, a_total):
            q[:] = 0.0
        qs[k + 1] = q
    if q.any():
        sig[n_steps] = sigma_star(q, T)
    t = np.arange(n_steps + 1) * dt
    return FluidTrajectory(t, qs, qs, sig, dt, S.links)


@dataclass
class DriftCertificateL:
    """Drift certificate for L(q) = sum_j g'(rho_j) q_j^(1+alpha) / (1+alpha)."""

    epsilon: float
    rho: np.ndarray
    gamma: float
    K: float
    T_bound: float
    L: np.ndarray
    envelope: np.ndarray
    drift_ok: bool
    envelope_ok: bool
    monotone_ok: bool
    hitting_time: float
    first_violation: float | None
    gamma_ok: bool

    @property
    def passed(self) -> bool:
        return self.drift_ok and self.envelope_ok and self.hitting_time <= self.T_bound

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "K": self.K,
            "T_bound": self.T_bound,
            "hitting_time": self.hitting_time,
            "drift": "pass" if self.drift_ok else "fail",
            "L_envelope": "pass" if self.envelope_ok else "fail",
            "L_monotone": "pass" if self.monotone_ok else "fail",
            "hits_zero_by_T": "pass" if self.hitting_time <= self.T_bound else "fail",
            "norm_constant_holds": self.gamma_ok,
            "first_violation_t": self.first_violation,
            "verdict": "pass" if self.passed else "fail",
        }


def lyapunov_L(q: np.ndarray, rho: np.ndarray, obj: Objective) -> np.ndarray:
    """L for one state (1-D q) or a path (2-D q)."""
    q = np.asarray(q, dtype=float)
    return (obj.derivative(rho) * q ** (1 + obj.alpha)).sum(axis=-1) / (1 + obj.alpha)


def certify_L_drift(
    traj: FluidTrajectory,
    obj: Objective,
    a_bar: np.ndarray,
    S: ScheduleSet,
    tol: float = 1e-6,
    zero_level: float = 1e-6,
) -> DriftCertificateL:
    """Check the drift inequality and the envelope
    L(q(t))^(1/(1+alpha)) <= L(q(0))^(1/(1+alpha)) - eps gamma^alpha t / (1+alpha)
    at every sample with q != 0, and compare the hitting time of zero with
    T = (1+alpha) K^(1/(1+alpha)) / (eps gamma^alpha).

    The drift inequality used is
    sum_j (a_j - sigma*_j) g'(rho_j) q_j^alpha <= -eps sum_j a_j g'(rho_j) q_j^alpha.
    """
    a = np.asarray(a_bar, dtype=float)
    eps = load_headroom(a, S)
    if not eps > 0:
        raise ValueError(f"load is not interior (headroom {eps:.4g})")
    if np.any(a <= 0) and not obj.is_linear:
        raise ValueError("the certificate needs a positive load on every link")
    alpha = obj.alpha
    rho = (1 + eps) * a
    dg = obj.derivative(rho)
    n = S.n_links
    gamma = (1 + alpha) ** (1 / (1 + alpha)) / n
    K = float(dg.max() / (1 + alpha))
    T_bound = (1 + alpha) * K ** (1 / (1 + alpha)) / (eps * gamma**alpha)

    q = traj.q
    L = lyapunov_L(q, rho, obj)
    p = 1 / (1 + alpha)
    envelope = L[0] ** p - eps * gamma**alpha * traj.t / (1 + alpha)
    # the envelope argument runs while q != 0; afterwards L stays at 0
    env_bad = (L > 0) & (L**p > envelope + tol)

    qa = q**alpha
    nonzero = q.max(axis=1) > 0
    drift = ((a - traj.sigma) * dg * qa).sum(axis=1)
    bound = -eps * (a * dg * qa).sum(axis=1)
    scale = np.maximum(1.0, np.abs(bound))
    drift_bad = nonzero & (drift > bound + 100 * FLUID_TOL * scale + 1e-12)
    # samples after absorption carry no schedule
    drift_bad[len(traj.t) - 1] = False

    dL = np.diff(L)
    monotone_ok = bool(np.all(dL <= 1e-8 * traj.dt + 1e-12))

    # norm comparison: sum_j a_j g'(rho_j) q_j^alpha >= gamma^alpha L^(alpha/(1+alpha))
    lhs = (a * dg * qa).sum(axis=1)
    gamma_ok = bool(np.all(lhs + 1e-12 >= gamma**alpha * L ** (alpha * p) * (1 - 1e-9)))

    bad = np.flatnonzero(env_bad | drift_bad)
    first = float(traj.t[bad[0]]) if bad.size else None
    return DriftCertificateL(
        epsilon=float(eps),
        rho=rho,
        gamma=float(gamma),
        K=K,
        T_bound=float(T_bound),
        L=L,
        envelope=envelope,
        drift_ok=not drift_bad.any(),
        envelope_ok=not env_bad.any(),
        monotone_ok=monotone_ok,
        hitting_time=traj.hitting_time(zero_level),
        first_violation=first,
        gamma_ok=gamma_ok,
    )
