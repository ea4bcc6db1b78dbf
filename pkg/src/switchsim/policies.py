"""Slot-level scheduling policies.

Every policy maps the current class counts ``x`` (one entry per (link, route)
station of the network) to a ``ServiceAction``.  Link-level policies
(MaxWeight-alpha, (alpha, g)) only look at the link totals ``q``; their per-link
service is split over the classes present by a uniform draw without
replacement, which is exactly the Proportional Scheduler's packet selection.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .model import MultiHopState, Network, QueueState, ScheduleSet, truncate_schedules
from .program import (
    Decomposition,
    Objective,
    caratheodory_decompose,
    linear_oracle,
    sample_schedule,
    solve_program,
    DISCRETE_TOL,
)

POLICY_KINDS = ("maxweight_alpha", "alpha_g", "backpressure", "proportional")


@dataclass(frozen=True)
class ServiceAction:
    """Per-link service ``sigma`` and, for multihop use, per-station service ``xi``."""

    sigma: np.ndarray
    xi: np.ndarray | None = None

    def check(self, x: np.ndarray, net: Network) -> None:
        if self.xi is None:
            raise AssertionError("service action has no per-class split")
        if np.any(self.xi < 0) or np.any(self.xi > x):
            raise AssertionError("served more packets than present in some class")
        if not np.array_equal(net.link_totals(self.xi), self.sigma):
            raise AssertionError("per-class service does not add up to the link service")


@dataclass(frozen=True)
class BackPressureWeights:
    w: np.ndarray
    r_star: tuple[str | None, ...]
    station: np.ndarray  # station index of r_star per link, -1 when none


def split_uniform(sigma: np.ndarray, x: np.ndarray, net: Network, rng: np.random.Generator) -> np.ndarray:
    """Serve ``sigma_j`` packets chosen uniformly at random among those at link j.

    The per-route counts follow a multivariate hypergeometric law.
    """
    if net.one_class_per_link:
        xi = sigma[net.station_link].astype(x.dtype)
        if np.any(xi > x):
            raise AssertionError("serving more packets than present")
        return xi
    xi = np.zeros_like(x)
    for j, members in enumerate(net.link_members):
        k = int(sigma[j])
        if k == 0:
            continue
        counts = x[members]
        total = int(counts.sum())
        if k > total:
            raise AssertionError(f"link {net.links[j]}: serving {k} of {total} packets")
        if members.size == 1 or k == total:
            xi[members] = counts if k == total else k
        else:
            xi[members] = rng.multivariate_hypergeometric(counts, k, method="count")
    return xi


def maxweight_alpha(Q: QueueState | np.ndarray, alpha: float, S: ScheduleSet) -> ServiceAction:
    """Vertex of the truncated schedule set maximizing sum_j sigma_j Q_j^alpha."""
    q = _queue(Q)
    w = np.where(q > 0, q.astype(float) ** alpha, 0.0)
    return ServiceAction(linear_oracle(w, truncate_schedules(S, q)))


def alpha_g_policy(
    Q: QueueState | np.ndarray, obj: Objective, S: ScheduleSet, rng: np.random.Generator
) -> ServiceAction:
    """Sample a truncated schedule whose mean maximizes sum_j g(s_j) Q_j^alpha."""
    q = _queue(Q)
    return ServiceAction(sample_schedule(alpha_g_decomposition(q, obj, S), rng))


def alpha_g_decomposition(q: np.ndarray, obj: Objective, S: ScheduleSet) -> Decomposition:
    St = truncate_schedules(S, q)
    if obj.is_linear:
        w = obj.weights(q)
        return Decomposition(np.ones(1), linear_oracle(w, St)[None, :])
    mean = solve_program(obj, St, q, tol=DISCRETE_TOL)
    return caratheodory_decompose(mean, St)


def backpressure_weights(X: MultiHopState) -> BackPressureWeights:
    """w_j = max_r (X_jr - X_{next hop, r})^+, ties to the smallest route id."""
    net = X.network
    x = X.x
    nxt = net.station_next
    downstream = np.where(nxt >= 0, x[np.maximum(nxt, 0)], 0)
    diff = x - downstream
    w = np.zeros(len(net.links))
    st = np.full(len(net.links), -1, dtype=np.int64)
    for j, members in enumerate(net.link_members):
        if members.size == 0:
            continue
        d = diff[members]
        k = int(np.argmax(d))
        if d[k] > 0:
            w[j] = d[k]
            st[j] = members[k]
    r_star = tuple(net.stations[i][1] if i >= 0 else None for i in st)
    return BackPressureWeights(w, r_star, st)


def backpressure(X: MultiHopState, S: ScheduleSet | None = None) -> ServiceAction:
    """BackPressure over the full schedule set.

    Among schedules tied for the largest weighted service, the one whose
    realized service vector is lexicographically smallest is used.  Link j
    serves min(sigma_j, X_{j r*}) packets of route r*_j when w_j > 0.
    """
    net = X.network
    S = net.schedules if S is None else S
    bp = backpressure_weights(X)
    scores = S.atoms @ bp.w
    best = scores.max()
    active = bp.station >= 0
    cap = np.where(active, X.x[np.maximum(bp.station, 0)], 0)
    realized = np.minimum(S.atoms, cap[None, :])
    tied = np.flatnonzero(scores >= best - 1e-12 * max(1.0, abs(best)))
    cand = realized[tied]
    pick = np.lexsort(cand.T[::-1])[0]
    sigma = cand[pick].astype(np.int64)
    xi = np.zeros_like(X.x)
    xi[bp.station[active]] = sigma[active]
    return ServiceAction(sigma, xi)


def proportional_scheduler(
    X: MultiHopState, S: ScheduleSet | None, rng: np.random.Generator, split_rng: np.random.Generator | None = None
) -> ServiceAction:
    """PS1: (1, log) program on link totals; PS2: uniform packet selection per link."""
    net = X.network
    S = net.schedules if S is None else S
    q = X.q
    sigma = sample_schedule(alpha_g_decomposition(q, Objective(1.0, "log"), S), rng)
    xi = split_uniform(sigma, X.x, net, rng if split_rng is None else split_rng)
    return ServiceAction(sigma, xi)


def _queue(Q: QueueState | np.ndarray) -> np.ndarray:
    q = Q.q if isinstance(Q, QueueState) else np.asarray(Q, dtype=np.int64)
    if np.any(q < 0):
        raise ValueError("queue sizes must be nonnegative")
    return q


class Policy:
    """Stateful wrapper used by the simulator: caches decisions by state."""

    kind: str = ""
    cache_size = 4096

    def __init__(self, net: Network):
        self.net = net
        self.S = net.schedules
        self._cache: OrderedDict[bytes, object] = OrderedDict()

    def _memo(self, key: bytes, make):
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        val = make()
        self._cache[key] = val
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return val

    def decide(self, x: np.ndarray, sched_rng: np.random.Generator, split_rng: np.random.Generator) -> ServiceAction:
        raise NotImplementedError


class MaxWeightAlphaPolicy(Policy):
    kind = "maxweight_alpha"

    def __init__(self, net: Network, alpha: float = 1.0):
        super().__init__(net)
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha

    def decide(self, x, sched_rng, split_rng):
        q = self.net.link_totals(x)
        sigma = self._memo(q.tobytes(), lambda: maxweight_alpha(q, self.alpha, self.S).sigma)
        return ServiceAction(sigma, split_uniform(sigma, x, self.net, split_rng))


class AlphaGPolicy(Policy):
    kind = "alpha_g"

    def __init__(self, net: Network, obj: Objective):
        super().__init__(net)
        self.obj = obj

    def decide(self, x, sched_rng, split_rng):
        q = self.net.link_totals(x)
        d = self._memo(q.tobytes(), lambda: alpha_g_decomposition(q, self.obj, self.S))
        sigma = sample_schedule(d, sched_rng)
        return ServiceAction(sigma, split_uniform(sigma, x, self.net, split_rng))


class ProportionalPolicy(AlphaGPolicy):
    kind = "proportional"

    def __init__(self, net: Network):
        super().__init__(net, Objective(1.0, "log"))


class BackPressurePolicy(Policy):
    kind = "backpressure"

    def decide(self, x, sched_rng, split_rng):
        return backpressure(MultiHopState(x, self.net), self.S)


def make_policy(net: Network, kind: str, alpha: float = 1.0, g: str = "log", beta: float | None = None) -> Policy:
    if kind == "maxweight_alpha":
        return MaxWeightAlphaPolicy(net, alpha)
    if kind == "alpha_g":
        return AlphaGPolicy(net, Objective(alpha, g, beta))
    if kind == "backpressure":
        return BackPressurePolicy(net)
    if kind == "proportional":
        return ProportionalPolicy(net)
    raise ValueError(f"unknown policy {kind!r}; expected one of {POLICY_KINDS}")
