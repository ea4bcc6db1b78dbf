"""Domain types for switched queueing networks.

A network is a set of directed links between nodes, a finite set of integer
schedules over those links, and fixed routes (ordered link sequences) carrying
external traffic.  Single-hop networks are the special case where every route
has exactly one link.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-9

ARRIVAL_KINDS = ("bernoulli", "poisson", "deterministic-batch")


class NetworkValidationError(ValueError):
    """Base class for invalid network or schedule descriptions."""


class ZeroScheduleMissing(NetworkValidationError):
    pass


class InvalidSchedule(NetworkValidationError):
    pass


class LinkNeverServed(NetworkValidationError):
    pass


class UnknownLink(NetworkValidationError):
    pass


class UnknownNode(NetworkValidationError):
    pass


class RouteNotChained(NetworkValidationError):
    pass


class RouteCycle(NetworkValidationError):
    pass


class NegativeRate(NetworkValidationError):
    pass


class DuplicateId(NetworkValidationError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScheduleSet:
    """Finite set of schedules over an ordered list of links.

    Atoms are stored deduplicated and sorted lexicographically, so "first
    maximizer" and "lexicographically smallest maximizer" coincide.
    """

    links: tuple[str, ...]
    atoms: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.atoms)
        if a.ndim != 2 or a.shape[1] != len(self.links):
            raise InvalidSchedule(
                f"schedules must be vectors of length {len(self.links)}, got shape {a.shape}"
            )
        if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
            raise InvalidSchedule("schedule components must be integers")
        a = a.astype(np.int64)
        if np.any(a < 0):
            bad = a[np.any(a < 0, axis=1)][0]
            raise InvalidSchedule(f"schedule {bad.tolist()} has a negative component")
        a = np.unique(a, axis=0)  # sorted lexicographically
        if not np.any(np.all(a == 0, axis=1)):
            raise ZeroScheduleMissing("zero schedule missing")
        object.__setattr__(self, "atoms", _frozen(a))

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def sigma_max(self) -> int:
        return int(self.atoms.max()) if self.atoms.size else 0

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def check_coverage(self) -> None:
        """Raise unless every link is served by some schedule (non-empty interior)."""
        served = self.atoms.max(axis=0) >= 1
        if not served.all():
            j = self.links[int(np.argmin(served))]
            raise LinkNeverServed(f"link {j!r} is never served by any schedule")

    def __repr__(self) -> str:
        return f"ScheduleSet(links={self.links}, n_atoms={len(self)})"


def truncate_schedules(S: ScheduleSet, Q: Sequence[int] | np.ndarray) -> ScheduleSet:
    """Return S_Q = {sigma ^ Q}: schedules capped by the queue contents."""
    Q = np.asarray(Q, dtype=np.int64)
    if np.any(Q < 0):
        raise ValueError("queue sizes must be nonnegative")
    if np.all(Q >= S.sigma_max):
        return S
    return ScheduleSet(S.links, np.minimum(S.atoms, Q[None, :]))


@dataclass(frozen=True)
class QueueState:
    q: np.ndarray
    time: int = 0

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=np.int64)
        if np.any(q < 0):
            raise ValueError("queue sizes must be nonnegative")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class MultiHopState:
    """Per-(link, route) counts X_jr, indexed like ``Network.stations``."""

    x: np.ndarray
    network: "Network" = field(repr=False)
    time: int = 0

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.int64)
        if x.shape != (len(self.network.stations),):
            raise ValueError(f"expected {len(self.network.stations)} station counts, got {x.shape}")
        if np.any(x < 0):
            raise ValueError("class counts must be nonnegative")
        object.__setattr__(self, "x", x)

    @property
    def q(self) -> np.ndarray:
        return self.network.link_totals(self.x)

    def count(self, link: str, route: str) -> int:
        return int(self.x[self.network.station_index[(link, route)]])


@dataclass(frozen=True)
class ArrivalProcess:
    """I.i.d. per-slot arrival counts with finite second moment.

    ``deterministic-batch`` delivers exactly ``mean`` packets every slot, so its
    means must be integers.
    """

    kind: str
    means: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"unknown arrival kind {self.kind!r}; expected one of {ARRIVAL_KINDS}")
        m = np.asarray(self.means, dtype=float)
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise NegativeRate("arrival means must be finite and nonnegative")
        if self.kind == "bernoulli" and np.any(m > 1):
            raise ValueError("bernoulli arrivals need means <= 1")
        if self.kind == "deterministic-batch" and not np.allclose(m, np.round(m)):
            raise ValueError("deterministic-batch arrivals need integer means")
        object.__setattr__(self, "means", _frozen(m))

    def second_moment_bound(self) -> float:
        """K with E[a^2] <= K for every stream."""
        m = self.means
        if self.kind == "bernoulli":
            return float(m.max(initial=0.0))
        if self.kind == "poisson":
            return float((m + m**2).max(initial=0.0))
        return float((m**2).max(initial=0.0))

    def sample(self, rng: np.random.Generator, n_slots: int) -> np.ndarray:
        shape = (n_slots, self.means.size)
        if self.kind == "bernoulli":
            return (rng.random(shape) < self.means).astype(np.int64)
        if self.kind == "poisson":
            return rng.poisson(self.means, size=shape).astype(np.int64)
        return np.broadcast_to(np.round(self.means).astype(np.int64), shape).copy()


@dataclass(frozen=True, eq=False)
class Network:
    """Nodes, directed links, fixed routes with ingress rates, and schedules."""

    nodes: tuple[str, ...]
    endpoints: Mapping[str, tuple[str, str]]
    routes: Mapping[str, tuple[str, ...]]
    route_rates: Mapping[str, float]
    schedules: ScheduleSet
    arrival_kind: str = "bernoulli"
    arrival_seed: int | None = None

    @property
    def links(self) -> tuple[str, ...]:
        return self.schedules.links

    @cached_property
    def link_index(self) -> dict[str, int]:
        return {j: i for i, j in enumerate(self.links)}

    @cached_property
    def route_ids(self) -> tuple[str, ...]:
        return tuple(self.routes)

    @cached_property
    def stations(self) -> tuple[tuple[str, str], ...]:
        """(link, route) classes, grouped by route in hop order."""
        return tuple((j, r) for r in self.route_ids for j in self.routes[r])

    @cached_property
    def station_index(self) -> dict[tuple[str, str], int]:
        return {s: i for i, s in enumerate(self.stations)}

    @cached_property
    def station_link(self) -> np.ndarray:
        return _frozen(np.array([self.link_index[j] for j, _ in self.stations], dtype=np.int64))

    @cached_property
    def link_members(self) -> tuple[np.ndarray, ...]:
        """Station indices at each link, ordered by route id."""
        members: list[list[int]] = [[] for _ in self.links]
        for i in sorted(range(len(self.stations)), key=lambda i: self.stations[i][1]):
            members[self.station_link[i]].append(i)
        return tuple(_frozen(np.array(m, dtype=np.int64)) for m in members)

    @cached_property
    def one_class_per_link(self) -> bool:
        return all(m.size == 1 for m in self.link_members)

    @cached_property
    def station_next(self) -> np.ndarray:
        """Index of the downstream station on the same route, or -1 at the last hop."""
        nxt = np.full(len(self.stations), -1, dtype=np.int64)
        for r in self.route_ids:
            path = self.routes[r]
            for a, b in zip(path, path[1:]):
                nxt[self.station_index[(a, r)]] = self.station_index[(b, r)]
        return _frozen(nxt)

    @cached_property
    def station_prev(self) -> np.ndarray:
        prev = np.full(len(self.stations), -1, dtype=np.int64)
        for i, n in enumerate(self.station_next):
            if n >= 0:
                prev[n] = i
        return _frozen(prev)

    @cached_property
    def ingress(self) -> np.ndarray:
        """Station index of each route's first hop, in ``route_ids`` order."""
        return _frozen(
            np.array([self.station_index[(self.routes[r][0], r)] for r in self.route_ids], dtype=np.int64)
        )

    @cached_property
    def route_rate_vector(self) -> np.ndarray:
        return _frozen(np.array([self.route_rates[r] for r in self.route_ids], dtype=float))

    @cached_property
    def station_route_rate(self) -> np.ndarray:
        return _frozen(np.array([self.route_rates[r] for _, r in self.stations], dtype=float))

    @cached_property
    def incidence(self) -> np.ndarray:
        """(n_links, n_stations) 0/1 matrix mapping class counts to link totals."""
        m = np.zeros((len(self.links), len(self.stations)), dtype=np.int64)
        m[self.station_link, np.arange(len(self.stations))] = 1
        return _frozen(m)

    @cached_property
    def link_loads(self) -> np.ndarray:
        """Per-link load: sum of rates of the routes traversing each link."""
        loads = np.zeros(len(self.links))
        for r, path in self.routes.items():
            for j in path:
                loads[self.link_index[j]] += self.route_rates[r]
        return _frozen(loads)

    @cached_property
    def is_single_hop(self) -> bool:
        return all(len(p) == 1 for p in self.routes.values())

    def link_totals(self, x: np.ndarray) -> np.ndarray:
        return np.bincount(self.station_link, weights=x, minlength=len(self.links)).astype(
            np.asarray(x).dtype
        )

    def arrival_process(self, seed: int | None = None) -> ArrivalProcess:
        return ArrivalProcess(
            self.arrival_kind,
            self.route_rate_vector,
            self.arrival_seed if seed is None else seed,
        )

    def with_rates(self, rates: Mapping[str, float]) -> "Network":
        return Network(
            self.nodes, self.endpoints, self.routes, dict(rates), self.schedules,
            self.arrival_kind, self.arrival_seed,
        )

    def scaled(self, factor: float) -> "Network":
        return self.with_rates({r: factor * v for r, v in self.route_rates.items()})


def _require(d: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in d:
        raise NetworkValidationError(f"{where}: missing key {key!r}")
    return d[key]


def validate_network(desc: Mapping[str, Any]) -> Network:
    """Build a ``Network`` from a parsed JSON description.

    Expected keys: ``nodes``, ``links`` (``id``, ``tail``, ``head``),
    ``schedules`` (integer arrays ordered like ``links``), ``routes``
    (``id``, ``links``, ``rate``) and optionally ``arrivals`` (``kind``, ``seed``).
    """
    nodes = tuple(str(n) for n in _require(desc, "nodes", "network"))
    if len(set(nodes)) != len(nodes):
        raise DuplicateId("duplicate node id")
    node_set = set(nodes)

    endpoints: dict[str, tuple[str, str]] = {}
    for raw in _require(desc, "links", "network"):
        jid = str(_require(raw, "id", "link"))
        tail, head = str(_require(raw, "tail", f"link {jid!r}")), str(_require(raw, "head", f"link {jid!r}"))
        if jid in endpoints:
            raise DuplicateId(f"duplicate link id {jid!r}")
        for n in (tail, head):
            if n not in node_set:
                raise UnknownNode(f"link {jid!r} references unknown node {n!r}")
        if tail == head:
            raise NetworkValidationError(f"link {jid!r} is a self-loop at {tail!r}")
        endpoints[jid] = (tail, head)
    links = tuple(endpoints)

    raw_atoms = _require(desc, "schedules", "network")
    atoms = np.array(raw_atoms, dtype=float).reshape(len(raw_atoms), -1) if raw_atoms else np.zeros((0, len(links)))
    schedules = ScheduleSet(links, atoms)
    schedules.check_coverage()

    routes: dict[str, tuple[str, ...]] = {}
    rates: dict[str, float] = {}
    for raw in _require(desc, "routes", "network"):
        rid = str(_require(raw, "id", "route"))
        if rid in routes:
            raise DuplicateId(f"duplicate route id {rid!r}")
        path = tuple(str(j) for j in _require(raw, "links", f"route {rid!r}"))
        if not path:
            raise NetworkValidationError(f"route {rid!r} has no links")
        for j in path:
            if j not in endpoints:
                raise UnknownLink(f"route {rid!r} references unknown link {j!r}")
        for a, b in zip(path, path[1:]):
            if endpoints[a][1] != endpoints[b][0]:
                raise RouteNotChained(
                    f"route {rid!r}: link {a!r} ends at {endpoints[a][1]!r} "
                    f"but link {b!r} starts at {endpoints[b][0]!r}"
                )
        visited = [endpoints[path[0]][0]] + [endpoints[j][1] for j in path]
        if len(set(visited)) != len(visited):
            raise RouteCycle(f"route {rid!r} revisits a node")
        rate = float(_require(raw, "rate", f"route {rid!r}"))
        if not np.isfinite(rate) or rate < 0:
            raise NegativeRate(f"route {rid!r} has invalid rate {rate}")
        routes[rid] = path
        rates[rid] = rate

    arrivals = desc.get("arrivals") or {}
    kind = str(arrivals.get("kind", "bernoulli"))
    seed = arrivals.get("seed")
    net = Network(nodes, endpoints, routes, rates, schedules, kind, None if seed is None else int(seed))
    net.arrival_process()  # validates kind against the rates
    return net


def headroom_lp(a_bar: Sequence[float] | np.ndarray, S: ScheduleSet) -> tuple[float, np.ndarray]:
    """Solve max theta s.t. sum_w w*sigma >= theta*a_bar, w a probability vector.

    Returns ``(theta, w)``; ``theta`` is ``inf`` when ``a_bar`` is zero.
    """
    a = np.asarray(a_bar, dtype=float)
    if np.any(a < 0):
        raise NegativeRate("arrival rates must be nonnegative")
    m = len(S)
    if not np.any(a > 0):
        w = np.zeros(m)
        w[0] = 1.0
        return float("inf"), w
    unserved = (a > 0) & (S.atoms.max(axis=0) == 0)
    if unserved.any():
        j = S.links[int(np.argmax(unserved))]
        raise LinkNeverServed(f"link never served: {j!r} has positive load but no schedule serves it")
    # variables: w_1..w_m, theta
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-S.atoms.T.astype(float), a[:, None]])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    res = linprog(
        c, A_ub=A_ub, b_ub=np.zeros(len(a)), A_eq=A_eq, b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)], method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"headroom LP failed: {res.message}")
    return float(res.x[-1]), res.x[:m]


def load_headroom(a_bar: Sequence[float] | np.ndarray, S: ScheduleSet) -> float:
    """Largest eps with (1 + eps) * a_bar dominated by a point of the schedule hull.

    Positive exactly when ``a_bar`` lies strictly inside the capacity region.
    """
    theta, _ = headroom_lp(a_bar, S)
    return theta - 1.0


def overload_rate(a_bar: Sequence[float] | np.ndarray, S: ScheduleSet) -> float:
    """Best linear lower bound on the growth rate of ||Q||_1 per slot.

    Solves max_y  y.a_bar - max_sigma y.sigma  over 0 <= y <= 1.  For any such
    y, y.Q(t) grows at least at that rate and ||Q||_1 >= y.Q, so the value is a
    valid long-run slope bound.  Zero when a_bar is inside the capacity region.
    """
    a = np.asarray(a_bar, dtype=float)
    n, m = S.n_links, len(S)
    # variables: y_1..y_n, mu ; minimize -(a.y - mu)
    c = np.concatenate([-a, [1.0]])
    A_ub = np.hstack([S.atoms.astype(float), -np.ones((m, 1))])
    res = linprog(
        c, A_ub=A_ub, b_ub=np.zeros(m),
        bounds=[(0, 1)] * n + [(None, None)], method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"overload LP failed: {res.message}")
    return max(0.0, float(-res.fun))
