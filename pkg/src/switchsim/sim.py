"""Slotted-time simulation of switched queueing networks.

Within a slot the policy observes the current counts, service is applied and
then the slot's arrivals join the ingress queues.  Counts are kept per
(link, route) station; for single-hop networks stations and links coincide.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .model import MultiHopState, Network, QueueState
from .policies import Policy, ServiceAction

ARRIVAL_BLOCK = 1 << 16
STREAM_NAMES = ("arrivals", "scheduler", "selection")


class ConservationError(AssertionError):
    pass


@dataclass
class Streams:
    """Independent generators spawned from one master seed."""

    arrivals: np.random.Generator
    scheduler: np.random.Generator
    selection: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "Streams":
        children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
        return cls(*(np.random.default_rng(c) for c in children))


@dataclass(frozen=True)
class StabilityThresholds:
    growth_fraction: float = 0.01
    noise_multiplier: float = 3.0
    n_batches: int = 50


@dataclass(frozen=True)
class StabilityDiagnostic:
    """Heuristic verdict from the trend of the total queue over the last half."""

    slope: float
    stderr: float
    verdict: str
    arrival_rate: float
    thresholds: StabilityThresholds = field(default_factory=StabilityThresholds)


@dataclass
class Trajectory:
    slots: np.ndarray
    total: np.ndarray  # total queue after every slot, length horizon + 1 (index 0 is the start)
    snapshots: np.ndarray  # link totals at ``slots``
    arrivals: int
    served: int
    departures: int
    links: tuple[str, ...]

    def to_csv(self, full: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["slot", "total_queue"]
        if full:
            head += [f"q_{j}" for j in self.links]
        w.writerow(head)
        for k, t in enumerate(self.slots):
            row = [int(t), int(self.total[t])]
            if full:
                row += [int(v) for v in self.snapshots[k]]
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path: str | Path, full: bool = True) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_csv(full), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write trajectory to {path}: {exc.strerror}") from exc
        return path


@dataclass
class ExperimentResult:
    trajectory: Trajectory
    diagnostic: StabilityDiagnostic
    final: np.ndarray


@njit(cache=True)
def _advance(x, xi, sigma, arrivals, station_link, prev, ingress, n_links):
    """Apply one slot of service and arrivals.

    Returns (next counts, departures, error code).  Error codes: 1 service
    exceeds the packets present, 2 per-class service disagrees with the
    schedule, 3 link balance broken, 4 packet total broken.
    """
    n = x.shape[0]
    served = np.zeros(n_links, dtype=np.int64)
    for i in range(n):
        if xi[i] < 0 or xi[i] > x[i]:
            return x, 0, 1
        served[station_link[i]] += xi[i]
    for j in range(n_links):
        if served[j] != sigma[j]:
            return x, 0, 2
    x_new = x - xi
    dep = 0
    for i in range(n):
        if prev[i] >= 0:
            x_new[i] += xi[prev[i]]
    inflow = np.zeros(n_links, dtype=np.int64)
    for r in range(ingress.shape[0]):
        x_new[ingress[r]] += arrivals[r]
        inflow[station_link[ingress[r]]] += arrivals[r]
    q_old = np.zeros(n_links, dtype=np.int64)
    q_new = np.zeros(n_links, dtype=np.int64)
    for i in range(n):
        q_old[station_link[i]] += x[i]
        q_new[station_link[i]] += x_new[i]
        if prev[i] >= 0:
            inflow[station_link[i]] += xi[prev[i]]
    total_old = 0
    total_new = 0
    n_arr = 0
    for r in range(arrivals.shape[0]):
        n_arr += arrivals[r]
    for i in range(n):
        total_old += x[i]
        total_new += x_new[i]
        if x_new[i] < 0:
            return x, 0, 4
    # departures are the services not forwarded to a next hop
    forwarded = 0
    for i in range(n):
        if prev[i] >= 0:
            forwarded += xi[prev[i]]
    for i in range(n):
        dep += xi[i]
    dep -= forwarded
    for j in range(n_links):
        if q_new[j] != q_old[j] - sigma[j] + inflow[j]:
            return x, 0, 3
    if total_new != total_old + n_arr - dep:
        return x, 0, 4
    return x_new, dep, 0


_ERRORS = {
    1: "service exceeds the packets present",
    2: "per-class service does not match the schedule",
    3: "link queue balance violated",
    4: "packet conservation violated",
}


def _transfer(net: Network, xi: np.ndarray) -> np.ndarray:
    """Packets arriving at each station from the upstream hop of the same route."""
    inflow = np.zeros_like(xi)
    prev = net.station_prev
    has = prev >= 0
    inflow[has] = xi[prev[has]]
    return inflow


def _inject(net: Network, a_routes: np.ndarray, like: np.ndarray) -> np.ndarray:
    a = np.zeros_like(like)
    np.add.at(a, net.ingress, a_routes)
    return a


def step_single_hop(
    state: QueueState, net: Network, policy: Policy, arrivals: np.ndarray, streams: Streams
) -> tuple[QueueState, ServiceAction]:
    """Q(t+1) = Q(t) - sigma(t+1) + a(t+1) for a single-hop network."""
    if not net.is_single_hop or len(net.stations) != len(net.links):
        raise ValueError("single-hop stepping needs exactly one length-1 route per link")
    x = np.zeros(len(net.stations), dtype=np.int64)
    x[net.station_link] = state.q[net.station_link]
    action = policy.decide(x, streams.scheduler, streams.selection)
    action.check(x, net)
    a = net.link_totals(_inject(net, np.asarray(arrivals, dtype=np.int64), x))
    q_next = state.q - action.sigma + a
    if np.any(q_next < 0):
        raise ConservationError(f"negative queue after slot {state.time + 1}")
    return QueueState(q_next, state.time + 1), action


def step_multihop(
    state: MultiHopState, policy: Policy, arrivals: np.ndarray, streams: Streams
) -> tuple[MultiHopState, ServiceAction]:
    """X_jr(t+1) = X_jr(t) + a_jr(t+1) - xi_jr(t+1) + xi_{j'r}(t+1), j' upstream of j."""
    net = state.network
    action = policy.decide(state.x, streams.scheduler, streams.selection)
    action.check(state.x, net)
    a = _inject(net, np.asarray(arrivals, dtype=np.int64), state.x)
    x_next = state.x + a - action.xi + _transfer(net, action.xi)
    if np.any(x_next < 0):
        raise ConservationError(f"negative class count after slot {state.time + 1}")
    return MultiHopState(x_next, net, state.time + 1), action


def stability_diagnostic(
    total: np.ndarray, arrival_rate: float, thresholds: StabilityThresholds = StabilityThresholds()
) -> StabilityDiagnostic:
    """Least-squares trend of the total queue over the last half of the run.

    The slope and its standard error come from batch means, which keeps the
    error estimate honest under the strong autocorrelation of queue paths.
    """
    series = np.asarray(total[len(total) // 2 :], dtype=float)
    nb = min(thresholds.n_batches, len(series))
    if nb < 3:
        return StabilityDiagnostic(0.0, np.inf, "inconclusive", arrival_rate, thresholds)
    size = len(series) // nb
    trimmed = series[len(series) - nb * size :].reshape(nb, size)
    means = trimmed.mean(axis=1)
    centers = (np.arange(nb) + 0.5) * size
    tc = centers - centers.mean()
    slope = float(tc @ (means - means.mean()) / (tc @ tc))
    resid = means - means.mean() - slope * tc
    stderr = float(np.sqrt(resid @ resid / (nb - 2) / (tc @ tc)))
    if slope > thresholds.growth_fraction * arrival_rate:
        verdict = "growing"
    elif abs(slope) < thresholds.noise_multiplier * stderr:
        verdict = "stable-looking"
    else:
        verdict = "inconclusive"
    return StabilityDiagnostic(slope, stderr, verdict, arrival_rate, thresholds)


def run_experiment(
    net: Network,
    policy: Policy,
    horizon: int,
    seed: int,
    stride: int = 1000,
    x0: np.ndarray | None = None,
    thresholds: StabilityThresholds = StabilityThresholds(),
) -> ExperimentResult:
    """Simulate ``horizon`` slots; conservation is checked on every slot."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1 slot")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    streams = Streams.from_seed(seed)
    proc = net.arrival_process(seed)
    n_st = len(net.stations)
    x = np.zeros(n_st, dtype=np.int64) if x0 is None else np.asarray(x0, dtype=np.int64).copy()
    if x.shape != (n_st,) or np.any(x < 0):
        raise ValueError("initial state must be a nonnegative count per station")
    prev = net.station_prev
    ingress = net.ingress
    station_link = net.station_link
    n_links = len(net.links)

    total = np.empty(horizon + 1, dtype=np.int64)
    total[0] = x.sum()
    slots = np.arange(0, horizon + 1, stride)
    if slots[-1] != horizon:
        slots = np.append(slots, horizon)
    snaps = np.empty((len(slots), n_links), dtype=np.int64)
    snaps[0] = net.link_totals(x)
    k_snap = 1
    n_arr = n_served = n_dep = 0
    block = np.empty((0, len(ingress)), dtype=np.int64)
    pos = 0
    for t in range(1, horizon + 1):
        if pos == len(block):
            block = proc.sample(streams.arrivals, min(ARRIVAL_BLOCK, horizon - t + 1))
            pos = 0
        a_r = block[pos]
        pos += 1
        action = policy.decide(x, streams.scheduler, streams.selection)
        x, dep, err = _advance(x, action.xi, action.sigma, a_r, station_link, prev, ingress, n_links)
        if err:
            raise ConservationError(f"slot {t}: {_ERRORS[err]}")
        n_arr += int(a_r.sum())
        n_dep += dep
        n_served += int(action.sigma.sum())
        total[t] = x.sum()
        if k_snap < len(slots) and slots[k_snap] == t:
            snaps[k_snap] = net.link_totals(x)
            k_snap += 1
    traj = Trajectory(slots, total, snaps, n_arr, n_served, n_dep, net.links)
    rate = float(net.route_rate_vector.sum())
    return ExperimentResult(traj, stability_diagnostic(total, rate, thresholds), x)
