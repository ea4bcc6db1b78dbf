"""Per-node queue counts each policy has to maintain."""

from __future__ import annotations

from dataclasses import dataclass

from .model import Network

REPORT_KINDS = ("backpressure_route", "backpressure_destination", "proportional")


def _destination(net: Network, route: str) -> str:
    return net.endpoints[net.routes[route][-1]][1]


def queue_count_report(net: Network, policy_kind: str) -> dict[str, int]:
    """Queues held at every node under one bookkeeping scheme.

    ``backpressure_route``: one queue per route leaving the node.
    ``backpressure_destination``: one per distinct destination of those routes.
    ``proportional``: one per out-link of the node.
    """
    if policy_kind not in REPORT_KINDS:
        raise ValueError(f"unknown report kind {policy_kind!r}; expected one of {REPORT_KINDS}")
    if policy_kind == "proportional":
        counts = dict.fromkeys(net.nodes, 0)
        for tail, _ in net.endpoints.values():
            counts[tail] += 1
        return counts
    routes_at: dict[str, set[str]] = {n: set() for n in net.nodes}
    for rid, path in net.routes.items():
        for j in path:
            routes_at[net.endpoints[j][0]].add(rid)
    if policy_kind == "backpressure_route":
        return {n: len(rs) for n, rs in routes_at.items()}
    return {n: len({_destination(net, r) for r in rs}) for n, rs in routes_at.items()}


@dataclass(frozen=True)
class NetworkSummary:
    n_nodes: int
    n_links: int
    n_routes: int
    leaves: tuple[str, ...]
    counts: dict[str, dict[str, int]]

    def as_dict(self, node: str | None = None) -> dict:
        counts = self.counts if node is None else {k: {node: v[node]} for k, v in self.counts.items()}
        return {
            "n_nodes": self.n_nodes,
            "n_links": self.n_links,
            "n_routes": self.n_routes,
            "n_leaves": len(self.leaves),
            "queues": counts,
        }


def summarize(net: Network) -> NetworkSummary:
    """Counts for every report kind plus the leaves (nodes touching one edge)."""
    neighbours: dict[str, set[str]] = {n: set() for n in net.nodes}
    for tail, head in net.endpoints.values():
        neighbours[tail].add(head)
        neighbours[head].add(tail)
    leaves = tuple(n for n in net.nodes if len(neighbours[n]) == 1)
    counts = {k: queue_count_report(net, k) for k in REPORT_KINDS}
    return NetworkSummary(len(net.nodes), len(net.links), len(net.routes), leaves, counts)
