"""Built-in networks.

Each preset is produced as a raw description and passed through
``validate_network``.  Route rates are set to ``load`` times the capacity
boundary along the direction where every route carries the same rate.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Any

import numpy as np

from .model import Network, ScheduleSet, headroom_lp, validate_network

MAX_ATOMS = 20_000
MAX_SWITCH_PORTS = 5


@dataclass(frozen=True)
class PresetInfo:
    name: str
    signature: str
    summary: str


PRESETS = (
    PresetInfo("simplex2", "simplex2", "two links from one node, one link served per slot"),
    PresetInfo("tandem2", "tandem2", "one two-hop route, one link served per slot"),
    PresetInfo(
        "tree", "tree(d,D[,n_routes][,interference])",
        "tree with inner degree d and diameter D; leaf-to-leaf routes",
    ),
    PresetInfo("iq-switch", "iq-switch(n)", "n-port input-queued switch; schedules are matchings"),
)


def _unit_atoms(n: int) -> list[list[int]]:
    return [[0] * n] + [[int(i == j) for j in range(n)] for i in range(n)]


def _with_load(raw: dict[str, Any], load: float) -> dict[str, Any]:
    """Scale equal route rates to ``load`` times the capacity boundary."""
    if load < 0:
        raise ValueError("load must be nonnegative")
    links = [l["id"] for l in raw["links"]]
    idx = {j: i for i, j in enumerate(links)}
    per_link = np.zeros(len(links))
    for r in raw["routes"]:
        for j in r["links"]:
            per_link[idx[j]] += 1.0
    theta, _ = headroom_lp(per_link, ScheduleSet(tuple(links), np.array(raw["schedules"])))
    for r in raw["routes"]:
        r["rate"] = float(load * theta)
    return raw


def simplex2(load: float = 0.9) -> Network:
    raw = {
        "nodes": ["a", "b", "c"],
        "links": [{"id": "l1", "tail": "a", "head": "b"}, {"id": "l2", "tail": "a", "head": "c"}],
        "schedules": _unit_atoms(2),
        "routes": [{"id": "r1", "links": ["l1"]}, {"id": "r2", "links": ["l2"]}],
    }
    return validate_network(_with_load(raw, load))


def tandem2(load: float = 0.9) -> Network:
    raw = {
        "nodes": ["a", "b", "c"],
        "links": [{"id": "l1", "tail": "a", "head": "b"}, {"id": "l2", "tail": "b", "head": "c"}],
        "schedules": _unit_atoms(2),
        "routes": [{"id": "r1", "links": ["l1", "l2"]}],
    }
    return validate_network(_with_load(raw, load))


def tree_nodes(d: int, D: int) -> tuple[list[str], list[tuple[str, str]], list[str]]:
    """Nodes, undirected edges and leaves of the tree with the given degree and diameter.

    The center ``c`` has d children, every other inner node d - 1, and all
    leaves sit at depth D/2.
    """
    if d < 2 or D < 2 or D % 2:
        raise ValueError("tree needs d >= 2 and an even diameter D >= 2")
    if d > 10:
        raise ValueError("tree supports d <= 10")
    nodes, edges = ["c"], []
    level = ["c"]
    for depth in range(D // 2):
        nxt = []
        for u in level:
            for k in range(d if depth == 0 else d - 1):
                v = f"{u}{k}"
                nodes.append(v)
                edges.append((u, v))
                nxt.append(v)
        level = nxt
    return nodes, edges, level


def _tree_path(u: str, v: str) -> list[str]:
    """Node path between two tree nodes (names encode the path from the center)."""
    k = 0
    while k < min(len(u), len(v)) and u[k] == v[k]:
        k += 1
    up = [u[:i] for i in range(len(u), k - 1, -1)]
    down = [v[:i] for i in range(k + 1, len(v) + 1)]
    return up + down


def tree(
    d: int = 3, D: int = 6, n_routes: int | None = None, interference: str = "node", load: float = 0.9
) -> Network:
    """Leaf-to-leaf routes of a tree, in sorted (source, destination) order.

    ``n_routes`` keeps the first routes only and drops links none of them use.
    Interference ``"node"``: each node transmits on at most one out-link per
    slot; ``"single"``: one link in the whole network per slot.
    """
    if interference not in ("node", "single"):
        raise ValueError("interference must be 'node' or 'single'")
    nodes, edges, leaves = tree_nodes(d, D)
    pairs = [(s, t) for s in leaves for t in leaves if s != t]
    if n_routes is not None:
        if not 1 <= n_routes <= len(pairs):
            raise ValueError(f"n_routes must be between 1 and {len(pairs)}")
        pairs = pairs[:n_routes]
    routes = []
    used: dict[str, tuple[str, str]] = {}
    for s, t in pairs:
        path = _tree_path(s, t)
        hops = [f"{a}>{b}" for a, b in zip(path, path[1:])]
        for a, b in zip(path, path[1:]):
            used[f"{a}>{b}"] = (a, b)
        routes.append({"id": f"{s}~{t}", "links": hops})
    link_ids = sorted(used)
    links = [{"id": j, "tail": used[j][0], "head": used[j][1]} for j in link_ids]
    if interference == "single":
        atoms = _unit_atoms(len(link_ids))
    else:
        out: dict[str, list[int]] = {}
        for i, j in enumerate(link_ids):
            out.setdefault(used[j][0], []).append(i)
        n_atoms = int(np.prod([len(v) + 1 for v in out.values()]))
        if n_atoms > MAX_ATOMS:
            raise ValueError(
                f"node interference gives {n_atoms} schedules (cap {MAX_ATOMS}); "
                "use interference='single' or fewer routes"
            )
        atoms = []
        for choice in itertools.product(*[[-1] + v for v in out.values()]):
            a = [0] * len(link_ids)
            for i in choice:
                if i >= 0:
                    a[i] = 1
            atoms.append(a)
    raw = {"nodes": nodes, "links": links, "schedules": atoms, "routes": routes}
    return validate_network(_with_load(raw, load))


def matchings(n: int) -> np.ndarray:
    """All (partial) matchings of an n x n bipartite graph as flattened 0/1 matrices."""
    rows = []
    for k in range(n + 1):
        for ins in itertools.combinations(range(n), k):
            for outs in itertools.permutations(range(n), k):
                m = np.zeros((n, n), dtype=np.int64)
                m[list(ins), list(outs)] = 1
                rows.append(m.ravel())
    return np.array(rows)


def iq_switch(n: int = 3, load: float = 0.9) -> Network:
    """n-port input-queued switch with one virtual output queue per (input, output)."""
    if not 1 <= n <= MAX_SWITCH_PORTS:
        raise ValueError(f"iq-switch supports 1 <= n <= {MAX_SWITCH_PORTS}")
    nodes = [f"in{i}" for i in range(n)] + [f"out{k}" for k in range(n)]
    links = [{"id": f"v{i}{k}", "tail": f"in{i}", "head": f"out{k}"} for i in range(n) for k in range(n)]
    routes = [{"id": f"f{i}{k}", "links": [f"v{i}{k}"]} for i in range(n) for k in range(n)]
    raw = {"nodes": nodes, "links": links, "schedules": matchings(n).tolist(), "routes": routes}
    return validate_network(_with_load(raw, load))


_CALL = re.compile(r"^\s*([a-z0-9-]+)\s*(?:\((.*)\))?\s*$")


def _parse_arg(tok: str) -> Any:
    tok = tok.strip()
    if "=" in tok:
        k, v = tok.split("=", 1)
        return (k.strip(), _parse_arg(v))
    try:
        return int(tok)
    except ValueError:
        return tok.strip("'\"")


def make_preset(text: str, load: float = 0.9) -> Network:
    """Build a preset from a string such as ``"tree(3,4,n_routes=3)"``."""
    m = _CALL.match(text)
    if not m:
        raise ValueError(f"cannot parse preset {text!r}")
    name, argstr = m.group(1), m.group(2)
    args, kwargs = [], {}
    for tok in (argstr or "").split(","):
        if not tok.strip():
            continue
        v = _parse_arg(tok)
        if isinstance(v, tuple):
            kwargs[v[0]] = v[1]
        else:
            args.append(v)
    builders = {"simplex2": simplex2, "tandem2": tandem2, "tree": tree, "iq-switch": iq_switch}
    if name not in builders:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(builders)}")
    try:
        return builders[name](*args, load=load, **kwargs)
    except TypeError as exc:
        raise ValueError(f"bad arguments for preset {name!r}: {exc}") from exc
