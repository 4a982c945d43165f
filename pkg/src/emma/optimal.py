"""Exact minimum-power routing for a snapshot of concurrent flows.

Each flow picks one simple path from an enumerated candidate set; link and node
on/off states follow as the indicator closure of the chosen paths, so flow
conservation and link/node coupling hold by construction. The joint choice is
searched depth-first with branch-and-bound. ``solve_exhaustive`` is the brute
force reference used to check it.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .power import NJ, PowerModel, network_power
from .routing import Path, path_links
from .topology import NetworkGraph, NodeKind, build_graph
from .workload import FlowSpec, read_trace, write_trace

DEFAULT_BUDGET = 10_000_000
_PRUNE_EPS = 1e-7  # W


class SolverBudgetExceeded(RuntimeError):
    def __init__(self, explored: int, budget: int):
        super().__init__(f"search budget of {budget} nodes exhausted ({explored} explored)")
        self.explored = explored
        self.budget = budget


@dataclass
class Snapshot:
    graph: NetworkGraph
    flows: list[FlowSpec]

    def __post_init__(self):
        for f in self.flows:
            for n in (f.src, f.dst):
                if n not in self.graph.nodes:
                    raise ValueError(f"flow {f.flow_id}: endpoint {n} not in graph")


@dataclass
class OptimalSolution:
    status: str  # "optimal" or "infeasible"
    assignment: dict[int, Path] = field(default_factory=dict)
    node_states: dict[int, bool] = field(default_factory=dict)
    link_states: dict[tuple[int, int], bool] = field(default_factory=dict)
    objective: float = math.inf
    explored: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# -- candidate paths ------------------------------------------------------------


def enumerate_simple_paths(g: NetworkGraph, src: int, dst: int, max_hops: int) -> list[Path]:
    """All simple paths with at most ``max_hops`` switch-to-switch hops, lexicographic.

    Host endpoints are reached through their edge switch; hosts are never
    transit nodes.
    """
    if max_hops < 1:
        raise ValueError("max_hops must be at least 1")
    head = (src,) if g.nodes[src].kind is NodeKind.HOST else ()
    tail = (dst,) if g.nodes[dst].kind is NodeKind.HOST else ()
    start, goal = g.attachment(src), g.attachment(dst)
    if start == goal:
        return [head + (start,) + tail] if head or tail else [(start,)]

    found: list[Path] = []
    stack = [start]
    on_path = {start}

    def extend(u: int) -> None:
        if len(stack) - 1 >= max_hops:
            return
        for v in g.adjacency[u]:
            if v in on_path or g.nodes[v].kind is NodeKind.HOST:
                continue
            if v == goal:
                found.append(head + tuple(stack) + (v,) + tail)
                continue
            stack.append(v)
            on_path.add(v)
            extend(v)
            stack.pop()
            on_path.discard(v)

    extend(start)
    found.sort()
    return found


def _candidates(s: Snapshot, max_hops: int) -> list[list[Path]]:
    g = s.graph
    out = []
    for f in s.flows:
        paths = [
            p
            for p in enumerate_simple_paths(g, f.src, f.dst, max_hops)
            if all(g.links[k].capacity >= f.rate for k in path_links(p))
        ]
        out.append(paths)
    return out


def default_max_hops(g: NetworkGraph) -> int:
    """Longest possible simple switch path, so every route is a candidate."""
    return max(1, len(g.switches) - 1)


# -- implied state ---------------------------------------------------------------


def implied_graph(g: NetworkGraph, flows: list[FlowSpec], assignment: dict[int, Path]) -> NetworkGraph:
    """Copy of ``g`` carrying the given routes, with exactly the used elements powered."""
    out = g.copy()
    for link in out.links.values():
        link.load = 0.0
        link.active = out.is_access_link(link.src, link.dst)
    for node in out.nodes.values():
        node.active = node.always_on
    rates = {f.flow_id: f.rate for f in flows}
    for fid, path in assignment.items():
        for u, v in path_links(path):
            out.links[(u, v)].load += rates[fid]
            out.links[(u, v)].active = True
            out.links[(v, u)].active = True
            out.nodes[u].active = True
            out.nodes[v].active = True
    return out


def _solution(s: Snapshot, m: PowerModel, assignment: dict[int, Path], explored: int) -> OptimalSolution:
    g = s.graph
    used = {k for p in assignment.values() for k in path_links(p)}
    on_nodes = {n for k in used for n in k}
    return OptimalSolution(
        status="optimal",
        assignment=dict(assignment),
        node_states={n: (node.always_on or n in on_nodes) for n, node in g.nodes.items()},
        link_states={k: (k in used) for k in g.links},
        objective=network_power(implied_graph(g, s.flows, assignment), m),
        explored=explored,
    )


# -- solvers ----------------------------------------------------------------------


def solve_optimal(
    s: Snapshot,
    m: PowerModel,
    max_hops: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> OptimalSolution:
    """Minimum instantaneous power over all capacity-feasible joint path choices.

    Ties between co-optimal assignments go to the lexicographically least
    sequence of paths (flows in ascending id order).
    """
    g = s.graph
    if max_hops is None:
        max_hops = default_max_hops(g)
    flows = sorted(s.flows, key=lambda f: f.flow_id)
    snap = Snapshot(g, flows)
    cands = _candidates(snap, max_hops)
    if any(not c for c in cands):
        return OptimalSolution(status="infeasible")
    if not flows:
        return _solution(snap, m, {}, 1)

    jpb = m.joules_per_bit()
    p_idle = m.p_idle
    n_edge = sum(1 for n in g.nodes.values() if n.kind is NodeKind.EDGE)
    is_core = {n: node.kind is NodeKind.CORE for n, node in g.nodes.items()}

    # per candidate: link keys, core set, traffic (rate x hops)
    prepared = []
    for f, paths in zip(flows, cands):
        rows = []
        for p in paths:
            rows.append((p, path_links(p), [n for n in p if is_core[n]], f.rate * (len(p) - 1)))
        # short routes first so a good incumbent appears early
        rows.sort(key=lambda r: (len(r[0]), r[0]))
        prepared.append(rows)
    min_traffic = [min(r[3] for r in rows) for rows in prepared]
    tail_traffic = [sum(min_traffic[i:]) for i in range(len(flows) + 1)]

    loads: dict[tuple[int, int], float] = {}
    core_use: dict[int, int] = {}
    chosen: list[Path] = []
    best_key = math.inf
    best: tuple[Path, ...] | None = None
    explored = 0
    n = len(flows)

    def activation_bound(i: int) -> int:
        # every remaining flow must power at least this many currently-off cores
        need = 0
        for rows in prepared[i:]:
            lo = min(sum(1 for c in r[2] if not core_use.get(c)) for r in rows)
            if lo > need:
                need = lo
        return need

    def visit(i: int, on_cores: int, traffic: float) -> None:
        nonlocal best_key, best, explored
        explored += 1
        if explored > budget:
            raise SolverBudgetExceeded(explored, budget)
        base = p_idle * (n_edge + on_cores)
        if i == n:
            key = base + jpb * traffic
            cand = tuple(chosen)
            if key < best_key or (key == best_key and best is not None and cand < best):
                best_key, best = key, cand
            return
        bound = base + p_idle * activation_bound(i) + jpb * (traffic + tail_traffic[i])
        if bound > best_key + _PRUNE_EPS:
            return
        f = flows[i]
        for path, links, cores, t in prepared[i]:
            if any(loads.get(k, 0.0) + f.rate > g.links[k].capacity for k in links):
                continue
            new_on = 0
            for c in cores:
                if not core_use.get(c):
                    new_on += 1
                core_use[c] = core_use.get(c, 0) + 1
            for k in links:
                loads[k] = loads.get(k, 0.0) + f.rate
            chosen.append(path)
            visit(i + 1, on_cores + new_on, traffic + t)
            chosen.pop()
            for k in links:
                loads[k] -= f.rate
            for c in cores:
                core_use[c] -= 1

    visit(0, 0, 0.0)
    if best is None:
        return OptimalSolution(status="infeasible", explored=explored)
    return _solution(snap, m, {f.flow_id: p for f, p in zip(flows, best)}, explored)


def solve_exhaustive(s: Snapshot, m: PowerModel, max_hops: int | None = None) -> OptimalSolution:
    """Brute-force reference: score every joint assignment on a materialized graph."""
    g = s.graph
    if max_hops is None:
        max_hops = default_max_hops(g)
    flows = sorted(s.flows, key=lambda f: f.flow_id)
    snap = Snapshot(g, flows)
    cands = _candidates(snap, max_hops)
    jpb = m.joules_per_bit()
    best_key = math.inf
    best = None
    count = 0
    for combo in itertools.product(*cands):
        count += 1
        assignment = {f.flow_id: p for f, p in zip(flows, combo)}
        state = implied_graph(g, flows, assignment)
        if any(l.load > l.capacity for l in state.links.values()):
            continue
        n_on = sum(1 for node in state.nodes.values() if node.active and node.kind is not NodeKind.HOST)
        traffic = sum(f.rate * (len(p) - 1) for f, p in zip(flows, combo))
        key = m.p_idle * n_on + jpb * traffic
        if key < best_key or (key == best_key and combo < best):
            best_key, best = key, combo
    if best is None:
        return OptimalSolution(status="infeasible", explored=count)
    return _solution(snap, m, {f.flow_id: p for f, p in zip(flows, best)}, count)


# -- independent verification -------------------------------------------------------


def verify_solution(s: Snapshot, sol: OptimalSolution, m: PowerModel, big_m: int, tol: float = 1e-9) -> bool:
    """Check a solution against the raw formulation: balance, capacity, big-M coupling, objective."""
    g = s.graph
    N = len(g.nodes)
    if big_m < 2 * (N - 1):
        raise ValueError(f"big-M must be at least 2(N-1) = {2 * (N - 1)}")
    if not sol.optimal:
        return False
    by_id = {f.flow_id: f for f in s.flows}
    if set(sol.assignment) != set(by_id):
        return False

    tau = {k: 0.0 for k in g.links}
    for fid, path in sol.assignment.items():
        f = by_id[fid]
        if path[0] != f.src or path[-1] != f.dst or len(set(path)) != len(path):
            return False
        for k in path_links(path):
            if k not in tau:
                return False
            tau[k] += f.rate

    x = {k: 1 if sol.link_states.get(k, False) else 0 for k in g.links}
    y = {n: 1 if sol.node_states.get(n, False) else 0 for n in g.nodes}

    for j in g.nodes:
        inflow = sum(tau[(i, j)] * x[(i, j)] for i in g.adjacency[j])
        outflow = sum(tau[(j, k)] * x[(j, k)] for k in g.adjacency[j])
        sink = sum(f.rate for f in s.flows if f.dst == j)
        source = sum(f.rate for f in s.flows if f.src == j)
        scale = max(1.0, inflow, outflow)
        if abs((inflow - outflow) - (sink - source)) > tol * scale:
            return False

    if any(tau[k] > g.links[k].capacity for k in g.links):
        return False

    for i in g.nodes:
        incident = sum(x[(i, j)] + x[(j, i)] for j in g.adjacency[i])
        if incident > big_m * y[i]:
            return False

    jpb = m.joules_per_bit()
    objective = sum(y[i] * m.p_idle for i, node in g.nodes.items() if node.kind is not NodeKind.HOST)
    objective += sum(x[k] * jpb * tau[k] for k in g.links)
    return math.isclose(objective, sol.objective, rel_tol=tol, abs_tol=tol)


# -- archiving ------------------------------------------------------------------------

EDGE_LIST_FIELDS = ("a", "a_kind", "b", "b_kind", "capacity_bps")


def write_snapshot(s: Snapshot, topology_csv: str | FsPath, flows_csv: str | FsPath) -> None:
    g = s.graph
    with open(topology_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGE_LIST_FIELDS)
        for a, b in sorted(g.pairs()):
            w.writerow([a, g.nodes[a].kind.value, b, g.nodes[b].kind.value, repr(g.links[(a, b)].capacity)])
    write_trace(s.flows, flows_csv)


def read_snapshot(topology_csv: str | FsPath, flows_csv: str | FsPath) -> Snapshot:
    kinds: dict[int, str] = {}
    pairs = []
    caps = {}
    with open(topology_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            a, b = int(row["a"]), int(row["b"])
            kinds[a], kinds[b] = row["a_kind"], row["b_kind"]
            pairs.append((a, b))
            caps[(a, b)] = float(row["capacity_bps"])
    return Snapshot(build_graph(kinds, pairs, caps), read_trace(flows_csv))
