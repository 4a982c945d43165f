"""Energy-aware flow allocation and re-routing over the active network.

New flows are first fitted into the part of the network that is already
powered (first-fit style); only when that fails is the whole graph searched and
the missing elements switched on, after which older flows are offered cheaper
paths on the active network and anything left idle is switched off.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Union

import numpy as np

from .power import PowerModel, link_power, network_power
from .topology import (
    GraphView,
    NetworkGraph,
    NodeKind,
    active_subgraph,
    full_view,
    set_link_state,
    set_node_state,
)
from .workload import FlowSpec

Path = tuple[int, ...]  # node sequence, source host to destination host

# loads below this (bit/s) are float residue from add/subtract cycles
LOAD_EPS = 1e-6

ELIGIBILITY_POLICIES = ("fixed", "half_duration")

EVENT_LOG_FIELDS = ("time_s", "event", "flow_id", "path", "power_before_w", "power_after_w")


class StateError(Exception):
    pass


def path_links(path: Path) -> list[tuple[int, int]]:
    return list(zip(path[:-1], path[1:]))


def format_path(path: Path | None) -> str:
    return "" if not path else "-".join(str(n) for n in path)


@dataclass
class FlowRecord:
    spec: FlowSpec
    path: Path
    installation_time: float


@dataclass(frozen=True)
class Allocated:
    path: Path
    activated_nodes: tuple[int, ...] = ()
    activated_links: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class Blocked:
    pass


AllocationOutcome = Union[Allocated, Blocked]


@dataclass
class NetworkState:
    graph: NetworkGraph
    model: PowerModel = field(default_factory=PowerModel)
    hysteresis: float = 10.0
    eligibility: str = "fixed"
    flows: dict[int, FlowRecord] = field(default_factory=dict)
    log: list[dict] | None = field(default_factory=list)

    def __post_init__(self):
        if self.eligibility not in ELIGIBILITY_POLICIES:
            raise ValueError(f"eligibility must be one of {ELIGIBILITY_POLICIES}")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")

    def power(self) -> float:
        return network_power(self.graph, self.model)

    def _record(self, time, event, flow_id, path, before, after):
        if self.log is not None:
            self.log.append(
                {
                    "time_s": time,
                    "event": event,
                    "flow_id": flow_id,
                    "path": format_path(path),
                    "power_before_w": before,
                    "power_after_w": after,
                }
            )

    def _power_if_logging(self) -> float:
        return self.power() if self.log is not None else math.nan


# -- path search --------------------------------------------------------------


def find_feasible_shortest_path(
    view: GraphView,
    src: int,
    dst: int,
    rate: float,
    rng: np.random.Generator,
    extra_residual: dict[tuple[int, int], float] | None = None,
) -> Path | None:
    """Uniformly random minimum-hop path whose every link has room for ``rate``.

    Breadth-first search over the residual graph: links without enough spare
    capacity are skipped, so a saturated short route yields a longer feasible
    one. ``extra_residual`` adds capacity back on given links, used when a flow
    is evaluated against its own current reservation.
    """
    g = view.graph
    if not (view.has_node(src) and view.has_node(dst)):
        return None
    if src == dst:
        return (src,)
    extra = extra_residual or {}
    nodes, links, adjacency = g.nodes, g.links, g.adjacency
    active_only = view.active_only
    host = NodeKind.HOST

    dist = {src: 0}
    count = {src: 1}
    preds: dict[int, list[int]] = {src: []}
    frontier = [src]
    found = False
    while frontier and not found:
        nxt: list[int] = []
        for u in frontier:
            for v in adjacency[u]:
                # hosts only terminate paths
                if v != dst and nodes[v].kind is host:
                    continue
                link = links[(u, v)]
                if active_only and not (link.active and nodes[v].active):
                    continue
                if link.capacity - link.load + extra.get((u, v), 0.0) < rate:
                    continue
                if v not in dist:
                    dist[v] = dist[u] + 1
                    count[v] = 0
                    preds[v] = []
                    nxt.append(v)
                if dist[v] == dist[u] + 1:
                    count[v] += count[u]
                    preds[v].append(u)
                    if v == dst:
                        found = True
        frontier = nxt
    if dst not in dist:
        return None

    # walk back choosing predecessors in proportion to their shortest-path counts
    path = [dst]
    node = dst
    while node != src:
        options = sorted(preds[node])
        total = sum(count[p] for p in options)
        pick = int(rng.integers(total)) if total < 2**62 else int(rng.random() * total)
        for p in options:
            pick -= count[p]
            if pick < 0:
                node = p
                break
        path.append(node)
    return tuple(reversed(path))


# -- load bookkeeping -----------------------------------------------------------


def install_flow(state: NetworkState, spec: FlowSpec, path: Path, now: float) -> FlowRecord:
    g = state.graph
    for u, v in path_links(path):
        link = g.links[(u, v)]
        if not link.active:
            raise StateError(f"flow {spec.flow_id}: link {u}->{v} is off")
        if link.load + spec.rate > link.capacity:
            raise StateError(f"flow {spec.flow_id}: link {u}->{v} over capacity")
    for u, v in path_links(path):
        g.links[(u, v)].load += spec.rate
    rec = FlowRecord(spec, path, now)
    state.flows[spec.flow_id] = rec
    return rec


def release_flow(state: NetworkState, flow_id: int) -> FlowRecord:
    try:
        rec = state.flows.pop(flow_id)
    except KeyError:
        raise StateError(f"unknown flow {flow_id}") from None
    for u, v in path_links(rec.path):
        link = state.graph.links[(u, v)]
        link.load -= rec.spec.rate
        if link.load < LOAD_EPS:
            link.load = 0.0
    return rec


def shutdown_idle(state: NetworkState) -> tuple[list[tuple[int, int]], list[int]]:
    """Switch off unloaded link pairs, then cores left without an active link."""
    g = state.graph
    links_off = []
    for u, v in g.switch_pairs():
        fwd, rev = g.links[(u, v)], g.links[(v, u)]
        if fwd.active and fwd.load == 0 and rev.load == 0:
            set_link_state(g, u, v, False)
            links_off.append((u, v))
    nodes_off = []
    for n in g.cores:
        node = g.nodes[n]
        if node.active and not any(g.links[(n, v)].active for v in g.adjacency[n]):
            set_node_state(g, n, False)
            nodes_off.append(n)
    return links_off, nodes_off


def _activate_path(g: NetworkGraph, path: Path) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
    nodes_on = tuple(n for n in path if not g.nodes[n].active)
    for n in nodes_on:
        set_node_state(g, n, True)
    links_on = []
    for u, v in path_links(path):
        if not g.links[(u, v)].active:
            set_link_state(g, u, v, True)
            links_on.append((min(u, v), max(u, v)))
    return nodes_on, tuple(links_on)


# -- cost -----------------------------------------------------------------------


def path_cost(state: NetworkState, path: Path, rate: float, moving: int | None = None) -> float:
    """Incremental power (W) of carrying ``rate`` on ``path``.

    Link energy for every hop plus the idle draw of each core switch on the path
    that carries no other traffic: one that is off now, or one that would go
    idle once flow ``moving`` leaves it. Measured against the state with
    ``moving`` removed, the same figure serves both the current path (where
    those switches are reclaimable) and a candidate (where they must be
    powered), so the difference of two costs is the actual power change.
    """
    g = state.graph
    own: set[tuple[int, int]] = set()
    own_rate = 0.0
    if moving is not None:
        rec = state.flows[moving]
        own = set(path_links(rec.path))
        own_rate = rec.spec.rate

    def carries_other_traffic(n: int) -> bool:
        for v in g.adjacency[n]:
            for key in ((n, v), (v, n)):
                load = g.links[key].load
                if key in own:
                    load -= own_rate
                if load > LOAD_EPS:
                    return True
        return False

    to_power = sum(
        1
        for n in path
        if g.nodes[n].kind is NodeKind.CORE and (not g.nodes[n].active or not carries_other_traffic(n))
    )
    hops = len(path) - 1
    return hops * link_power(state.model, rate) + to_power * state.model.p_idle


# -- the two algorithms ---------------------------------------------------------


def _eligible(state: NetworkState, rec: FlowRecord, now: float) -> bool:
    age = now - rec.installation_time
    if state.eligibility == "half_duration":
        return age >= rec.spec.duration / 2
    return age >= state.hysteresis


def reroute(state: NetworkState, now: float, rng: np.random.Generator) -> NetworkState:
    """Offer each sufficiently old flow a cheaper path on the active network, then prune."""
    candidates = [r for r in state.flows.values() if _eligible(state, r, now)]
    candidates.sort(key=lambda r: (-r.spec.rate, r.spec.flow_id))
    for rec in candidates:
        spec = rec.spec
        old = rec.path
        # room held by this flow counts as free for its own move
        extra = {key: spec.rate for key in path_links(old)}
        new = find_feasible_shortest_path(active_subgraph(state.graph), spec.src, spec.dst, spec.rate, rng, extra)
        if new is None or new == old:
            continue
        if path_cost(state, new, spec.rate, moving=spec.flow_id) < path_cost(state, old, spec.rate, moving=spec.flow_id):
            before = state._power_if_logging()
            release_flow(state, spec.flow_id)
            install_flow(state, spec, new, now)
            state._record(now, "move", spec.flow_id, new, before, state._power_if_logging())
    shutdown_idle(state)
    return state


def allocate(state: NetworkState, spec: FlowSpec, now: float, rng: np.random.Generator) -> AllocationOutcome:
    if spec.flow_id in state.flows:
        raise StateError(f"flow {spec.flow_id} is already allocated")
    g = state.graph
    before = state._power_if_logging()

    path = find_feasible_shortest_path(active_subgraph(g), spec.src, spec.dst, spec.rate, rng)
    if path is not None:
        install_flow(state, spec, path, now)
        state._record(now, "allocate", spec.flow_id, path, before, state._power_if_logging())
        return Allocated(path)

    path = find_feasible_shortest_path(full_view(g), spec.src, spec.dst, spec.rate, rng)
    if path is None:
        state._record(now, "blocked", spec.flow_id, None, before, before)
        return Blocked()

    nodes_on, links_on = _activate_path(g, path)
    install_flow(state, spec, path, now)
    state._record(now, "allocate", spec.flow_id, path, before, state._power_if_logging())
    reroute(state, now, rng)
    return Allocated(path, nodes_on, links_on)


def deallocate(state: NetworkState, flow_id: int, now: float, rng: np.random.Generator) -> NetworkState:
    if flow_id not in state.flows:
        raise StateError(f"unknown flow {flow_id}")
    before = state._power_if_logging()
    rec = release_flow(state, flow_id)
    shutdown_idle(state)
    state._record(now, "deallocate", flow_id, rec.path, before, state._power_if_logging())
    return reroute(state, now, rng)


# -- checks and export ------------------------------------------------------------


def invariant_violations(state: NetworkState, rel_tol: float = 1e-9) -> list[str]:
    """Recompute every structural invariant from scratch; empty list means consistent."""
    g = state.graph
    problems = []
    expected = {key: 0.0 for key in g.links}
    for fid, rec in state.flows.items():
        p = rec.path
        if p[0] != rec.spec.src or p[-1] != rec.spec.dst:
            problems.append(f"flow {fid}: path endpoints {p[0]},{p[-1]} do not match the flow")
        if len(set(p)) != len(p):
            problems.append(f"flow {fid}: path revisits a node")
        for n in p:
            if not g.nodes[n].active:
                problems.append(f"flow {fid}: traverses inactive node {n}")
        for key in path_links(p):
            if key not in g.links:
                problems.append(f"flow {fid}: non-existent link {key}")
                continue
            if not g.links[key].active:
                problems.append(f"flow {fid}: traverses inactive link {key}")
            expected[key] += rec.spec.rate

    for key, link in g.links.items():
        if not math.isclose(link.load, expected[key], rel_tol=rel_tol, abs_tol=LOAD_EPS):
            problems.append(f"link {key}: load {link.load} != routed sum {expected[key]}")
        if link.load > link.capacity * (1 + rel_tol):
            problems.append(f"link {key}: load {link.load} exceeds capacity {link.capacity}")
        if not link.active and link.load != 0:
            problems.append(f"link {key}: inactive but loaded")
        if link.active and not (g.nodes[key[0]].active and g.nodes[key[1]].active):
            problems.append(f"link {key}: active with an inactive endpoint")

    for n, node in g.nodes.items():
        if node.always_on and not node.active:
            problems.append(f"{node.kind.value} node {n} is off")

    # conservation: switches balance; hosts net their own flows
    balance = {n: 0.0 for n in g.nodes}
    for (u, v), link in g.links.items():
        if link.active:
            balance[v] += link.load
            balance[u] -= link.load
    demand = {n: 0.0 for n in g.nodes}
    for rec in state.flows.values():
        demand[rec.spec.dst] += rec.spec.rate
        demand[rec.spec.src] -= rec.spec.rate
    for n in g.nodes:
        scale = max(1.0, sum(l.load for key, l in g.links.items() if n in key))
        if abs(balance[n] - demand[n]) > rel_tol * scale + LOAD_EPS:
            problems.append(f"node {n}: flow imbalance {balance[n] - demand[n]}")
    return problems


def write_event_log(records: list[dict], path: str | FsPath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVENT_LOG_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
