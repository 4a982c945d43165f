"""Backhaul network graph: core mesh, edge switches, hosts and power-state bookkeeping.

Links are stored per direction (each direction carries its own load) but are
created and toggled as bidirectional pairs, one physical cable each.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

MAX_GENERATION_ATTEMPTS = 10_000


class TopologyError(Exception):
    """Base class for graph construction and state errors."""


class GenerationError(TopologyError):
    pass


class AlwaysOnViolation(TopologyError):
    pass


class NonzeroLoadError(TopologyError):
    pass


class EndpointInactiveError(TopologyError):
    pass


class NodeKind(enum.Enum):
    CORE = "core"
    EDGE = "edge"
    HOST = "host"


@dataclass
class Node:
    id: int
    kind: NodeKind
    active: bool = True

    @property
    def always_on(self) -> bool:
        return self.kind is not NodeKind.CORE


@dataclass
class Link:
    src: int
    dst: int
    capacity: float
    active: bool = True
    load: float = 0.0

    @property
    def residual(self) -> float:
        return self.capacity - self.load


@dataclass
class NetworkGraph:
    nodes: dict[int, Node] = field(default_factory=dict)
    links: dict[tuple[int, int], Link] = field(default_factory=dict)
    adjacency: dict[int, list[int]] = field(default_factory=dict)
    _switch_pairs: tuple[int, list[tuple[int, int]]] | None = field(default=None, repr=False, compare=False)

    # -- construction -----------------------------------------------------

    def add_node(self, node_id: int, kind: NodeKind) -> Node:
        if node_id in self.nodes:
            raise TopologyError(f"duplicate node id {node_id}")
        node = Node(node_id, kind)
        self.nodes[node_id] = node
        self.adjacency[node_id] = []
        return node

    def add_link_pair(self, a: int, b: int, capacity: float) -> None:
        if capacity <= 0:
            raise TopologyError("link capacity must be positive")
        if a == b:
            raise TopologyError("self-loops are not allowed")
        if (a, b) in self.links:
            raise TopologyError(f"duplicate link {a}-{b}")
        for u, v in ((a, b), (b, a)):
            self.links[(u, v)] = Link(u, v, float(capacity))
            self.adjacency[u].append(v)
        self.adjacency[a].sort()
        self.adjacency[b].sort()

    # -- queries ----------------------------------------------------------

    def node_ids(self, kind: NodeKind | None = None) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if kind is None or n.kind is kind)

    @property
    def cores(self) -> list[int]:
        return self.node_ids(NodeKind.CORE)

    @property
    def edges(self) -> list[int]:
        return self.node_ids(NodeKind.EDGE)

    @property
    def hosts(self) -> list[int]:
        return self.node_ids(NodeKind.HOST)

    @property
    def switches(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.kind is not NodeKind.HOST)

    def link(self, u: int, v: int) -> Link:
        try:
            return self.links[(u, v)]
        except KeyError:
            raise KeyError(f"no link {u}->{v}") from None

    def neighbors(self, u: int) -> list[int]:
        return self.adjacency[u]

    def attachment(self, host: int) -> int:
        """Edge switch a host hangs off."""
        node = self.nodes[host]
        if node.kind is not NodeKind.HOST:
            return host
        return self.adjacency[host][0]

    def is_access_link(self, u: int, v: int) -> bool:
        return NodeKind.HOST in (self.nodes[u].kind, self.nodes[v].kind)

    def switch_pairs(self) -> list[tuple[int, int]]:
        """Physical links between two switches (the ones that may sleep), cached."""
        cached = self._switch_pairs
        if cached is None or cached[0] != len(self.links):
            pairs = [(u, v) for u, v in self.pairs() if not self.is_access_link(u, v)]
            cached = (len(self.links), pairs)
            self._switch_pairs = cached
        return cached[1]

    def pairs(self) -> Iterator[tuple[int, int]]:
        """Each physical link once, as (lower id, higher id)."""
        for u, v in self.links:
            if u < v:
                yield u, v

    def active_core_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.kind is NodeKind.CORE and n.active)

    def copy(self) -> NetworkGraph:
        g = NetworkGraph()
        g.nodes = {i: Node(n.id, n.kind, n.active) for i, n in self.nodes.items()}
        g.links = {k: Link(l.src, l.dst, l.capacity, l.active, l.load) for k, l in self.links.items()}
        g.adjacency = {i: list(a) for i, a in self.adjacency.items()}
        return g

    def signature(self) -> tuple:
        """Hashable structural fingerprint (ids, kinds, capacities, states, loads)."""
        return (
            tuple((i, n.kind.value, n.active) for i, n in sorted(self.nodes.items())),
            tuple((k, l.capacity, l.active, l.load) for k, l in sorted(self.links.items())),
        )


def switch_subgraph_connected(g: NetworkGraph) -> bool:
    switches = g.switches
    if not switches:
        return True
    allowed = set(switches)
    seen = {switches[0]}
    queue = deque([switches[0]])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v in allowed and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(allowed)


def generate_topology(
    n_core: int,
    n_edge: int,
    hosts_per_edge: int,
    p_link: float,
    capacity: float,
    edge_uplinks: int = 2,
    seed: int | np.random.SeedSequence | None = 0,
) -> NetworkGraph:
    """Random core mesh with edge switches and hosts, all elements on.

    Core pairs are linked independently with probability ``p_link``; each edge
    switch attaches to ``edge_uplinks`` distinct cores drawn at random. Draws
    that leave the switch subgraph disconnected are discarded and redrawn from
    the same stream. Node ids: cores first, then edge switches, then hosts
    grouped by edge switch.
    """
    if n_core < 2:
        raise ValueError("n_core must be at least 2")
    if not 0.0 < p_link <= 1.0:
        raise ValueError("p_link must lie in (0, 1]")
    if edge_uplinks < 1 or (n_edge > 0 and edge_uplinks > n_core):
        raise ValueError("edge_uplinks must lie in [1, n_core]")
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    if n_edge < 0 or hosts_per_edge < 0:
        raise ValueError("counts must be non-negative")

    rng = np.random.default_rng(seed)
    core_pairs = [(a, b) for a in range(n_core) for b in range(a + 1, n_core)]
    edge_ids = range(n_core, n_core + n_edge)

    for _ in range(MAX_GENERATION_ATTEMPTS):
        g = NetworkGraph()
        for i in range(n_core):
            g.add_node(i, NodeKind.CORE)
        for e in edge_ids:
            g.add_node(e, NodeKind.EDGE)

        draws = rng.random(len(core_pairs))
        for (a, b), u in zip(core_pairs, draws):
            if u < p_link:
                g.add_link_pair(a, b, capacity)
        for e in edge_ids:
            uplinks = rng.choice(n_core, size=edge_uplinks, replace=False)
            for c in sorted(int(c) for c in uplinks):
                g.add_link_pair(c, e, capacity)

        if switch_subgraph_connected(g):
            break
    else:
        raise GenerationError(
            f"no connected draw in {MAX_GENERATION_ATTEMPTS} attempts; "
            f"p_link={p_link} is too small for n_core={n_core}"
        )

    next_id = n_core + n_edge
    for e in edge_ids:
        for _ in range(hosts_per_edge):
            g.add_node(next_id, NodeKind.HOST)
            g.add_link_pair(e, next_id, capacity)
            next_id += 1
    return g


def line_topology(n_switches: int, capacity: float, hosts_at_ends: bool = True) -> NetworkGraph:
    """Switch chain ``E0 - C1 - ... - C(n-2) - E(n-1)`` with one host per end.

    Interior switches are cores, the two ends are edge switches. Handy for
    hand-traceable scenarios.
    """
    if n_switches < 2:
        raise ValueError("need at least two switches")
    g = NetworkGraph()
    for i in range(n_switches):
        end = i in (0, n_switches - 1)
        g.add_node(i, NodeKind.EDGE if end else NodeKind.CORE)
    for i in range(n_switches - 1):
        g.add_link_pair(i, i + 1, capacity)
    if hosts_at_ends:
        for h, e in ((n_switches, 0), (n_switches + 1, n_switches - 1)):
            g.add_node(h, NodeKind.HOST)
            g.add_link_pair(e, h, capacity)
    return g


def build_graph(
    kinds: dict[int, NodeKind | str],
    pairs: Iterable[tuple[int, int]],
    capacity: float | dict[tuple[int, int], float],
) -> NetworkGraph:
    """Assemble a graph from explicit node kinds and undirected link pairs."""
    g = NetworkGraph()
    for i in sorted(kinds):
        g.add_node(i, NodeKind(kinds[i]) if isinstance(kinds[i], str) else kinds[i])
    for a, b in pairs:
        cap = capacity[(a, b)] if isinstance(capacity, dict) else capacity
        g.add_link_pair(a, b, cap)
    return g


# -- power-state mutation ---------------------------------------------------


def set_node_state(g: NetworkGraph, node_id: int, active: bool) -> NetworkGraph:
    node = g.nodes[node_id]
    if active:
        node.active = True
        return g
    if node.always_on:
        raise AlwaysOnViolation(f"{node.kind.value} node {node_id} must stay active")
    incident = [g.links[(node_id, v)] for v in g.adjacency[node_id]]
    incident += [g.links[(v, node_id)] for v in g.adjacency[node_id]]
    if any(l.load > 0 for l in incident):
        raise NonzeroLoadError(f"node {node_id} still carries traffic")
    if any(l.active for l in incident):
        raise NonzeroLoadError(f"node {node_id} has active incident links")
    node.active = False
    return g


def set_link_state(g: NetworkGraph, src: int, dst: int, active: bool) -> NetworkGraph:
    """Toggle both directions of the physical link ``src``-``dst``."""
    fwd, rev = g.link(src, dst), g.link(dst, src)
    if active:
        for n in (src, dst):
            if not g.nodes[n].active:
                raise EndpointInactiveError(f"endpoint {n} of link {src}-{dst} is off")
        fwd.active = rev.active = True
        return g
    if fwd.load > 0 or rev.load > 0:
        raise NonzeroLoadError(f"link {src}-{dst} carries traffic")
    if g.is_access_link(src, dst):
        raise AlwaysOnViolation(f"access link {src}-{dst} must stay active")
    fwd.active = rev.active = False
    return g


class GraphView:
    """Read-only filter over a graph: either everything or only active elements."""

    def __init__(self, graph: NetworkGraph, active_only: bool):
        self.graph = graph
        self.active_only = active_only

    def has_node(self, node_id: int) -> bool:
        node = self.graph.nodes.get(node_id)
        return node is not None and (node.active or not self.active_only)

    def has_link(self, u: int, v: int) -> bool:
        link = self.graph.links.get((u, v))
        if link is None:
            return False
        if not self.active_only:
            return True
        return link.active and self.graph.nodes[u].active and self.graph.nodes[v].active

    def neighbors(self, u: int) -> Iterator[int]:
        for v in self.graph.adjacency[u]:
            if self.has_link(u, v):
                yield v

    def node_ids(self) -> list[int]:
        return sorted(i for i in self.graph.nodes if self.has_node(i))

    def link_keys(self) -> list[tuple[int, int]]:
        return sorted(k for k in self.graph.links if self.has_link(*k))


def active_subgraph(g: NetworkGraph) -> GraphView:
    return GraphView(g, active_only=True)


def full_view(g: NetworkGraph) -> GraphView:
    return GraphView(g, active_only=False)
