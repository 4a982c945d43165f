"""Switch power model: constant idle draw plus per-bit processing energy."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .topology import NetworkGraph, NodeKind

NJ = 1e-9


@dataclass(frozen=True)
class PowerModel:
    """Per-bit stage energies in nJ/bit and the idle draw of a powered switch in W.

    ``p_idle`` folds together control, environmental and the constant data-plane
    share. Defaults are the figures for a commodity OpenFlow switch.
    """

    e_lookup: float = 0.034
    e_rx: float = 0.2
    e_xfer: float = 0.21
    e_tx: float = 0.2
    p_idle: float = 90.0

    def __post_init__(self):
        for name in ("e_lookup", "e_rx", "e_xfer", "e_tx", "p_idle"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")

    def per_bit_total(self) -> float:
        """Total energy per forwarded bit, nJ/bit."""
        return self.e_lookup + self.e_rx + self.e_xfer + self.e_tx

    def joules_per_bit(self) -> float:
        return self.per_bit_total() * NJ


def link_power(m: PowerModel, load: float) -> float:
    """Load-dependent power of one link direction, W."""
    if load < 0:
        raise ValueError(f"link load must be non-negative, got {load}")
    return m.per_bit_total() * NJ * load


def _draws_idle(kind: NodeKind) -> bool:
    return kind is not NodeKind.HOST


def node_power(g: NetworkGraph, m: PowerModel, node_id: int, *, transmit_only: bool = False) -> float:
    """Power drawn by one node, W.

    By default both directions of every active incident link are charged to the
    node, as a switch spends energy on traffic it receives and sends. With
    ``transmit_only`` a direction is charged only to its sending node, so
    summing over all nodes counts each directed link exactly once.
    """
    node = g.nodes[node_id]
    if not node.active:
        return 0.0
    k = m.per_bit_total() * NJ
    links = g.links
    total = m.p_idle if _draws_idle(node.kind) else 0.0
    for v in g.adjacency[node_id]:
        out = links[(node_id, v)]
        if out.active:
            total += k * out.load
        if not transmit_only:
            back = links[(v, node_id)]
            if back.active:
                total += k * back.load
    return total


def network_power(g: NetworkGraph, m: PowerModel) -> float:
    """Instantaneous network power, W: idle draw of powered switches plus link load power.

    Equal, bit for bit, to summing ``node_power(..., transmit_only=True)`` over
    nodes in id order.
    """
    k = m.per_bit_total() * NJ
    links, adjacency = g.links, g.adjacency
    total = 0.0
    for i in sorted(g.nodes):
        node = g.nodes[i]
        if not node.active:
            continue
        own = m.p_idle if _draws_idle(node.kind) else 0.0
        for v in adjacency[i]:
            out = links[(i, v)]
            if out.active:
                own += k * out.load
        total += own
    return total


def always_on_power(g: NetworkGraph, m: PowerModel) -> float:
    """Idle draw of the edge switches, which can never be switched off."""
    return m.p_idle * sum(1 for n in g.nodes.values() if n.kind is NodeKind.EDGE)
