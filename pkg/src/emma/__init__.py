"""Energy-aware flow routing for SDN backhaul networks.

Submodules: ``topology`` (graph and power states), ``power`` (switch power
model), ``workload`` (flow traces), ``routing`` (the consolidating heuristic),
``optimal`` (exact snapshot optimizer), ``sim`` (event-driven runs) and
``experiment`` / ``cli`` (replicated sweeps and reporting).
"""

from .power import PowerModel, link_power, network_power, node_power
from .routing import Allocated, Blocked, NetworkState, allocate, deallocate, reroute
from .sim import RunResult, Scheme, gain, run
from .topology import NetworkGraph, NodeKind, generate_topology
from .workload import FlowSpec, WorkloadConfig, generate_workload

__version__ = "0.1.0"

__all__ = [
    "Allocated",
    "Blocked",
    "FlowSpec",
    "NetworkGraph",
    "NetworkState",
    "NodeKind",
    "PowerModel",
    "RunResult",
    "Scheme",
    "WorkloadConfig",
    "allocate",
    "deallocate",
    "gain",
    "generate_topology",
    "generate_workload",
    "link_power",
    "network_power",
    "node_power",
    "reroute",
    "run",
]
