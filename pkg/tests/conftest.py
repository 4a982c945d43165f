import numpy as np
import pytest

from emma.power import PowerModel
from emma.routing import NetworkState
from emma.topology import NodeKind, build_graph
from emma.workload import FlowSpec

CAP = 8e7
RATE = 8e6
EPS_HOP = 0.644e-9 * RATE  # load power of one flow on one link direction


def diamond(capacity=CAP):
    """Edge 0 and edge 3 joined by two core arms (via 1 and via 2); host 4 on 0, host 5 on 3."""
    kinds = {0: "edge", 1: "core", 2: "core", 3: "edge", 4: "host", 5: "host"}
    pairs = [(0, 1), (0, 2), (1, 3), (2, 3), (0, 4), (3, 5)]
    return build_graph(kinds, pairs, capacity)


def line(n_switches, capacity=CAP):
    """Edge 0 - cores - edge n-1, hosts n (on 0) and n+1 (on n-1)."""
    kinds = {i: ("edge" if i in (0, n_switches - 1) else "core") for i in range(n_switches)}
    kinds[n_switches] = "host"
    kinds[n_switches + 1] = "host"
    pairs = [(i, i + 1) for i in range(n_switches - 1)]
    pairs += [(0, n_switches), (n_switches - 1, n_switches + 1)]
    return build_graph(kinds, pairs, capacity)


def flow(fid, src, dst, rate=RATE, arrival=0.0, duration=20.0):
    return FlowSpec(fid, src, dst, rate, arrival, duration)


@pytest.fixture
def model():
    return PowerModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def diamond_state(model):
    return NetworkState(diamond(), model, hysteresis=10.0)


def core_ids(g):
    return [i for i, n in g.nodes.items() if n.kind is NodeKind.CORE]


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} | {detail}")
