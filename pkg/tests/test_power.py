import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emma.power import PowerModel, always_on_power, link_power, network_power, node_power
from emma.topology import NetworkGraph, build_graph, generate_topology, set_link_state, set_node_state

from .conftest import CAP, diamond


def test_per_bit_total_default():
    assert PowerModel().per_bit_total() == 0.644


def test_link_power_values(model):
    assert link_power(model, 0) == 0.0
    assert link_power(model, 1.0) == pytest.approx(0.644e-9, rel=1e-15)
    full = link_power(model, 8e7)
    assert abs(full - 0.05152) <= math.ulp(0.05152)


def test_negative_load_rejected(model):
    with pytest.raises(ValueError):
        link_power(model, -1.0)


def test_negative_constants_rejected():
    with pytest.raises(ValueError):
        PowerModel(e_rx=-0.1)
    with pytest.raises(ValueError):
        PowerModel(p_idle=math.nan)


@settings(max_examples=300)
@given(a=st.integers(0, 10**10), b=st.integers(0, 10**10))
def test_link_power_linear_within_one_ulp(a, b):
    m = PowerModel()
    whole = link_power(m, float(a + b))
    parts = link_power(m, float(a)) + link_power(m, float(b))
    assert abs(whole - parts) <= math.ulp(whole)


def test_node_power_cases(model):
    g = diamond()
    set_link_state(g, 0, 1, False)
    set_link_state(g, 1, 3, False)
    set_node_state(g, 1, False)
    assert node_power(g, model, 1) == 0.0
    assert node_power(g, model, 2) == 90.0
    g.links[(2, 3)].load = 1e6
    g.links[(0, 2)].load = 2e6
    assert node_power(g, model, 2) == pytest.approx(90.001932, abs=1e-12)
    assert node_power(g, model, 4) == 0.0  # hosts draw no idle power


def test_node_power_unknown_node(model):
    with pytest.raises(KeyError):
        node_power(diamond(), model, 99)


def test_idle_default_network(model):
    g = generate_topology(12, 6, 10, 0.5, CAP, 2, seed=0)
    assert network_power(g, model) == 1620.0
    assert always_on_power(g, model) == 540.0


def test_empty_network(model):
    assert network_power(NetworkGraph(), model) == 0.0


def test_three_switch_line_two_hops(model):
    g = build_graph({0: "edge", 1: "core", 2: "edge"}, [(0, 1), (1, 2)], CAP)
    g.links[(0, 1)].load = 8e6
    g.links[(1, 2)].load = 8e6
    # 3 x 90 + 2 x 0.644e-9 x 8e6
    assert network_power(g, model) == pytest.approx(270.010304, abs=1e-12)


def _random_loaded_graph(seed, loads):
    g = generate_topology(5, 2, 2, 0.6, CAP, 2, seed=seed)
    keys = sorted(g.links)
    for k, load in zip(keys, loads):
        g.links[k].load = float(load)
    return g


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), loads=st.lists(st.integers(0, 8 * 10**7), min_size=40, max_size=40))
def test_network_power_is_sum_of_transmit_attributed_node_power(seed, loads):
    m = PowerModel()
    g = _random_loaded_graph(seed, loads)
    total = sum(node_power(g, m, i, transmit_only=True) for i in sorted(g.nodes))
    assert network_power(g, m) == total
    # direct form: idle of powered switches plus per-direction load power
    direct = sum(m.p_idle for n in g.nodes.values() if n.active and n.kind.value != "host")
    direct += sum(link_power(m, l.load) for l in g.links.values() if l.active)
    assert network_power(g, m) == pytest.approx(direct, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    loads=st.lists(st.integers(0, 4 * 10**7), min_size=40, max_size=40),
    bump=st.integers(1, 4 * 10**7),
    which=st.integers(0, 10**6),
)
def test_network_power_monotone_in_load_and_nodes(seed, loads, bump, which):
    m = PowerModel()
    g = _random_loaded_graph(seed, loads)
    before = network_power(g, m)
    key = sorted(g.links)[which % len(g.links)]
    g.links[key].load += bump
    assert network_power(g, m) >= before

    # switching a node on never lowers power
    h = generate_topology(5, 2, 2, 0.6, CAP, 2, seed=seed)
    for u, v in h.switch_pairs():
        set_link_state(h, u, v, False)
    for c in h.cores:
        set_node_state(h, c, False)
    low = network_power(h, m)
    set_node_state(h, h.cores[which % len(h.cores)], True)
    assert network_power(h, m) == low + 90.0
