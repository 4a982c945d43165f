import dataclasses
import math

import pytest

from emma.power import PowerModel
from emma.routing import invariant_violations
from emma.sim import ComparisonError, Scheme, energy_between, gain, run, write_power_samples
from emma.topology import build_graph, generate_topology
from emma.workload import WorkloadConfig, generate_workload

from .conftest import CAP, EPS_HOP, RATE, flow, line


@pytest.fixture(scope="module")
def small():
    g = generate_topology(4, 2, 3, 0.6, CAP, 2, seed=8)
    trace = generate_workload(WorkloadConfig(arrival_rate=0.3, horizon=120), g, seed=8)
    return g, trace


def test_empty_trace_baseline_energy(model):
    g = generate_topology(12, 6, 10, 0.5, CAP, 2, seed=0)
    r = run(g, [], Scheme.NO_POWER_SAVING, model, horizon=500.0)
    assert r.total_energy == 1620.0 * 500
    assert r.mean_network_power == 1620.0
    assert r.arrivals == r.completed == r.blocked == 0


def test_empty_trace_emma_sleeps_cores(model):
    g = generate_topology(12, 6, 10, 0.5, CAP, 2, seed=0)
    r = run(g, [], "emma", model, horizon=500.0)
    assert r.mean_network_power == 540.0
    assert r.mean_active_core_switches == 0.0
    net = run(g, [], "emma", model, horizon=500.0, count_edge_idle=False)
    assert net.mean_network_power == 0.0


def test_single_flow_step_profile(model):
    g = line(3)
    trace = [flow(0, 3, 4, arrival=10.0, duration=20.0)]
    r = run(g, trace, Scheme.EMMA, model, horizon=50.0)
    busy = 270 + 4 * EPS_HOP
    assert [(t, p) for t, p, _, _ in r.samples] == [(0.0, 180.0), (10.0, busy), (30.0, 180.0)]
    assert r.total_energy == pytest.approx(180 * 10 + busy * 20 + 180 * 20, rel=1e-15)
    assert r.samples[-1][2] == 0  # core asleep after the departure
    assert r.mean_concurrent_flows == pytest.approx(0.4)
    assert r.avg_power_per_flow == pytest.approx(r.mean_network_power / 0.4)
    assert r.completed == 1 and r.blocked_fraction == 0.0

    nops = run(g, trace, Scheme.NO_POWER_SAVING, model, horizon=50.0)
    assert nops.total_energy == pytest.approx(270 * 50 + 4 * EPS_HOP * 20, rel=1e-15)


def test_events_beyond_horizon_ignored(model):
    trace = [flow(0, 3, 4, arrival=10.0, duration=100.0), flow(1, 3, 4, arrival=60.0, duration=1.0)]
    r = run(line(3), trace, Scheme.EMMA, model, horizon=50.0)
    assert r.arrivals == 1 and r.completed == 0
    assert r.samples[-1][0] == 10.0


def test_default_horizon_is_last_departure(model):
    r = run(line(3), [flow(0, 3, 4, arrival=1.0, duration=4.0)], Scheme.EMMA, model)
    assert r.horizon == 5.0 and r.completed == 1


def test_unsorted_trace_rejected(model):
    trace = [flow(0, 3, 4, arrival=5.0), flow(1, 3, 4, arrival=1.0)]
    with pytest.raises(ValueError):
        run(line(3), trace, Scheme.EMMA, model)


def test_departure_before_arrival_at_same_instant(model):
    cap = 8e6
    trace = [flow(0, 3, 4, arrival=0.0, duration=5.0, rate=cap), flow(1, 3, 4, arrival=5.0, duration=5.0, rate=cap)]
    r = run(line(3, capacity=cap), trace, Scheme.EMMA, model)
    assert r.blocked == 0 and r.completed == 2


def test_scheme_ordering(small, model):
    g, trace = small
    res = {s: run(g, trace, s, model, seed=3, horizon=120.0) for s in Scheme}
    assert all(r.blocked == 0 for r in res.values())
    tol = 1e-9 * res[Scheme.NO_POWER_SAVING].total_energy
    assert res[Scheme.OPTIMAL].total_energy <= res[Scheme.EMMA].total_energy + tol
    assert res[Scheme.EMMA].total_energy <= res[Scheme.NO_POWER_SAVING].total_energy + tol


def test_optimal_scheme_never_above_emma_at_any_instant(small, model):
    g, trace = small
    emma = run(g, trace, Scheme.EMMA, model, seed=3, horizon=120.0)
    opt = run(g, trace, Scheme.OPTIMAL, model, seed=3, horizon=120.0)
    # same event times, so the sample grids line up
    assert [s[0] for s in emma.samples] == [s[0] for s in opt.samples]
    for a, b in zip(emma.samples, opt.samples):
        assert b[1] <= a[1] + 1e-9


def test_energy_is_additive(small, model):
    g, trace = small
    r = run(g, trace, Scheme.EMMA, model, seed=1, horizon=120.0)
    for cut in (0.0, 13.7, 60.0, 119.99, 120.0):
        split = energy_between(r.samples, 0.0, cut) + energy_between(r.samples, cut, 120.0)
        assert split == pytest.approx(r.total_energy, rel=1e-12)
    assert r.mean_network_power == pytest.approx(r.total_energy / 120.0, rel=1e-15)


def test_run_is_deterministic(small, model):
    g, trace = small
    a = run(g, trace, Scheme.EMMA, model, seed=5, horizon=120.0, record_events=True)
    b = run(g, trace, Scheme.EMMA, model, seed=5, horizon=120.0, record_events=True)
    assert a == b
    assert a.events and a.events == b.events


def test_run_leaves_input_graph_untouched(small, model):
    g, trace = small
    before = g.signature()
    run(g, trace, Scheme.EMMA, model, horizon=120.0)
    assert g.signature() == before


def test_observer_sees_consistent_states(small, model):
    g, trace = small
    seen = []

    def check(now, state):
        seen.append(now)
        assert invariant_violations(state) == []

    run(g, trace, Scheme.EMMA, model, seed=2, horizon=120.0, observer=check)
    assert len(seen) >= len(trace)


def test_blocking_counted(model):
    cap = 8e6
    trace = [flow(0, 3, 4, rate=cap, arrival=0.0, duration=10.0), flow(1, 3, 4, rate=cap, arrival=1.0, duration=10.0)]
    r = run(line(3, capacity=cap), trace, Scheme.EMMA, model)
    assert r.blocked == 1 and r.blocked_fraction == 0.5


# -- comparisons --------------------------------------------------------------------------


def _result(power, scheme="nops", seed=0):
    base = run(line(3), [], Scheme.NO_POWER_SAVING, PowerModel(), horizon=1.0)
    return dataclasses.replace(base, scheme=Scheme(scheme), mean_network_power=power, seed=seed)


def test_gain_values():
    assert gain(_result(1080.0), _result(1080.0, "emma")) == 0.0
    assert gain(_result(1080.0), _result(270.0, "emma")) == 0.75


def test_gain_rejects_mismatch():
    with pytest.raises(ComparisonError):
        gain(_result(1080.0), _result(270.0, "emma", seed=1))
    with pytest.raises(ComparisonError):
        gain(_result(1080.0, "emma"), _result(270.0, "emma"))


def test_gain_from_real_runs(small, model):
    g, trace = small
    nops = run(g, trace, "nops", model, seed=4, horizon=120.0)
    emma = run(g, trace, "emma", model, seed=4, horizon=120.0)
    assert 0.0 < gain(nops, emma) < 1.0
    assert gain(nops, nops) == 0.0


def test_power_sample_csv(tmp_path, model):
    r = run(line(3), [flow(0, 3, 4, arrival=10.0, duration=20.0)], Scheme.EMMA, model, horizon=50.0)
    write_power_samples(r, tmp_path / "p.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "time_s,power_w,active_core_count,concurrent_flows"
    assert rows[1] == "0.0,180.0,0,0"
    t, p, c, n = rows[2].split(",")
    assert float(t) == 10.0 and math.isclose(float(p), 270 + 4 * EPS_HOP) and (c, n) == ("1", "1")


def test_hysteresis_gates_moves(model):
    # A and C fill the short arm, B detours; once A leaves, B may return
    kinds = {0: "edge", 1: "core", 2: "core", 3: "core", 4: "edge"}
    kinds.update({h: "host" for h in (5, 6, 7, 8, 9, 10)})
    pairs = [(0, 1), (1, 4), (0, 2), (2, 3), (3, 4), (0, 5), (0, 7), (0, 9), (4, 6), (4, 8), (4, 10)]
    g = build_graph(kinds, pairs, 2 * RATE)
    trace = [
        flow(0, 5, 6, arrival=0.0, duration=30.0),
        flow(1, 9, 10, arrival=1.0, duration=100.0),
        flow(2, 7, 8, arrival=2.0, duration=100.0),
    ]
    moves = {}
    for h in (10.0, 1e9):
        r = run(g, trace, "emma", model, hysteresis=h, horizon=60.0, record_events=True)
        moves[h] = [e["flow_id"] for e in r.events if e["event"] == "move"]
    assert moves == {10.0: [2], 1e9: []}
