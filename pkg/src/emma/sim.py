"""Event-driven replay of a flow trace under a routing scheme, with energy accounting.

Power is piecewise constant between events, so energy is the sum of
(power after each event) x (time to the next event) over ``[0, horizon]``.
"""

from __future__ import annotations

import csv
import enum
import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable

import numpy as np

from .optimal import DEFAULT_BUDGET, Snapshot, implied_graph, solve_optimal
from .power import PowerModel, always_on_power, network_power
from .routing import (
    Allocated,
    FlowRecord,
    NetworkState,
    allocate,
    deallocate,
    find_feasible_shortest_path,
    install_flow,
    release_flow,
    shutdown_idle,
)
from .topology import NetworkGraph, full_view
from .workload import FlowSpec

SAMPLE_FIELDS = ("time_s", "power_w", "active_core_count", "concurrent_flows")


class Scheme(str, enum.Enum):
    EMMA = "emma"
    NO_POWER_SAVING = "nops"
    OPTIMAL = "optimal"


class ComparisonError(ValueError):
    pass


DEPARTURE, ARRIVAL = 0, 1  # departures sort first at equal timestamps


@dataclass
class MetricsAccumulator:
    completed: int = 0
    blocked: int = 0
    arrivals: int = 0
    samples: list[tuple[float, float, int, int]] = field(default_factory=list)
    _terms: list[tuple[float, float, float]] = field(default_factory=list, repr=False)

    def sample(self, time: float, power: float, active_cores: int, flows: int) -> None:
        """Record the level holding from ``time`` until the next sample."""
        if self.samples:
            t0, p0, c0, n0 = self.samples[-1]
            dt = time - t0
            if dt < 0:
                raise ValueError("samples must be time-ordered")
            self._terms.append((p0 * dt, n0 * dt, c0 * dt))
        self.samples.append((time, power, active_cores, flows))

    @property
    def energy(self) -> float:
        return math.fsum(t[0] for t in self._terms)

    @property
    def flow_time_integral(self) -> float:
        return math.fsum(t[1] for t in self._terms)

    @property
    def core_time_integral(self) -> float:
        return math.fsum(t[2] for t in self._terms)


def energy_between(samples: list[tuple[float, float, int, int]], t0: float, t1: float) -> float:
    """Integral of the sampled power over ``[t0, t1]``."""
    terms = []
    for k, (t, p, _, _) in enumerate(samples):
        t_next = samples[k + 1][0] if k + 1 < len(samples) else math.inf
        lo, hi = max(t, t0), min(t_next, t1)
        if hi > lo:
            terms.append(p * (hi - lo))
    return math.fsum(terms)


@dataclass
class RunResult:
    scheme: Scheme
    seed: int
    config: dict
    avg_power_per_flow: float
    total_energy: float
    mean_network_power: float
    blocked_fraction: float
    mean_active_core_switches: float
    mean_concurrent_flows: float
    horizon: float
    arrivals: int
    blocked: int
    completed: int
    samples: list[tuple[float, float, int, int]] = field(default_factory=list, repr=False)
    events: list[dict] = field(default_factory=list, repr=False)

    def metrics(self) -> dict:
        return {
            "avg_power_per_flow_w": self.avg_power_per_flow,
            "total_energy_j": self.total_energy,
            "mean_network_power_w": self.mean_network_power,
            "blocked_fraction": self.blocked_fraction,
            "mean_active_core_switches": self.mean_active_core_switches,
            "mean_concurrent_flows": self.mean_concurrent_flows,
        }


def _route_shortest(state: NetworkState, spec: FlowSpec, now: float, rng) -> bool:
    path = find_feasible_shortest_path(full_view(state.graph), spec.src, spec.dst, spec.rate, rng)
    if path is None:
        return False
    install_flow(state, spec, path, now)
    return True


def _adopt_optimal(state: NetworkState, base: NetworkGraph, specs: list[FlowSpec], max_hops, budget) -> bool:
    sol = solve_optimal(Snapshot(base, specs), state.model, max_hops=max_hops, budget=budget)
    if not sol.optimal:
        return False
    installed = {fid: rec.installation_time for fid, rec in state.flows.items()}
    state.graph = implied_graph(base, specs, sol.assignment)
    state.flows = {
        f.flow_id: FlowRecord(f, sol.assignment[f.flow_id], installed.get(f.flow_id, f.arrival)) for f in specs
    }
    return True


def run(
    g: NetworkGraph,
    trace: list[FlowSpec],
    scheme: Scheme | str,
    m: PowerModel,
    hysteresis: float = 10.0,
    seed: int = 0,
    *,
    horizon: float | None = None,
    eligibility: str = "fixed",
    count_edge_idle: bool = True,
    max_hops: int | None = None,
    budget: int = DEFAULT_BUDGET,
    record_events: bool = False,
    observer: Callable[[float, NetworkState], None] | None = None,
    config: dict | None = None,
) -> RunResult:
    """Replay ``trace`` on a private copy of ``g`` and integrate power over time.

    ``count_edge_idle=False`` reports power net of the edge switches' constant
    idle draw, which no scheme can influence. ``observer`` is called with the
    state after every processed event.
    """
    scheme = Scheme(scheme)
    if any(b.arrival < a.arrival for a, b in zip(trace, trace[1:])):
        raise ValueError("trace must be sorted by arrival time")

    base = g.copy()
    rng = np.random.default_rng(seed)
    state = NetworkState(
        base.copy(), m, hysteresis=hysteresis, eligibility=eligibility, log=[] if record_events else None
    )
    offset = 0.0 if count_edge_idle else always_on_power(base, m)

    events = [(f.arrival, ARRIVAL, f.flow_id) for f in trace]
    heapq.heapify(events)
    specs = {f.flow_id: f for f in trace}
    if len(specs) != len(trace):
        raise ValueError("duplicate flow ids in trace")
    if horizon is None:
        horizon = max((f.departure for f in trace), default=0.0)

    if scheme is Scheme.EMMA:
        shutdown_idle(state)  # everything boots powered; idle cores go straight to sleep
    elif scheme is Scheme.OPTIMAL:
        _adopt_optimal(state, base, [], max_hops, budget)

    acc = MetricsAccumulator()

    def snapshot_level(t: float) -> None:
        acc.sample(t, network_power(state.graph, m) - offset, state.graph.active_core_count(), len(state.flows))

    snapshot_level(0.0)
    while events and events[0][0] <= horizon:
        now, kind, fid = heapq.heappop(events)
        spec = specs[fid]
        if kind == ARRIVAL:
            acc.arrivals += 1
            if scheme is Scheme.EMMA:
                ok = isinstance(allocate(state, spec, now, rng), Allocated)
            elif scheme is Scheme.NO_POWER_SAVING:
                ok = _route_shortest(state, spec, now, rng)
            else:
                current = [rec.spec for rec in state.flows.values()]
                ok = _adopt_optimal(state, base, current + [spec], max_hops, budget)
            if ok:
                heapq.heappush(events, (spec.departure, DEPARTURE, fid))
            else:
                acc.blocked += 1
        else:
            acc.completed += 1
            if scheme is Scheme.EMMA:
                deallocate(state, fid, now, rng)
            elif scheme is Scheme.NO_POWER_SAVING:
                release_flow(state, fid)
            else:
                remaining = [rec.spec for k, rec in state.flows.items() if k != fid]
                _adopt_optimal(state, base, remaining, max_hops, budget)
        snapshot_level(now)
        if observer is not None:
            observer(now, state)

    acc.sample(horizon, math.nan, 0, 0)
    acc.samples.pop()  # closing sentinel only terminates the last interval

    if horizon > 0:
        mean_power = acc.energy / horizon
        mean_flows = acc.flow_time_integral / horizon
        mean_cores = acc.core_time_integral / horizon
    else:
        _, mean_power, mean_cores, mean_flows = acc.samples[-1]
    per_flow = mean_power / mean_flows if mean_flows > 0 else mean_power

    return RunResult(
        scheme=scheme,
        seed=seed,
        config=dict(config or {}, hysteresis=hysteresis, eligibility=eligibility, count_edge_idle=count_edge_idle),
        avg_power_per_flow=per_flow,
        total_energy=acc.energy,
        mean_network_power=mean_power,
        blocked_fraction=acc.blocked / acc.arrivals if acc.arrivals else 0.0,
        mean_active_core_switches=float(mean_cores),
        mean_concurrent_flows=float(mean_flows),
        horizon=horizon,
        arrivals=acc.arrivals,
        blocked=acc.blocked,
        completed=acc.completed,
        samples=acc.samples,
        events=state.log or [],
    )


def gain(nops: RunResult, other: RunResult) -> float:
    """Fractional power saving of ``other`` relative to the always-on baseline run."""
    if Scheme(nops.scheme) is not Scheme.NO_POWER_SAVING:
        raise ComparisonError("the reference run must use the no-power-saving scheme")
    if nops.seed != other.seed or nops.config != other.config or nops.horizon != other.horizon:
        raise ComparisonError("runs were made under different configurations")
    return (nops.mean_network_power - other.mean_network_power) / nops.mean_network_power


def write_power_samples(result: RunResult, path: str | FsPath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_FIELDS)
        for t, p, c, n in result.samples:
            w.writerow([repr(t), repr(p), c, n])
