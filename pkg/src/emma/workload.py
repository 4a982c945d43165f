"""Seeded flow-arrival traces: Poisson arrivals, exponential durations, uniform host pairs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .topology import NetworkGraph, NodeKind

CSV_FIELDS = ("flow_id", "src", "dst", "rate_bps", "arrival_s", "duration_s")


class WorkloadError(Exception):
    pass


@dataclass(frozen=True)
class FlowSpec:
    flow_id: int
    src: int
    dst: int
    rate: float
    arrival: float
    duration: float

    def __post_init__(self):
        if self.src == self.dst:
            raise WorkloadError(f"flow {self.flow_id}: src == dst")
        if not self.rate > 0:
            raise WorkloadError(f"flow {self.flow_id}: rate must be positive")
        if not self.duration > 0:
            raise WorkloadError(f"flow {self.flow_id}: duration must be positive")

    @property
    def departure(self) -> float:
        return self.arrival + self.duration


@dataclass(frozen=True)
class WorkloadConfig:
    arrival_rate: float = 0.1
    mean_duration: float = 20.0
    flow_rate: float = 8e6
    horizon: float = 500.0

    def __post_init__(self):
        if self.arrival_rate <= 0 or self.mean_duration <= 0 or self.flow_rate <= 0:
            raise WorkloadError("arrival_rate, mean_duration and flow_rate must be positive")
        if self.horizon < 0:
            raise WorkloadError("horizon must be non-negative")


def generate_workload(
    cfg: WorkloadConfig,
    g: NetworkGraph,
    seed: int | np.random.SeedSequence | None = 0,
) -> list[FlowSpec]:
    hosts = g.node_ids(NodeKind.HOST)
    if len(hosts) < 2:
        raise WorkloadError("a workload needs at least two hosts")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    arrivals_ss, durations_ss, endpoints_ss = ss.spawn(3)
    arr_rng = np.random.default_rng(arrivals_ss)
    dur_rng = np.random.default_rng(durations_ss)
    ep_rng = np.random.default_rng(endpoints_ss)

    arrivals = []
    t = 0.0
    scale = 1.0 / cfg.arrival_rate
    while True:
        t += float(arr_rng.exponential(scale))
        if t > cfg.horizon:
            break
        arrivals.append(t)

    n = len(arrivals)
    durations = dur_rng.exponential(cfg.mean_duration, size=n)
    src_idx = ep_rng.integers(0, len(hosts), size=n)
    # dst drawn from the remaining hosts, shifted past src
    dst_off = ep_rng.integers(0, len(hosts) - 1, size=n)

    flows = []
    for k in range(n):
        s = int(src_idx[k])
        d = int(dst_off[k])
        if d >= s:
            d += 1
        flows.append(
            FlowSpec(
                flow_id=k,
                src=hosts[s],
                dst=hosts[d],
                rate=float(cfg.flow_rate),
                arrival=arrivals[k],
                duration=float(durations[k]),
            )
        )
    return flows


def write_trace(flows: list[FlowSpec], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for f in flows:
            w.writerow([f.flow_id, f.src, f.dst, repr(f.rate), repr(f.arrival), repr(f.duration)])


def read_trace(path: str | Path) -> list[FlowSpec]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise WorkloadError(f"trace {path} lacks columns {sorted(missing)}")
        return [
            FlowSpec(
                flow_id=int(row["flow_id"]),
                src=int(row["src"]),
                dst=int(row["dst"]),
                rate=float(row["rate_bps"]),
                arrival=float(row["arrival_s"]),
                duration=float(row["duration_s"]),
            )
            for row in reader
        ]
