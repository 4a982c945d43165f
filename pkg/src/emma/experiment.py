"""Experiment configuration, replicated parameter sweeps and CSV/JSON reporting."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optimal import SolverBudgetExceeded
from .power import PowerModel
from .routing import write_event_log
from .sim import RunResult, Scheme, gain, run, write_power_samples
from .topology import generate_topology
from .workload import WorkloadConfig, generate_workload

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

BITS_PER_BYTE = 8


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    arrival_rate_flows_per_s: float = 0.1
    mean_duration_s: float = 20.0
    n_core: int = 12
    n_edge: int | None = None  # None: half the core count
    hosts_per_edge: int = 10
    link_capacity_bytes_per_s: float = 10e6
    hysteresis_s: float = 10.0
    p_idle_w: float = 90.0
    e_lookup_nj: float = 0.034
    e_rx_nj: float = 0.2
    e_xfer_nj: float = 0.21
    e_tx_nj: float = 0.2
    p_link: float = 0.5
    packet_size_bytes: int = 1500  # echoed only; the fluid model has no packets
    horizon_s: float = 500.0
    flow_rate_bps: float = 8e6
    replications: int = 20
    edge_uplinks: int = 2
    seed: int = 0
    schemes: list[str] = field(default_factory=lambda: ["emma", "nops"])
    sweep_arrival_rate: list[float] = field(default_factory=list)
    sweep_n_core: list[int] = field(default_factory=list)
    eligibility: str = "fixed"
    count_edge_idle: bool = False
    solver_budget: int = 10_000_000
    solver_max_hops: int | None = None
    optimal_max_core: int = 6

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = (
            "arrival_rate_flows_per_s",
            "mean_duration_s",
            "link_capacity_bytes_per_s",
            "flow_rate_bps",
            "replications",
            "edge_uplinks",
            "solver_budget",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_core < 2:
            raise ConfigError("n_core must be at least 2")
        if not 0 < self.p_link <= 1:
            raise ConfigError("p_link must lie in (0, 1]")
        if self.horizon_s < 0 or self.hysteresis_s < 0:
            raise ConfigError("horizon_s and hysteresis_s must be non-negative")
        for s in self.schemes:
            try:
                Scheme(s)
            except ValueError:
                raise ConfigError(f"unknown scheme {s!r}; choose from {[x.value for x in Scheme]}") from None
        if self.eligibility not in ("fixed", "half_duration"):
            raise ConfigError("eligibility must be 'fixed' or 'half_duration'")
        if any(n < 2 for n in self.sweep_n_core) or any(r <= 0 for r in self.sweep_arrival_rate):
            raise ConfigError("sweep values out of range")

    # -- derived settings -----------------------------------------------------

    def edges_for(self, n_core: int) -> int:
        if self.n_edge is not None:
            return self.n_edge
        return max(1, n_core // 2)

    @property
    def link_capacity_bps(self) -> float:
        return self.link_capacity_bytes_per_s * BITS_PER_BYTE

    def power_model(self) -> PowerModel:
        return PowerModel(self.e_lookup_nj, self.e_rx_nj, self.e_xfer_nj, self.e_tx_nj, self.p_idle_w)

    def cells(self) -> list[tuple[int, float]]:
        cores = self.sweep_n_core or [self.n_core]
        rates = self.sweep_arrival_rate or [self.arrival_rate_flows_per_s]
        return list(itertools.product(cores, rates))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_FIELDS = {"n_core", "n_edge", "hosts_per_edge", "packet_size_bytes", "replications", "edge_uplinks",
               "seed", "solver_budget", "solver_max_hops", "optimal_max_core"}
_NULLABLE_FIELDS = {"n_edge", "solver_max_hops"}


def config_from_mapping(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if value is None and key in _NULLABLE_FIELDS:
            pass
        elif key in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
        elif key == "sweep_n_core":
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise ConfigError("sweep_n_core must be a list of integers")
            value = list(value)
        elif key == "sweep_arrival_rate":
            value = [float(v) for v in value]
        elif key == "schemes":
            value = [str(v) for v in value]
        elif key == "count_edge_idle":
            if not isinstance(value, bool):
                raise ConfigError("count_edge_idle must be true or false")
        elif key == "eligibility":
            value = str(value)
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        else:
            value = float(value)
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a flat TOML file; absent keys keep their defaults, unknown keys are rejected."""
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, found table(s) {nested}")
    return config_from_mapping(data)


# -- seeds --------------------------------------------------------------------------


def cell_seed_sequence(master_seed: int, n_core: int, arrival_rate: float, replication: int) -> np.random.SeedSequence:
    """Seed stream keyed by the cell's own coordinates, so adding cells leaves others intact."""
    rate_key = int(round(arrival_rate * 1_000_000))
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(n_core, rate_key, replication))


def replication_seeds(master_seed: int, n_core: int, arrival_rate: float, replication: int) -> dict[str, int]:
    topo, trace, routing = cell_seed_sequence(master_seed, n_core, arrival_rate, replication).spawn(3)
    return {
        "topology": int(topo.generate_state(1, np.uint64)[0]),
        "trace": int(trace.generate_state(1, np.uint64)[0]),
        "routing": int(routing.generate_state(1, np.uint64)[0]),
    }


# -- sweeps ---------------------------------------------------------------------------


@dataclass
class CellResult:
    n_core: int
    arrival_rate: float
    runs: dict[str, list[RunResult]] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    seeds: list[dict[str, int]] = field(default_factory=list)

    def stat(self, scheme: str, metric: str) -> tuple[float, float, int]:
        values = [getattr(r, metric) for r in self.runs.get(scheme, [])]
        return _mean_std(values) + (len(values),)

    def gains(self, scheme: str = "emma") -> list[float]:
        base, other = self.runs.get("nops", []), self.runs.get(scheme, [])
        if len(base) != len(other):
            return []
        return [gain(b, o) for b, o in zip(base, other)]


@dataclass
class SweepResult:
    config: ExperimentConfig
    cells: list[CellResult]

    def cell(self, n_core: int, arrival_rate: float) -> CellResult:
        for c in self.cells:
            if c.n_core == n_core and math.isclose(c.arrival_rate, arrival_rate):
                return c
        raise KeyError((n_core, arrival_rate))


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else math.nan
    return mean, std


def _run_replication(cfg: ExperimentConfig, n_core: int, arrival_rate: float, rep: int, verbose_dir: str | None):
    seeds = replication_seeds(cfg.seed, n_core, arrival_rate, rep)
    g = generate_topology(
        n_core,
        cfg.edges_for(n_core),
        cfg.hosts_per_edge,
        cfg.p_link,
        cfg.link_capacity_bps,
        cfg.edge_uplinks,
        seed=seeds["topology"],
    )
    wl = WorkloadConfig(arrival_rate, cfg.mean_duration_s, cfg.flow_rate_bps, cfg.horizon_s)
    trace = generate_workload(wl, g, seed=seeds["trace"])
    m = cfg.power_model()
    echo = {"n_core": n_core, "arrival_rate": arrival_rate, "flow_rate_bps": cfg.flow_rate_bps}
    results: dict[str, RunResult | str] = {}
    for name in cfg.schemes:
        if name == Scheme.OPTIMAL.value and n_core > cfg.optimal_max_core:
            results[name] = f"skipped: n_core {n_core} > optimal_max_core {cfg.optimal_max_core}"
            continue
        try:
            res = run(
                g,
                trace,
                name,
                m,
                cfg.hysteresis_s,
                seeds["routing"],
                horizon=cfg.horizon_s,
                eligibility=cfg.eligibility,
                count_edge_idle=cfg.count_edge_idle,
                max_hops=cfg.solver_max_hops,
                budget=cfg.solver_budget,
                record_events=verbose_dir is not None,
                config=echo,
            )
        except SolverBudgetExceeded as exc:
            results[name] = f"skipped: {exc}"
            continue
        except Exception as exc:
            raise RuntimeError(f"cell n_core={n_core} arrival_rate={arrival_rate} rep={rep} scheme={name}: {exc}") from exc
        if verbose_dir is not None:
            stem = Path(verbose_dir) / f"n{n_core}_l{arrival_rate:g}_r{rep}_{name}"
            write_power_samples(res, f"{stem}_power.csv")
            if res.events:
                write_event_log(res.events, f"{stem}_events.csv")
        res.samples = []
        res.events = []
        results[name] = res
    return n_core, arrival_rate, rep, seeds, results


def run_experiment(cfg: ExperimentConfig, workers: int = 1, verbose_dir: str | Path | None = None) -> SweepResult:
    """Run every (cell, replication) for every scheme; schemes in a replication share topology and trace."""
    cfg.validate()
    jobs = [(n, lam, rep) for n, lam in cfg.cells() for rep in range(cfg.replications)]
    vdir = None
    if verbose_dir is not None:
        Path(verbose_dir).mkdir(parents=True, exist_ok=True)
        vdir = str(verbose_dir)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_replication, cfg, n, lam, rep, vdir) for n, lam, rep in jobs]
            outputs = []
            for k, fut in enumerate(futures, 1):
                outputs.append(fut.result())
                log.info("replication %d/%d done", k, len(jobs))
    else:
        outputs = []
        for k, (n, lam, rep) in enumerate(jobs, 1):
            outputs.append(_run_replication(cfg, n, lam, rep, vdir))
            log.info("replication %d/%d done (n_core=%d, rate=%g, rep=%d)", k, len(jobs), n, lam, rep)

    by_key = {(n, lam, rep): (seeds, res) for n, lam, rep, seeds, res in outputs}
    cells = []
    for n, lam in cfg.cells():
        cell = CellResult(n, lam)
        for rep in range(cfg.replications):
            seeds, res = by_key[(n, lam, rep)]
            cell.seeds.append(seeds)
            for name in cfg.schemes:
                value = res[name]
                if isinstance(value, str):
                    cell.skipped.setdefault(name, value)
                else:
                    cell.runs.setdefault(name, []).append(value)
        for name in list(cell.skipped):
            cell.runs.pop(name, None)  # a scheme is reported for all replications or none
        cells.append(cell)
    return SweepResult(cfg, cells)


# -- reporting ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def emit_results(r: SweepResult, out_dir: str | Path) -> list[Path]:
    """Write figure-shaped CSV tables plus a JSON summary sufficient to reproduce every number."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = r.config
    schemes = cfg.schemes
    written = []

    rows = []
    for c in r.cells:
        for rep in range(cfg.replications):
            for name in schemes:
                if name in c.skipped:
                    rows.append([c.n_core, c.arrival_rate, rep, name, "skipped"] + [""] * 7)
                    continue
                res = c.runs[name][rep]
                m = res.metrics()
                rows.append(
                    [c.n_core, c.arrival_rate, rep, name, "ok", res.seed]
                    + [m[k] for k in ("avg_power_per_flow_w", "mean_network_power_w", "total_energy_j",
                                      "blocked_fraction", "mean_active_core_switches", "mean_concurrent_flows")]
                )
    path = out / "runs.csv"
    _write_csv(
        path,
        ["n_core", "arrival_rate_flows_per_s", "replication", "scheme", "status", "routing_seed",
         "avg_power_per_flow_w", "mean_network_power_w", "total_energy_j", "blocked_fraction",
         "mean_active_core_switches", "mean_concurrent_flows"],
        rows,
    )
    written.append(path)

    rows = []
    for c in r.cells:
        for name in schemes:
            if name in c.skipped:
                continue
            ppf, ppf_sd, n = c.stat(name, "avg_power_per_flow")
            pw, pw_sd, _ = c.stat(name, "mean_network_power")
            blk, _, _ = c.stat(name, "blocked_fraction")
            cores, _, _ = c.stat(name, "mean_active_core_switches")
            rows.append([c.n_core, c.arrival_rate, name, ppf, ppf_sd, pw, pw_sd, blk, cores, n])
    path = out / "power_per_flow.csv"
    _write_csv(
        path,
        ["n_core", "arrival_rate_flows_per_s", "scheme", "mean_avg_power_per_flow_w", "std_w",
         "mean_network_power_w", "std_network_power_w", "mean_blocked_fraction", "mean_active_core_switches",
         "replications"],
        rows,
    )
    written.append(path)

    core_values = sorted({c.n_core for c in r.cells})
    rate_values = sorted({c.arrival_rate for c in r.cells})
    if len(core_values) == 1:
        rows = [
            [c.arrival_rate, name, *c.stat(name, "avg_power_per_flow")]
            for c in r.cells
            for name in schemes
            if name not in c.skipped
        ]
        path = out / "power_vs_arrival_rate.csv"
        _write_csv(path, ["arrival_rate_flows_per_s", "scheme", "mean_avg_power_per_flow_w", "std_w", "replications"], rows)
        written.append(path)
    if len(rate_values) == 1:
        rows = [
            [c.n_core, name, *c.stat(name, "avg_power_per_flow")]
            for c in r.cells
            for name in schemes
            if name not in c.skipped
        ]
        path = out / "power_vs_n_core.csv"
        _write_csv(path, ["n_core", "scheme", "mean_avg_power_per_flow_w", "std_w", "replications"], rows)
        written.append(path)

    if "nops" in schemes and "emma" in schemes:
        rows = []
        for c in r.cells:
            g_mean, g_std = _mean_std(c.gains("emma"))
            rows.append([c.n_core, c.arrival_rate, g_mean, g_std])
        path = out / "gain.csv"
        _write_csv(path, ["n_core", "arrival_rate", "gain_mean", "gain_std"], rows)
        written.append(path)

    summary = {
        "config": cfg.to_dict(),
        "notes": {
            "flow_rate_bps": f"constant per-flow demand of {cfg.flow_rate_bps:g} bit/s (modeling choice)",
            "count_edge_idle": cfg.count_edge_idle,
            "units": {"power": "W", "energy": "J", "rate": "bit/s"},
        },
        "cells": [
            {
                "n_core": c.n_core,
                "n_edge": cfg.edges_for(c.n_core),
                "arrival_rate": c.arrival_rate,
                "seeds": c.seeds,
                "skipped": c.skipped,
            }
            for c in r.cells
        ],
    }
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def config_from_summary(path: str | Path) -> ExperimentConfig:
    """Rebuild the exact configuration recorded in a ``summary.json``."""
    data = json.loads(Path(path).read_text())
    return config_from_mapping(data["config"])
