"""Command-line front end: ``emma-sim --config exp.toml --out results/``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import ConfigError, ExperimentConfig, emit_results, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="emma-sim",
        description="Replicated energy-aware routing experiments; writes CSV tables and a JSON summary.",
    )
    p.add_argument("--config", type=Path, help="flat TOML file; omitted keys take the default settings")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--schemes", help="comma-separated subset of emma,nops,optimal")
    p.add_argument("--replications", type=int, help="replications per cell (overrides the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    p.add_argument("--verbose", action="store_true", help="also write per-run power samples and event logs")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.schemes:
            cfg.schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        if args.replications is not None:
            cfg.replications = args.replications
        cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"emma-sim: {exc}", file=sys.stderr)
        return 2

    cells = cfg.cells()
    print(
        f"emma-sim: {len(cells)} cell(s) x {cfg.replications} replication(s), schemes {','.join(cfg.schemes)}",
        file=sys.stderr,
    )
    verbose_dir = args.out / "runs" if args.verbose else None
    result = run_experiment(cfg, workers=args.workers, verbose_dir=verbose_dir)
    for path in emit_results(result, args.out):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
