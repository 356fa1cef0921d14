"""Command-line scenario runner.

Exit status: 0 success, 1 configuration error, 2 engine failure.  The number
of concurrent sweep jobs is read from ``SEMIDYN_WORKERS`` (default 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .scenarios import ENGINES, SCENARIOS, ConfigError, load_config, parse_config, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_ENGINE = 0, 1, 2
WORKERS_ENV = "SEMIDYN_WORKERS"


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_sweep(items):
    sweep = {}
    for item in items or []:
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise ConfigError(f"--sweep expects KEY=v1,v2,..., got {item!r}")
        sweep[key.strip()] = [_parse_value(v.strip()) for v in values.split(",")]
    return sweep


def build_parser():
    p = argparse.ArgumentParser(prog="semidyn", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="TOML scenario configuration")
    p.add_argument("--scenario", choices=SCENARIOS, help="override the scenario name")
    p.add_argument("--hbar", type=float, help="override model.hbar")
    p.add_argument("--seed", type=int, help="override ensemble.seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--engines", help=f"comma-separated subset of {','.join(ENGINES)}")
    p.add_argument("--sweep", action="append", metavar="KEY=v1,v2,...",
                   help="sweep a dotted config key over a list (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args):
    ov = {}
    if args.scenario:
        ov["scenario"] = args.scenario
    if args.hbar is not None:
        ov["model.hbar"] = args.hbar
    if args.seed is not None:
        ov["ensemble.seed"] = args.seed
    if args.out is not None:
        ov["out"] = str(args.out)
    if args.engines:
        ov["engines"] = [e.strip() for e in args.engines.split(",") if e.strip()]
    sweep = _parse_sweep(args.sweep)
    if sweep:
        ov["sweep"] = sweep
    return ov


def _run_one(cfg):
    report = run_scenario(cfg)
    return str(cfg.out), report.failed


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ov = _overrides(args)
        cfg = load_config(args.config, ov) if args.config else parse_config("", ov)
        runs = cfg.expand()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1") or 1))
    if workers > 1 and len(runs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, runs))
    else:
        results = [_run_one(r) for r in runs]
    if len(runs) > 1:
        io.write_json(cfg.out / "sweep.json", {
            "config_hash": cfg.hash(), "sweep": cfg.sweep,
            "runs": [{"out": o, "failed": f} for o, f in results]})
    failed = [(o, f) for o, f in results if f]
    for o, f in failed:
        print(f"engine failure in {o}: {', '.join(f)}", file=sys.stderr)
    return EXIT_ENGINE if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
