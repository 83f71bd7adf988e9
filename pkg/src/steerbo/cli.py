"""Command-line entry points: run one campaign, sweep seeds, or serve live."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from steerbo.config import ConfigError, config_from_mapping, load_config
from steerbo.engine import run_sim_campaign, run_sweep


def _apply_overrides(cfg, overrides: list[str]):
    if not overrides:
        return cfg
    raw = {k: v for k, v in ((o.split("=", 1) + [None])[:2] for o in overrides)}
    if any(v is None for v in raw.values()):
        raise ConfigError("--set expects key=value")
    merged = {**cfg.__dict__, **{k: yaml.safe_load(v) for k, v in raw.items()}}
    return config_from_mapping(merged)


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="steerbo",
        description="Bayesian optimization with asynchronous expert feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one sim-mode campaign")
    run_p.add_argument("--config", required=True, type=Path)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", type=Path, default=Path("runs/run"))
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key")

    sweep_p = sub.add_parser("sweep", help="run a campaign across a seed range")
    sweep_p.add_argument("--config", required=True, type=Path)
    sweep_p.add_argument("--seeds", required=True, help="range A..B (inclusive) or one seed")
    sweep_p.add_argument("--out", type=Path, default=Path("runs/sweep"))
    sweep_p.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE")

    serve_p = sub.add_parser("serve", help="serve a live campaign over HTTP")
    serve_p.add_argument("--config", required=True, type=Path)
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args.overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        trace_path, summary = run_sim_campaign(cfg, args.out)
        print(json.dumps({k: summary[k] for k in
                          ("seed", "best_value", "labels_total", "versions_published")}))
        print(f"trace: {trace_path}")
        return 0

    if args.command == "sweep":
        seeds = _parse_seed_range(args.seeds)
        csv_path, summaries = run_sweep(cfg, seeds, args.out)
        best = max(s["best_value"] for s in summaries)
        print(f"swept {len(seeds)} seeds; best value {best!r}")
        print(f"summary: {csv_path}")
        return 0

    # serve
    from steerbo.service import run_server

    run_server(cfg, args.host, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
