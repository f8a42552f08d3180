"""Command-line entry point.

    atm run <experiment> [--config FILE] [--seeds N|a,b,c] [--out DIR]
            [--planner-timeout-ms N]

Writes <out>/<experiment>.csv and <out>/<experiment>_summary.json, prints one
PASS/FAIL line per acceptance check, and exits non-zero if any check failed.
If ATM_PLANNER_URL is set, the full-agent experiment routes planning through
that HTTP endpoint and falls back to the scripted planner on transport,
timeout, or schema errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from ..errors import ConfigError
from ..planner import ExternalPlanner
from .config import EXPERIMENTS, LabConfig, default_config, load_config
from .experiments import RUNNERS
from .worlds import build_fixture_planner

log = logging.getLogger(__name__)


def _parse_seeds(text: str) -> list[int]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"could not parse seed list {text!r}")
    try:
        values = [int(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"could not parse seed list {text!r}") from exc
    if len(values) == 1 and "," not in text:
        n = values[0]
        if n <= 0:
            raise ConfigError("seed count must be positive")
        return list(range(n))
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atm", description="agent runtime simulation lab")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write its report")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", type=Path, default=None, help="JSON overlay on the defaults")
    run.add_argument("--seeds", type=str, default=None, help="seed count N or comma list a,b,c")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    run.add_argument(
        "--planner-timeout-ms",
        type=int,
        default=2000,
        help="HTTP planner deadline when ATM_PLANNER_URL is set",
    )
    return parser


def _resolve_planner(cfg: LabConfig, timeout_ms: int) -> tuple[object | None, ExternalPlanner | None]:
    if cfg.experiment != "full-agent":
        return None, None
    scripted = build_fixture_planner(
        env_bases=[float(v) for v in cfg.world["env_bases"]],
        targets=[float(v) for v in cfg.world["goal_targets"]],
        bucket_width=float(cfg.world["bucket_width"]),
        hold_length=int(cfg.world["plan_hold_length"]),
    )
    url = os.environ.get("ATM_PLANNER_URL")
    if not url:
        return scripted, None
    external = ExternalPlanner(endpoint=url, fallback=scripted, timeout_ms=timeout_ms)
    log.info("routing full-agent planning through %s", url)
    return external, external


def cmd_run(args: argparse.Namespace) -> int:
    if args.config is not None:
        cfg = load_config(args.config, args.experiment)
    else:
        cfg = default_config(args.experiment)
    if args.seeds is not None:
        cfg = dataclasses.replace(cfg, seeds=tuple(_parse_seeds(args.seeds)))

    planner, external = _resolve_planner(cfg, args.planner_timeout_ms)
    runner = RUNNERS[cfg.experiment]
    report = runner(cfg, planner=planner) if cfg.experiment == "full-agent" else runner(cfg)
    if external is not None and external.fallback_count:
        print(f"planner fallbacks: {external.fallback_count}")

    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = args.out / f"{cfg.experiment}.csv"
    summary_path = args.out / f"{cfg.experiment}_summary.json"
    report.write_csv(csv_path)
    report.write_summary(summary_path)

    print(f"experiment: {report.experiment}  seeds: {len(report.seeds)}  runtime: {report.runtime_s:.2f}s")
    for name, ok in sorted(report.passes.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"wrote {csv_path} and {summary_path}")
    return 0 if report.all_passed else 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("ATM_LOG_LEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
