"""Command-line entry point.

    laimr run       --config edge_cloud_tail --seed 3
    laimr ramp      --config edge_cloud_tail --seeds 0-9 --out ramp.csv
    laimr ab        --config edge_cloud_tail --out ab.csv --workers 4
    laimr calibrate --config edge_cloud_tail [--measurements latency.csv]
    laimr plan      --config planning_example
    laimr validate  [--config FILE]     (no --config: every shipped config)

Exit status is 0 only when every requested run completed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config, shipped_configs
from .errors import ConfigError, LaimrError
from .suite import Mode, format_event_logs, run_suite

EXIT_OK, EXIT_RUN_FAILED, EXIT_CONFIG = 0, 1, 2


def parse_seeds(text: str) -> tuple:
    """'7' -> (7,), '0-3' -> (0, 1, 2, 3), '1,4,9' -> (1, 4, 9)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}")
    return tuple(seeds)


def _seeds_arg(text):
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or shipped config name")
    seeds = common.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="run a single seed")
    seeds.add_argument("--seeds", type=_seeds_arg, help="seed list, e.g. 0-9 or 1,4,9")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--event-log", metavar="PATH", help="write per-run event logs")
    common.add_argument("--workers", type=int, default=1, help="parallel simulation processes")

    p = argparse.ArgumentParser(prog="laimr", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single rate, all seeds")
    sub.add_parser("ramp", parents=[common], help="sweep the configured rate ramp")
    sub.add_parser("ab", parents=[common], help="latency-aware router vs reactive baseline over the ramp")
    cal = sub.add_parser("calibrate", parents=[common], help="fit latency parameters")
    cal.add_argument("--measurements", help="CSV with lambda_per_replica,latency_seconds")
    sub.add_parser("plan", parents=[common], help="solve the config's planning problem")
    sub.add_parser("validate", parents=[common], help="check configs without running")
    return p


_MODES = {"run": Mode.SINGLE, "ramp": Mode.RAMP, "ab": Mode.AB_COMPARE,
          "calibrate": Mode.CALIBRATE, "plan": Mode.PLAN}


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _validate(args) -> int:
    refs = [args.config] if args.config else shipped_configs()
    status = EXIT_OK
    for ref in refs:
        try:
            cfg = load_config(ref)
        except ConfigError as e:
            status = EXIT_CONFIG
            print(f"invalid: {e.source or ref}", file=sys.stderr)
            for d in e.diagnostics:
                print(f"  {d}", file=sys.stderr)
            continue
        print(f"ok: {cfg.scenario.name}")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _validate(args)
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"invalid config: {e.source or args.config}", file=sys.stderr)
        for d in e.diagnostics:
            print(f"  {d}", file=sys.stderr)
        return EXIT_CONFIG

    seeds = (args.seed,) if args.seed is not None else args.seeds
    mode = _MODES[args.command]
    try:
        res = run_suite(
            cfg,
            mode,
            seeds=seeds,
            workers=max(1, args.workers),
            event_log=bool(args.event_log),
            measurements=getattr(args, "measurements", None),
        )
    except LaimrError as e:
        print(f"error: {cfg.scenario.name}: {e}", file=sys.stderr)
        return EXIT_RUN_FAILED

    if mode in (Mode.CALIBRATE, Mode.PLAN):
        if res.report is not None:
            _write(args.out, json.dumps(res.report, indent=2) + "\n")
    else:
        _write(args.out or cfg.output, res.csv_text())
        if args.event_log:
            Path(args.event_log).write_text(format_event_logs(res.event_logs))
        print(f"{len(res.rows)} runs completed, {len(res.errors)} failed", file=sys.stderr)
    for err in res.errors:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
