"""Command-line entry point: run, sweep, slope and selftest."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .experiment import (
    NUMERICAL_ERRORS, RESULT_COLUMNS, ConfigError, fit_slope, load_config, read_results, run, write_results,
)
from .grid import save_grid
from .selftest import run_selftest

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _print_rows(rows) -> None:
    print(",".join(RESULT_COLUMNS))
    for row in rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row.as_list()))


def _execute(config_path: str, require_sweep: bool, output: Optional[str]) -> int:
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error at /: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    is_sweep = isinstance(config["epsilon"], list) or isinstance(config["time"]["tau"], list)
    if not require_sweep and is_sweep:
        print("config error at /epsilon: 'run' expects scalar epsilon and tau; use 'sweep'", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows, states = run(config)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out_cfg = config.get("output", {})
    path = output or out_cfg.get("path")
    if path:
        write_results(rows, path, config)
        if out_cfg.get("dump_states"):
            for i, state in enumerate(states):
                if state is not None:
                    save_grid(state, Path(path).with_suffix(f".state{i}.grid"))
    _print_rows(rows)
    if require_sweep and len(rows) >= 3:
        for x_field in ("epsilon", "tau"):
            xs = {getattr(r, x_field) for r in rows}
            if len(xs) == len(rows):
                try:
                    slope, r2 = fit_slope(rows, x_field, "error_l2")
                    print(f"slope error_l2 vs {x_field}: {slope:.3f} (r^2={r2:.4f})")
                except ValueError:
                    pass
    return EXIT_OK


def _slope(csv_path: str, x: str, y: str) -> int:
    try:
        rows = read_results(csv_path)
        slope, r2 = fit_slope(rows, x, y)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"slope={slope:.6f} r2={r2:.6f}")
    return EXIT_OK


def _selftest() -> int:
    results = run_selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiclassical", description="Semiclassical wave-packet experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a single configuration")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output")
    p_sweep = sub.add_parser("sweep", help="run an epsilon/tau sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("-o", "--output")
    p_slope = sub.add_parser("slope", help="log-log slope of two CSV columns")
    p_slope.add_argument("csv")
    p_slope.add_argument("--x", default="epsilon")
    p_slope.add_argument("--y", default="error_l2")
    sub.add_parser("selftest", help="run the invariant checks")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return _execute(args.config, False, args.output)
    if args.command == "sweep":
        return _execute(args.config, True, args.output)
    if args.command == "slope":
        return _slope(args.csv, args.x, args.y)
    return _selftest()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
