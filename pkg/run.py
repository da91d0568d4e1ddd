#!/usr/bin/env python3
"""
Command-line entry point for the block-matrix perturbation toolkit.

Run:  python run.py run configs/oscillator.yaml --out results/oscillator.csv
Scan: python run.py scan configs/oscillator.yaml --out results/scan.csv
Add --verify to append the cross-oracle suite. Without --out the CSV goes to stdout.

Set BLOCKPERT_LOG_LEVEL (or pass --log-level) for diagnostics on stderr.
Exit codes: 0 success, 2 invalid input, 3 oracle breach, 1 other toolkit error.
"""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

# Ensure package root is on path when running as script
_root = Path(__file__).resolve().parent
if str(_root) not in sys.path:
    sys.path.insert(0, str(_root))

from errors import BlockPertError, ConfigError, DimensionError, NumericalFailure, PreconditionError
from problem_config import config_to_document, load_config
from results_writer import table_to_csv_text, write_sidecar, write_table
from runner import enforce, run, scan_convergence, verify

LOG_LEVEL_ENV = "BLOCKPERT_LOG_LEVEL"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockpert",
        description="Compare block-matrix, Rayleigh-Schrodinger, Dyson and exact propagation.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="YAML problem configuration")
    common.add_argument("--out", help="CSV output path (a <out>.config.json sidecar is written next to it)")
    common.add_argument("--verify", action="store_true", help="append the cross-oracle suite")
    common.add_argument("--log-level", default=os.environ.get(LOG_LEVEL_ENV, "WARNING"))
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="method comparison over the (lambda, t) grid")
    sub.add_parser("scan", parents=[common], help="convergence scan with fitted log-log slopes")
    return parser


def _print_summary(command: str, rows, out: Optional[Path], stream) -> None:
    print(f"\nBlock-matrix perturbation: {command}", file=stream)
    print("==================================", file=stream)
    metrics: dict[str, list] = {}
    for r in rows:
        metrics.setdefault(f"{r.method_a}/{r.method_b} {r.metric}", []).append(r.value)
    for name, values in metrics.items():
        numeric = [v for v in values if isinstance(v, float)]
        worst = f"max={max(numeric):.3e}" if numeric else ", ".join(str(v) for v in values)
        print(f"- {name}: {len(values)} row(s) {worst}", file=stream)
    if out is not None:
        print(f"\nTable written to {out}", file=stream)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    # Summary never shares stdout with a CSV written there.
    summary_stream = sys.stdout if args.out else sys.stderr
    try:
        config = load_config(args.config)
        rows = scan_convergence(config) if args.command == "scan" else run(config)
        if args.verify:
            rows = rows + verify(config)
        out = None
        if args.out:
            out = write_table(rows, args.out)
            write_sidecar(out, {"command": args.command, "verify": bool(args.verify), "config": config_to_document(config)})
        else:
            sys.stdout.write(table_to_csv_text(rows))
        _print_summary(args.command, rows, out, summary_stream)
        enforce(config, rows)
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        for r in e.rows:
            print(f"  {r.method_a}/{r.method_b} {r.metric} lambda={r.lam} t={r.t}: {r.value}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DimensionError, PreconditionError, FileNotFoundError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except BlockPertError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
