"""Command-line entry point: keygen, conference, qkey, sweep, oracle."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    emit_report,
    load_scenario,
    oracle_tables,
    render_sweep_csv,
    run_sweep,
    run_trials,
)
from .qcore import InvariantViolation

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_INVARIANT = 0, 1, 2, 3

ORACLE_TOL = 1e-12


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file")
    common.add_argument("--seed", type=int, help="master seed (overrides the file)")
    common.add_argument("--out", type=Path, help="write the report here instead of stdout")
    common.add_argument("--format", choices=("csv", "text"), default="csv")
    common.add_argument("--trials", type=int, help="number of trials (overrides the file)")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    parser = argparse.ArgumentParser(prog="mqrsc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("keygen", parents=[common], help="GHZ key agreement (scheme 1)")
    sub.add_parser("conference", parents=[common], help="key agreement plus one-time-pad conference")
    sub.add_parser("qkey", parents=[common], help="reusable quantum key conference (scheme 2)")
    sub.add_parser("sweep", parents=[common], help="predicted-vs-empirical rate grid")
    sub.add_parser("oracle", parents=[common], help="exhaustive engine-vs-enumeration check")
    return parser


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "oracle":
            report = oracle_tables(4)
            _write(report.render(), args.out)
            return EXIT_OK if report.max_deviation < ORACLE_TOL else EXIT_INVARIANT

        if args.config is None:
            raise ConfigError(["--config: required for this command"])
        overrides = {"seed": args.seed, "trials": args.trials}
        if args.command == "keygen":
            overrides.update(scheme=1, mode="keygen")
        elif args.command == "conference":
            overrides.update(scheme=1, mode="conference")
        elif args.command == "qkey":
            overrides.update(scheme=2, mode="qkey")
        cfg = load_scenario(args.config, overrides)

        if args.command == "sweep":
            cells = run_sweep(cfg, args.workers)
            _write(render_sweep_csv(cells), args.out)
            return EXIT_ABORT if all(c.stats.all_aborted for c in cells) else EXIT_OK

        stats = run_trials(cfg, args.workers)
        text = emit_report(stats, args.format)
        _write(text, args.out)
        return EXIT_ABORT if stats.all_aborted else EXIT_OK
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
