import argparse
import sys
from pathlib import Path

from src.custom_exceptions import (
    ConfigParseError,
    GardnerSolverError,
    InitializationError,
    NumericalBreakdownError,
)
from src.experiments import (
    EXIT_BREAKDOWN,
    EXIT_SUCCESS,
    EXIT_USAGE,
    TABLE_SCAN_POINTS,
    run_experiment,
    run_scan,
    run_stability,
    run_table,
)
from src.load_config import load_run_config
from src.utils import GARDNER_OUTPUT_DIR, logger


TABLE_IDS = ("T2", "T3", "T4", "T5", "T6")


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so the caller owns the exit code."""

    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="gardner-espline",
        description="Exponential cubic B-spline collocation solver for the Gardner equation.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run one configured simulation")
    run_parser.add_argument("config", type=Path)

    table_parser = commands.add_parser("table", help="recompute a published table")
    table_parser.add_argument("table_id", choices=TABLE_IDS)
    table_parser.add_argument("--out", type=Path, default=None)
    table_parser.add_argument("--scan-points", type=int, default=TABLE_SCAN_POINTS)

    scan_parser = commands.add_parser("scan", help="scan the spline parameter zeta")
    scan_parser.add_argument("config", type=Path)
    scan_parser.add_argument("--zeta-min", type=float, required=True)
    scan_parser.add_argument("--zeta-max", type=float, required=True)
    scan_parser.add_argument("--points", type=int, default=20)
    scan_parser.add_argument("--log-spaced", action="store_true")

    stability_parser = commands.add_parser("stability", help="von Neumann amplification sweep")
    stability_parser.add_argument("config", type=Path)
    stability_parser.add_argument("--epsilon", type=float, default=None)
    stability_parser.add_argument("--phases", type=int, default=256)
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "table":
        output = args.out or Path(GARDNER_OUTPUT_DIR) / f"{args.table_id}.csv"
        run_table(args.table_id, output, args.scan_points)
        return EXIT_SUCCESS

    config = load_run_config(args.config)
    if args.command == "run":
        return run_experiment(config).exit_code
    if args.command == "scan":
        run_scan(config, args.zeta_min, args.zeta_max, args.points, args.log_spaced)
        return EXIT_SUCCESS
    run_stability(config, args.epsilon, args.phases)
    return EXIT_SUCCESS


def main(argv: list[str] | None = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes.

    Returns:
        0 on success, 1 for usage, configuration or input errors, 2 for numerical breakdown.
    """
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as e:
        logger.error(f"Usage error: {e}")
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return _dispatch(args)
    except (NumericalBreakdownError, InitializationError) as e:
        logger.error(f"Numerical breakdown: {e}")
        return EXIT_BREAKDOWN
    except (ConfigParseError, FileNotFoundError) as e:
        logger.error(f"Could not load configuration: {e}")
        return EXIT_USAGE
    except GardnerSolverError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"An unexpected error occurred. Error {e}")
        return EXIT_USAGE
