"""``mcst`` command-line entry point: argument parsing, logging setup and exit codes."""

import argparse
import logging
import sys
from typing import List, Optional

from src.cli import commands
from src.core.config import get_settings
from src.core.errors import (
    CheckFailure,
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    EmbeddingIndexError,
    FormatError,
    MCSTError,
    NonFiniteError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcst", description="Dual-pathway selective-scan traffic forecaster")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Write a synthetic dataset")
    gen.add_argument("--nodes", type=positive_int, default=6)
    gen.add_argument("--days", type=positive_int, default=3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--interval", type=positive_int, default=5, help="Sampling interval in minutes")
    gen.add_argument("--start-slot", type=int, default=0)
    gen.add_argument("--start-dow", type=int, default=0, help="Weekday of the first step, 0 = Monday")
    gen.add_argument("--out", required=True, help="Destination dataset file")
    gen.set_defaults(handler=commands.cmd_gen_data)

    tr = sub.add_parser("train", help="Train a model from a run config")
    tr.add_argument("--config", help="INI run config; defaults apply when omitted")
    tr.add_argument("--out", help="Override the run directory")
    tr.set_defaults(handler=commands.cmd_train)

    ev = sub.add_parser("eval", help="Score a checkpoint and the Historical baselines")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", help="Run config; defaults to config.resolved beside the checkpoint")
    ev.add_argument("--data", help="Dataset file; defaults to the run config's data section")
    ev.add_argument("--split", choices=["train", "val", "test"], default="test")
    ev.add_argument("--out", help="Report path")
    ev.add_argument("--save-predictions", action="store_true", help="Also write predictions.npy")
    ev.set_defaults(handler=commands.cmd_eval)

    pr = sub.add_parser("predict", help="Forecast the steps after a given index as CSV")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--config", help="Run config; defaults to config.resolved beside the checkpoint")
    pr.add_argument("--data", help="Dataset file; defaults to the run config's data section")
    pr.add_argument("--at", type=int, required=True, help="First forecast step; history is the t_in steps before it")
    pr.add_argument("--out", help="CSV path; stdout when omitted")
    pr.set_defaults(handler=commands.cmd_predict)

    bench = sub.add_parser("bench-scan", help="Benchmark sequential against chunked scans")
    bench.add_argument("--len", type=positive_int, nargs="+", default=[1024])
    bench.add_argument("--dinner", type=positive_int, default=8)
    bench.add_argument("--state", type=positive_int, default=4)
    bench.add_argument("--chunks", type=positive_int, nargs="+", default=[1, 16, 64])
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="CSV path; stdout when omitted")
    bench.set_defaults(handler=commands.cmd_bench_scan)

    gc = sub.add_parser("gradcheck", help="Finite-difference check of every parameter")
    gc.add_argument("--config", help="Run config of the model to check; a tiny default when omitted")
    gc.add_argument("--eps", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=commands.GRADCHECK_TOLERANCE)
    gc.set_defaults(handler=commands.cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns 0 success, 1 check failure, 2 usage/config error, 3 divergence."""
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    try:
        return args.handler(args)
    except CheckFailure as e:
        logger.error(f"Check failed: {e}")
        return EXIT_CHECK_FAILURE
    except (DivergenceError, NonFiniteError) as e:
        logger.error(f"Run diverged: {e}")
        return EXIT_DIVERGENCE
    except (ConfigError, FormatError, DataError, DimensionError, EmbeddingIndexError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MCSTError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_CHECK_FAILURE


if __name__ == "__main__":
    sys.exit(main())
