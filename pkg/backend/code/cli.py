#!/usr/bin/env python3
"""
Multiresilience lab CLI.

Usage:
    python backend/code/cli.py run --nx 8 --ny 8 --nz 8 --ranks 4 --sdc-interval 20 --out report.json
    python backend/code/cli.py compare --baseline A.json --se B.json --pf C.json --multi D.json --out cmp.json

Exit codes: 0 when every repetition converged, 2 when a run aborted, 1 on usage errors.
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

load_dotenv()

from backend.code.errors import ConfigMismatch, UsageError
from backend.code.harness.compare import compare_runs
from backend.code.harness.config import ExperimentConfig
from backend.code.harness.experiment import run_experiment
from backend.code.harness.report import emit, load_report
from backend.code.paths import REPORTS_DIR
from backend.code.structured_logging import cli_logger, configure_logging
from backend.code.utils import config_section

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORTED = 2


class _Parser(argparse.ArgumentParser):
    """Reports argument errors as UsageError so they map to exit code 1."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ftlab", description="FT-GMRES multiresilience lab")
    parser.add_argument("--log-level", help="Component log level (default: FTLAB_LOG_LEVEL or config.yaml)")
    parser.add_argument("--trace", action="store_true", default=None, help="Write the runtime message trace")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = commands.add_parser("run", help="Run an experiment")
    run.add_argument("--config", help="Flat key-value experiment file")
    run.add_argument("--problem", choices=["poisson3d", "mm"])
    run.add_argument("--matrix", help="Matrix Market file for --problem mm")
    run.add_argument("--nx", type=int)
    run.add_argument("--ny", type=int)
    run.add_argument("--nz", type=int)
    run.add_argument("--ranks", type=int)
    run.add_argument("--spares", type=int)
    run.add_argument("--inner", type=int, help="Inner GMRES iterations")
    run.add_argument("--outer", type=int, help="Outer FGMRES iterations")
    run.add_argument("--tol", type=float)
    run.add_argument("--detector", choices=["none", "bounded", "monotonicity"])
    run.add_argument("--mono-interval", type=int)
    run.add_argument("--sdc-interval", help="none or inner SpMVs between injections")
    run.add_argument("--sdc-start", type=int, help="First inner SpMV index eligible for injection")
    run.add_argument("--sdc-stop", help="none or the inner SpMV index where injection stops")
    run.add_argument("--sdc-model", help="bitflip[:BIT] or scale:FACTOR")
    run.add_argument("--failures", help="none, auto:MEAN:COUNT or list:r@k,...")
    run.add_argument("--checkpoint", choices=["auto", "on", "off"])
    run.add_argument("--checkpoint-interval", help="Outer iterations between dynamic checkpoints, or young:COST:MTBF")
    run.add_argument("--checkpoint-basis", choices=["true", "false"], help="Keep V, Z and H in checkpoints")
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--out", help="Report path (default: backend/outputs/reports/<hash>.<format>)")
    run.add_argument("--format", choices=["json", "csv"])
    run.add_argument("--progress", action="store_true", default=None, help="Progress bar over repetitions")

    compare = commands.add_parser("compare", help="Compare standalone and combined resilience runs")
    compare.add_argument("--baseline", required=True)
    compare.add_argument("--se", required=True, help="SDC-only report")
    compare.add_argument("--pf", required=True, help="Process-failure-only report")
    compare.add_argument("--multi", required=True, help="Combined report")
    compare.add_argument("--out", required=True)
    return parser


def _run_overrides(args: argparse.Namespace) -> dict:
    overrides = {
        key: getattr(args, key)
        for key in (
            "problem", "matrix", "nx", "ny", "nz", "ranks", "spares", "inner", "outer", "tol",
            "detector", "mono_interval", "sdc_interval", "sdc_start", "sdc_stop", "sdc_model", "failures",
            "checkpoint", "checkpoint_interval", "seed", "reps", "out", "format", "progress",
        )
    }
    if args.checkpoint_basis is not None:
        overrides["checkpoint_basis"] = args.checkpoint_basis == "true"
    return overrides


def run_command(args: argparse.Namespace) -> int:
    config = ExperimentConfig.resolve(args.config, _run_overrides(args))
    out = Path(config.out) if config.out else Path(REPORTS_DIR) / f"{config.config_hash}.{config.format}"
    cli_logger.info("run_started", config_hash=config.config_hash, reps=config.reps, out=str(out))

    report = run_experiment(config)
    emit(report, config.format, out)

    for rep, metrics in enumerate(report.repetitions):
        status = "converged" if metrics.converged else f"aborted ({metrics.error})"
        print(
            f"rep {rep}: {status}, relative residual {metrics.final_relative_residual:.3e}, "
            f"spmv {metrics.spmv_count}, n_extra {metrics.n_extra}"
        )
    print(f"report: {out}")
    return EXIT_OK if report.all_converged else EXIT_ABORTED


def compare_command(args: argparse.Namespace) -> int:
    comparison = compare_runs(
        load_report(args.baseline), load_report(args.se), load_report(args.pf), load_report(args.multi)
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(comparison.to_dict(), f, indent=2)
    for measure, estimate in comparison.estimates.items():
        print(f"{measure}: estimate {estimate.estimate:.6g}, multi {estimate.multi:.6g}, discrepancy {estimate.discrepancy:.6g}")
    print(f"comparison: {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: run or compare")
        runtime_cfg = config_section("runtime")
        level = args.log_level or os.getenv("FTLAB_LOG_LEVEL") or config_section("logging").get("level")
        configure_logging(level, trace=bool(args.trace if args.trace is not None else runtime_cfg.get("trace")))

        if args.command == "run":
            return run_command(args)
        return compare_command(args)
    except (UsageError, ConfigMismatch) as e:
        cli_logger.error("usage_error", error_type=type(e).__name__, error_message=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        cli_logger.error("io_error", error_type=type(e).__name__, error_message=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
