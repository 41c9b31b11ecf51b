"""
Experiment driver.

Each repetition builds a fresh world, arms the repetition's fault plan and
runs FT-GMRES on every rank. Aborts are recorded in the repetition's Metrics
instead of propagating, so one report always covers every repetition.
"""

import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from backend.code.errors import BudgetExhausted, CommError, WorldAborted
from backend.code.faultlab.arm import arm
from backend.code.faultlab.models import FaultPlan
from backend.code.harness.config import ExperimentConfig
from backend.code.harness.metrics import Metrics
from backend.code.harness.report import RunReport
from backend.code.linalg.distributed import dist_frobenius_norm
from backend.code.linalg.kernels import partition_rows
from backend.code.linalg.matrix_market import read_matrix_market
from backend.code.linalg.poisson import build_poisson3d
from backend.code.linalg.types import CsrMatrix, DenseVector, Poisson3DSpec
from backend.code.runtime.context import RankContext
from backend.code.runtime.world import World
from backend.code.solver.config import SolverConfig
from backend.code.solver.ft_gmres import SolveResult, ft_gmres
from backend.code.solver.state import StaticState
from backend.code.structured_logging import PerformanceTimer, harness_logger, start_run_tracking

# Fault-free iteration counts keyed by (problem, world, solver) settings
_reference_iterations: Dict[Tuple, int] = {}


@dataclass
class DistributedSolve:
    """Outcome of one world: the assembled solution and per-rank results."""

    x: Optional[np.ndarray]
    results: List[SolveResult]
    world: World


def build_problem(config: ExperimentConfig) -> Tuple[CsrMatrix, DenseVector]:
    if config.problem == "mm":
        a = read_matrix_market(config.matrix)
        return a, DenseVector(np.ones(a.n_rows))
    return build_poisson3d(Poisson3DSpec(config.nx, config.ny, config.nz))


def build_static(a: CsrMatrix, b: DenseVector, ctx: RankContext) -> StaticState:
    """This rank's rows of A and b; collective for the Frobenius norm."""
    blocks = partition_rows(a.n_rows, ctx.size)
    rows = blocks[ctx.rank]
    a_local = a.row_block(rows)
    b_local = DenseVector(b.values[rows.start : rows.stop], rows.start)
    frob = dist_frobenius_norm(a_local, ctx.comm)
    return StaticState.build(a_local, b_local, frob, [len(block) for block in blocks])


def solve_distributed(
    a: CsrMatrix,
    b: DenseVector,
    n_ranks: int,
    cfg: SolverConfig,
    n_spares: int = 0,
    plan: Optional[FaultPlan] = None,
    metrics: Optional[Metrics] = None,
) -> DistributedSolve:
    """
    Run FT-GMRES on a fresh world of `n_ranks` ranks and `n_spares` spares.

    Raises:
        WorldAborted: a rank raised; the cause is the lowest rank's error
    """

    def program(ctx: RankContext) -> SolveResult:
        static = None if ctx.activated else build_static(a, b, ctx)
        return ft_gmres(static, cfg, ctx, metrics)

    world = World(n_ranks, n_spares=n_spares)
    if plan is not None:
        arm(plan, world)
    results = world.spawn(program)
    x = np.concatenate([result.x.values for result in results])
    return DistributedSolve(x, results, world)


def error_name(error: WorldAborted) -> str:
    """The name recorded in a report for an aborted repetition."""
    cause = error.cause
    if isinstance(cause, CommError):
        return cause.kind.value
    if error.diagnostic == "deadlock":
        return "DeadlockDetected"
    return type(cause).__name__


def reference_iterations(config: ExperimentConfig, a: CsrMatrix, b: DenseVector) -> int:
    """Inner iterations of the fault-free run of this problem and solver; computed once per configuration."""
    key = tuple(config.flat()[k] for k in ("problem", "matrix", "nx", "ny", "nz", "ranks")) + (
        config.solver.model_dump_json(),
    )
    if key not in _reference_iterations:
        metrics = Metrics()
        cfg = config.solver.model_copy(update={"checkpointing": False})
        try:
            solve_distributed(a, b, config.ranks, cfg, metrics=metrics)
        except WorldAborted as e:
            harness_logger.warning("reference_run_aborted", error=error_name(e))
        _reference_iterations[key] = metrics.iterations
    return _reference_iterations[key]


def run_repetition(config: ExperimentConfig, rep: int, a: CsrMatrix, b: DenseVector, reference: int) -> Metrics:
    metrics = Metrics()
    plan = config.fault_plan(rep)
    start_run_tracking(f"{config.config_hash}-{rep}")
    started = time.perf_counter()
    try:
        solve_distributed(a, b, config.ranks, config.solver_config, config.spares, plan, metrics)
    except WorldAborted as e:
        metrics.error = error_name(e)
        metrics.converged = False
        if isinstance(e.cause, BudgetExhausted):
            metrics.final_relative_residual = e.cause.relative_residual
        harness_logger.warning("repetition_aborted", rep=rep, error=metrics.error, rank=e.rank)
    metrics.total_time = time.perf_counter() - started
    metrics.n_extra = metrics.iterations - reference
    return metrics


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run every repetition of `config` sequentially and collect the report."""
    report = RunReport(config=config.flat(), config_hash=config.config_hash)
    with PerformanceTimer(harness_logger, "run_experiment", config_hash=config.config_hash, reps=config.reps):
        a, b = build_problem(config)
        reference = reference_iterations(config, a, b)
        for rep in tqdm(range(config.reps), desc="repetitions", disable=not config.progress):
            report.repetitions.append(run_repetition(config, rep, a, b, reference))
    harness_logger.info(
        "experiment_finished",
        config_hash=config.config_hash,
        converged=sum(m.converged for m in report.repetitions),
        aborted=sum(m.error is not None for m in report.repetitions),
    )
    return report
