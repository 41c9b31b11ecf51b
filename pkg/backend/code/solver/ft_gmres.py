"""
FT-GMRES: a reliable flexible outer GMRES preconditioned by unreliable inner
GMRES solves.

SDC is handled inside the outer iteration: a detection rolls the inner solve
back to its snapshot and restarts it. A process failure unwinds the whole
outer iteration: the communicator is repaired with spares and every rank
rolls its dynamic state back to the latest agreed checkpoint.
"""

from contextlib import nullcontext
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import Iterable, Optional, Tuple

import numpy as np

from backend.code.checkpoint.snapshot import SnapshotKeeper, SnapshotToken
from backend.code.checkpoint.store import CheckpointStore
from backend.code.errors import BudgetExhausted, CommError, SdcDetected
from backend.code.faultlab.injector import SdcInjector
from backend.code.harness.metrics import Metrics, MetricsRecorder
from backend.code.linalg.types import DenseVector, as_array
from backend.code.runtime.context import RankContext
from backend.code.solver.config import SolverConfig
from backend.code.solver.gmres import gmres_inner
from backend.code.solver.givens import GivensLSQ, combine
from backend.code.solver.operators import Operators
from backend.code.solver.state import DynamicState, StaticState
from backend.code.structured_logging import PerformanceTimer, solver_logger


@dataclass
class SolveResult:
    x: DenseVector
    converged: bool
    relative_residual: float
    outer_iterations: int


class InnerDirective(str, Enum):
    RESTART = "restart"
    ABANDON = "abandon"


@dataclass
class InnerEntry:
    """What an inner solve starts from; the SDC snapshot holds a copy."""

    rhs: np.ndarray
    x0: np.ndarray


def sanitize(v) -> Tuple[object, int]:
    """Replace every NaN and +-Inf with 0.0; returns the cleaned copy and how many were replaced."""
    values = np.array(as_array(v), dtype=np.float64, copy=True)
    bad = ~np.isfinite(values)
    count = int(bad.sum())
    values[bad] = 0.0
    if isinstance(v, DenseVector):
        return DenseVector(values, v.global_offset), count
    return values, count


class FtGmresSolver:
    """
    One rank's share of an FT-GMRES solve.

    Active ranks are constructed with their static state; an activated spare
    is constructed without one and receives it from its holder on `run`.
    """

    def __init__(
        self,
        ctx: RankContext,
        cfg: SolverConfig,
        static: Optional[StaticState] = None,
        metrics: Optional[Metrics] = None,
    ):
        self.ctx = ctx
        self.cfg = cfg
        self.static = static
        self.recorder = MetricsRecorder(metrics, ctx)
        self.store = CheckpointStore()
        self.keeper = SnapshotKeeper()
        self.ops: Optional[Operators] = None
        self.injector: Optional[SdcInjector] = None
        self.state: Optional[DynamicState] = None
        self.lsq: Optional[GivensLSQ] = None
        self.spmv_mark = 0
        self.recompute_until = 0

    # ---- driver --------------------------------------------------------

    def run(self) -> SolveResult:
        with PerformanceTimer(solver_logger, "ft_gmres", rank=self.ctx.rank, activated=self.ctx.activated):
            if self.ctx.activated:
                self._until_stable(partial(self._restore, self.ctx.comm.substituted))
            else:
                self._setup()
            while True:
                try:
                    return self._outer_loop()
                except CommError as error:
                    if not self.cfg.checkpointing:
                        raise
                    self._until_stable(partial(self.recover_failure, error))

    def _until_stable(self, step) -> None:
        """Run a recovery step, starting over with a fresh repair whenever it observes another failure."""
        while True:
            try:
                step()
                return
            except CommError as error:
                solver_logger.warning("failure_during_recovery", error=str(error))
                step = partial(self.recover_failure, error)

    def _bind(self, static: StaticState) -> None:
        self.static = static
        plan = self.ctx.plan
        if plan is not None and plan.sdc_interval:
            self.injector = SdcInjector(plan, static.block_sizes)
        self.ops = Operators(self.ctx, static, self.recorder, self.injector)

    def _setup(self) -> None:
        self._bind(self.static)
        if self.cfg.checkpointing:
            with self.recorder.phase("t_check"):
                self.store.store_static(self.ctx.comm, self.static.to_payload(), self.recorder)
        self._initial_state()
        self.spmv_mark = self.ctx.clock.spmv

    def _initial_state(self) -> None:
        b = as_array(self.static.b_local)
        b_norm = self.ops.norm(b)
        self.state = DynamicState(x0_local=np.zeros_like(b), k=0, cycle_start=0, V=[], b_norm=b_norm)
        self._start_cycle(np.zeros_like(b), b, b_norm)

    def _start_cycle(self, x: np.ndarray, r: np.ndarray, r_norm: float) -> None:
        state = self.state
        state.x0_local = x
        state.cycle_start = state.k
        state.beta = r_norm
        state.V = [r / r_norm] if r_norm > 0 else []
        state.Z = []
        state.H = []
        self.lsq = GivensLSQ(r_norm)
        if state.k > 0:
            solver_logger.debug("outer_cycle_started", k=state.k, residual=r_norm)

    def _restart_from(self, x: np.ndarray) -> None:
        r = self.ops.residual(x)
        self._start_cycle(x, r, self.ops.norm(r))

    def _current_x(self) -> np.ndarray:
        state = self.state
        return state.x0_local + combine(state.Z, self.lsq.solve(), state.x0_local.shape[0])

    # ---- outer iteration ----------------------------------------------

    def _outer_loop(self) -> SolveResult:
        if self.state.b_norm == 0.0:
            return self._finish(SolveResult(self._as_vector(self._current_x()), True, 0.0, self.state.k))
        while self.state.k < self.cfg.outer_iters:
            recomputing = self.state.k < self.recompute_until
            self.recorder.recomputing = recomputing
            with self.recorder.phase("t_recompute") if recomputing else nullcontext():
                outcome = self._outer_iteration()
            if outcome is not None:
                return self._finish(outcome)
        self.recorder.recomputing = False
        x = self._current_x()
        relative = self.ops.norm(self.ops.residual(x)) / self.state.b_norm
        self._finish(SolveResult(self._as_vector(x), False, relative, self.state.k))
        raise BudgetExhausted(self.state.k, relative)

    def _outer_iteration(self) -> Optional[SolveResult]:
        ctx, cfg, state, ops = self.ctx, self.cfg, self.state, self.ops
        ctx.clock.outer = state.k
        ctx.comm.barrier()

        j = state.cycle_length
        z = self._inner_solve(state.V[j])
        z, replaced = sanitize(z)
        if replaced:
            self.recorder.count("sanitized_values", replaced)
            solver_logger.debug("inner_solution_sanitized", k=state.k, replaced=replaced)

        w = ops.reliable_spmv(z)
        column = []
        for i in range(j + 1):
            h_ij = ops.dot(w, state.V[i])
            w = w - h_ij * state.V[i]
            column.append(h_ij)
        h_next = ops.norm(w)
        column.append(h_next)

        state.Z.append(z)
        state.H.append(np.array(column))
        estimate = self.lsq.add_column(column)
        breakdown = h_next <= cfg.breakdown_tol * max(abs(h) for h in column)
        if not breakdown:
            state.V.append(w / h_next)
        state.k += 1
        self.recorder.count("outer_iterations")
        solver_logger.debug("outer_iteration", k=state.k, estimate=estimate / state.b_norm, breakdown=breakdown)

        outcome = None
        if estimate <= cfg.tol * state.b_norm or breakdown:
            x = self._current_x()
            r = ops.residual(x)
            r_norm = ops.norm(r)
            relative = r_norm / state.b_norm
            if relative <= cfg.tol:
                outcome = SolveResult(self._as_vector(x), True, relative, state.k)
            else:
                self._start_cycle(x, r, r_norm)

        if cfg.checkpointing and (
            state.k % cfg.checkpoint_interval == 0 or outcome is not None or state.k == cfg.outer_iters
        ):
            self._checkpoint()
        return outcome

    def _checkpoint(self) -> None:
        with self.recorder.phase("t_check"), self.recorder.phase("t_check_dynamic"):
            payload = self.state.to_payload(self._current_x(), self.cfg.checkpoint_basis)
            self.store.store_dynamic(self.ctx.comm, payload, self.state.k, self.recorder)
        self.spmv_mark = self.ctx.clock.spmv

    def _finish(self, outcome: SolveResult) -> SolveResult:
        self.recorder.set("converged", outcome.converged)
        self.recorder.set("final_relative_residual", outcome.relative_residual)
        solver_logger.info(
            "ft_gmres_finished",
            converged=outcome.converged,
            relative_residual=outcome.relative_residual,
            outer_iterations=outcome.outer_iterations,
        )
        return outcome

    def _as_vector(self, x: np.ndarray) -> DenseVector:
        return DenseVector(x, self.static.b_local.global_offset)

    # ---- SDC path ------------------------------------------------------

    def _inner_solve(self, v: np.ndarray) -> np.ndarray:
        token = self.keeper.local_snapshot(InnerEntry(rhs=v, x0=self.state.x0_local))
        entry = InnerEntry(rhs=v, x0=self.state.x0_local)
        restarts = 0
        try:
            while True:
                try:
                    with self.injector.inner_phase() if self.injector is not None else nullcontext():
                        z = gmres_inner(self.static, entry.rhs, self.cfg, self.ops, self.recorder).z
                    break
                except SdcDetected as detection:
                    latency = self._detection_latency()
                    solver_logger.info(
                        "sdc_detected",
                        k=self.state.k,
                        step=detection.step,
                        latency=latency,
                        detail=detection.verdict.detail,
                    )
                    directive, entry = self.recover_sdc(token, restarts)
                    if directive is InnerDirective.ABANDON:
                        z = detection.partial
                        break
                    restarts += 1
        except BaseException:
            self.keeper.discard()
            raise
        self.keeper.commit(token)
        return z

    def _detection_latency(self) -> Optional[int]:
        """Inner SpMVs between the pending injection and this detection; None when nothing was injected."""
        injection = self.injector.claim() if self.injector is not None else None
        if injection is None:
            return None
        latency = self.ctx.clock.inner_spmv - injection.index
        self.recorder.maximum("sdc_detection_latency", latency)
        return latency

    def recover_sdc(self, token: SnapshotToken, restarts_so_far: int) -> Tuple[InnerDirective, InnerEntry]:
        """
        Roll the inner solve back to its snapshot.

        Returns RESTART while the restart budget lasts, then ABANDON so the
        outer iteration proceeds with the partial inner solution.

        Raises:
            UsageError: the token was already committed
            CommError: the consensus agree saw a failed rank
        """
        with self.recorder.phase("t_sdc_r"):
            self.recorder.count("sdc_detected")
            entry = self.keeper.local_rollback(token)
            agreement = self.ctx.comm.agree(True)
            if agreement.failed:
                raise CommError.proc_failed_error(agreement.failed)
            if restarts_so_far >= self.cfg.max_inner_restarts:
                self.recorder.count("inner_abandoned")
                solver_logger.warning("inner_solve_abandoned", k=self.state.k, restarts=restarts_so_far)
                return InnerDirective.ABANDON, entry
            self.recorder.count("inner_restarts")
            return InnerDirective.RESTART, entry

    # ---- process-failure path -----------------------------------------

    def recover_failure(self, error: CommError) -> None:
        """
        Repair the communicator and roll every rank back to the latest agreed checkpoint.

        Raises:
            InsufficientSpares: propagated from the repair
            HolderDead: propagated from the restore
        """
        with self.recorder.phase("t_pf_x"):
            self.keeper.discard()
            comm = self.ctx.comm
            comm.revoke()
            comm.agree(True)
            self.ctx.comm = comm.shrink_and_substitute()
        solver_logger.info(
            "communicator_repaired",
            epoch=self.ctx.comm.epoch,
            substituted=sorted(self.ctx.comm.substituted),
            cause=str(error),
        )
        self._restore(self.ctx.comm.substituted)

    def _restore(self, failed: Iterable[int]) -> None:
        ctx, recorder = self.ctx, self.recorder
        clock = ctx.clock
        with recorder.phase("t_pf_r"):
            result = self.store.fetch_for_restore(ctx.comm, failed)
            if result.fresh:
                self._bind(StaticState.from_payload(result.static_payload))
                progress = [-1, -1, -1, -1]
            else:
                progress = [self.state.k, clock.spmv, clock.inner_spmv, clock.spmv - self.spmv_mark]
            k_fail, spmv_clock, inner_clock, lost = (
                int(v) for v in ctx.comm.allreduce(np.array(progress, dtype=np.int64), "max")
            )
            clock.spmv, clock.inner_spmv = spmv_clock, inner_clock

            if result.dynamic_payload is None:
                self._initial_state()
            else:
                self.state = DynamicState.from_payload(result.dynamic_payload)
                if self.state.V:
                    self.lsq = GivensLSQ.from_columns(self.state.beta, self.state.H)
                else:
                    self._restart_from(self.state.x_local)
            self.spmv_mark = clock.spmv

        recorder.count("outer_restarts")
        recorder.add("outer_recomputed", k_fail - result.epoch)
        recorder.add("spmv_recomputed", lost)
        self.recompute_until = max(self.recompute_until, k_fail)
        solver_logger.info("state_restored", epoch=result.epoch, failed_at=k_fail, fresh=result.fresh)


def ft_gmres(
    static: Optional[StaticState],
    cfg: SolverConfig,
    ctx: RankContext,
    metrics: Optional[Metrics] = None,
) -> SolveResult:
    """
    Solve A x = b on this rank's communicator.

    Raises:
        BudgetExhausted: no convergence within cfg.outer_iters outer iterations
        InsufficientSpares, HolderDead: a failure could not be serviced
    """
    return FtGmresSolver(ctx, cfg, static=static, metrics=metrics).run()
