"""
End-to-end acceptance runs on the 8x8x8 Poisson problem: accuracy against a
dense solve, detector soundness and cost, recovery from one to four failures,
checkpoint bookkeeping, determinism and the overhead comparison.

These drive whole worlds and take a while; run them with `-m acceptance`.
"""

import numpy as np
import pytest

from backend.code.errors import BudgetExhausted, HolderDead, WorldAborted
from backend.code.faultlab import CorruptionModel, FaultPlan, parse_failure_list
from backend.code.harness.compare import compare_runs
from backend.code.harness.config import ExperimentConfig
from backend.code.harness.experiment import run_experiment, solve_distributed
from backend.code.harness.metrics import Metrics
from backend.code.harness.report import emit, read_csv_rows
from backend.code.linalg.types import CsrMatrix, DenseVector
from backend.code.solver import SolverConfig

BUDGET = {"inner_iters": 25, "outer_iters": 20, "tol": 1e-8}
TIME_COLUMNS = {
    "t_sdc_d",
    "t_sdc_r",
    "t_pf_x",
    "t_pf_r",
    "t_check",
    "t_check_dynamic_fraction",
    "t_recompute",
    "total_time",
}


def recovery_cfg(**overrides):
    values = {"inner_iters": 5, "outer_iters": 40, "tol": 1e-8, "checkpointing": True}
    values.update(overrides)
    return SolverConfig(**values)


@pytest.mark.acceptance
@pytest.mark.slow
class TestFaultFree:
    """Fault-free accuracy and detector soundness."""

    def test_matches_dense_solve(self, poisson_8cube):
        a, b = poisson_8cube
        metrics = Metrics()
        solve = solve_distributed(a, b, 4, SolverConfig(**BUDGET), metrics=metrics)
        assert solve.results[0].converged
        assert solve.results[0].relative_residual <= 1e-8
        oracle = np.linalg.solve(a.to_dense(), b.values)
        assert np.linalg.norm(solve.x - oracle) / np.linalg.norm(oracle) <= 1e-6
        assert metrics.sdc_detected == 0

    def test_no_false_positives(self):
        config = ExperimentConfig.resolve(None, {"nx": 4, "ny": 4, "nz": 4, "reps": 20})
        report = run_experiment(config)
        assert report.all_converged
        assert sum(m.sdc_detected for m in report.repetitions) == 0
        assert all(m.n_extra == 0 for m in report.repetitions)

    def test_monotonicity_cost_is_exact(self):
        # diag(1..100) never breaks down inside a 25-step inner solve
        a = CsrMatrix.from_dense(np.diag(np.arange(1.0, 101.0)))
        b = DenseVector(np.ones(100))
        bounded, monotone = Metrics(), Metrics()
        solve_distributed(a, b, 4, SolverConfig(**BUDGET, detector="bounded"), metrics=bounded)
        solve_distributed(a, b, 4, SolverConfig(**BUDGET, detector="monotonicity", mono_interval=5), metrics=monotone)
        assert bounded.converged and monotone.converged
        assert monotone.inner_solves == bounded.inner_solves
        assert monotone.spmv_count - bounded.spmv_count == bounded.inner_solves * 5


@pytest.mark.acceptance
@pytest.mark.slow
class TestSdcResilience:
    """Injected silent data corruption."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_scaled_values_are_detected_in_the_same_step(self, poisson_generic, seed):
        a, b = poisson_generic
        metrics = Metrics()
        plan = FaultPlan(sdc_interval=20, model=CorruptionModel.parse("scale:1e6"), seed=seed)
        try:
            solve_distributed(a, b, 4, SolverConfig(**BUDGET), plan=plan, metrics=metrics)
        except WorldAborted as e:
            assert isinstance(e.cause, BudgetExhausted)
        assert metrics.sdc_injected == metrics.inner_spmv_count // 20 > 0
        assert metrics.sdc_detected == metrics.sdc_injected
        # the bounded check runs on the Hessenberg column of the corrupted product
        assert metrics.sdc_detection_latency == 0

    def test_bit_flips_mostly_converge_and_extra_work_tracks_rate(self):
        mean_extra = {}
        for interval in (30, 20, 10):
            config = ExperimentConfig.resolve(None, {"sdc_interval": interval, "sdc_model": "bitflip", "reps": 10})
            repetitions = run_experiment(config).repetitions
            assert sum(m.converged for m in repetitions) >= 9
            for metrics in repetitions:
                assert metrics.converged or metrics.error == "BudgetExhausted"
                assert metrics.sdc_detected <= metrics.sdc_injected
                assert metrics.n_extra >= 0
            mean_extra[interval] = np.mean([m.n_extra for m in repetitions])
        assert mean_extra[30] <= mean_extra[20] <= mean_extra[10]


@pytest.mark.acceptance
@pytest.mark.slow
class TestFailureResilience:
    """Scripted process failures with warm spares."""

    @pytest.mark.parametrize("count", [1, 2, 3, 4])
    def test_failures_with_equal_spares(self, poisson_generic, count):
        a, b = poisson_generic
        text = ",".join(f"{rank}@{rank + 1}" for rank in range(count))
        metrics = Metrics()
        plan = FaultPlan(failure_events=parse_failure_list(text))
        solve = solve_distributed(a, b, 4, recovery_cfg(), n_spares=count, plan=plan, metrics=metrics)
        assert solve.world.epochs == list(range(count + 1))
        assert len(solve.results) == 4
        assert all(result.converged for result in solve.results)
        assert solve.results[0].relative_residual <= 1e-8
        assert metrics.outer_restarts == count

    @pytest.mark.parametrize("interval, failed_at", [(1, 4), (2, 3), (3, 4), (3, 5)])
    def test_recomputed_iterations(self, poisson_generic, interval, failed_at):
        a, b = poisson_generic
        metrics = Metrics()
        plan = FaultPlan(failure_events=parse_failure_list(f"2@{failed_at}"))
        solve_distributed(a, b, 4, recovery_cfg(checkpoint_interval=interval), n_spares=1, plan=plan, metrics=metrics)
        assert metrics.outer_recomputed == failed_at - (failed_at // interval) * interval
        assert metrics.converged

    def test_checkpoint_per_outer_iteration(self, poisson_generic):
        a, b = poisson_generic
        metrics = Metrics()
        solve_distributed(a, b, 4, recovery_cfg(), metrics=metrics)
        # one static checkpoint plus one dynamic per outer iteration
        assert metrics.checkpoints_taken == metrics.outer_iterations + 1
        assert metrics.bytes_checkpointed > 0

    def test_neighboring_failures_report_holder_dead(self, poisson_generic):
        a, b = poisson_generic
        plan = FaultPlan(failure_events=parse_failure_list("1@2,2@2"))
        with pytest.raises(WorldAborted) as info:
            solve_distributed(a, b, 4, recovery_cfg(), n_spares=2, plan=plan)
        assert isinstance(info.value.cause, HolderDead)
        assert (info.value.cause.owner, info.value.cause.holder) == (1, 2)


@pytest.mark.acceptance
@pytest.mark.slow
class TestExperiments:
    """Reports, determinism and the overhead comparison through the harness."""

    def test_counters_are_deterministic(self, tmp_path, diag_mtx):
        values = {
            "problem": "mm",
            "matrix": diag_mtx,
            "ranks": 2,
            "inner": 5,
            "outer": 40,
            "reps": 2,
            "sdc_interval": 7,
            "failures": "list:1@3",
            "spares": 1,
            "seed": 11,
        }
        config = ExperimentConfig.resolve(None, values)
        rows = []
        for name in ("first.csv", "second.csv"):
            path = emit(run_experiment(config), "csv", tmp_path / name)
            rows.append([{k: v for k, v in row.items() if k not in TIME_COLUMNS} for row in read_csv_rows(path)])
        assert rows[0] == rows[1]

    def test_holder_dead_is_recorded(self, diag_mtx):
        values = {"problem": "mm", "matrix": diag_mtx, "ranks": 4, "inner": 5, "outer": 40, "reps": 1}
        config = ExperimentConfig.resolve(None, {**values, "failures": "list:1@2,2@2", "spares": 2})
        (metrics,) = run_experiment(config).repetitions
        assert not metrics.converged
        assert metrics.error == "HolderDead"

    @staticmethod
    def _four_runs(diag_mtx, window):
        # checkpoints at k = 2, 4, ...; rank 1 dies entering k = 3, so k = 2 (inner SpMVs 11..15) is recomputed
        shape = {"problem": "mm", "matrix": diag_mtx, "ranks": 2, "inner": 5, "outer": 40, "reps": 2}
        shape["checkpoint_interval"] = 2
        sdc = {"sdc_interval": window[0], "sdc_start": window[1], "sdc_stop": window[2], "sdc_model": "scale:1e6"}
        failure = {"failures": "list:1@3", "spares": 1}
        configs = (shape, {**shape, **sdc}, {**shape, **failure}, {**shape, **sdc, **failure})
        return [run_experiment(ExperimentConfig.resolve(None, values)) for values in configs]

    def test_injection_before_failure_is_not_replayed(self, diag_mtx):
        baseline, se_only, pf_only, multi = self._four_runs(diag_mtx, (12, 11, 16))
        for base, se, pf, both in zip(baseline.repetitions, se_only.repetitions, pf_only.repetitions, multi.repetitions):
            assert both.converged
            assert (both.outer_restarts, both.outer_recomputed) == (1, 1)
            # the restarted inner solve is lost with k = 2, and the recompute runs past the window
            assert both.sdc_injected == both.sdc_detected == se.sdc_detected == 1
            assert pf.spmv_count - base.spmv_count == pf.spmv_recomputed
            assert both.spmv_recomputed - pf.spmv_recomputed == se.spmv_count - base.spmv_count > 0
        spmv = compare_runs(baseline, se_only, pf_only, multi).estimates["spmv_count"]
        assert spmv.discrepancy == 0.0

    def test_injection_after_recovery_composes_additively(self, diag_mtx):
        baseline, se_only, pf_only, multi = self._four_runs(diag_mtx, (23, 21, 24))
        for se, pf, both in zip(se_only.repetitions, pf_only.repetitions, multi.repetitions):
            assert both.converged
            assert (both.outer_restarts, both.outer_recomputed) == (1, 1)
            assert both.sdc_injected == both.sdc_detected == se.sdc_detected == 1
            assert both.spmv_recomputed == pf.spmv_recomputed
        spmv = compare_runs(baseline, se_only, pf_only, multi).estimates["spmv_count"]
        assert spmv.pf_overhead == pf_only.repetitions[0].spmv_recomputed
        assert spmv.discrepancy == 0.0
