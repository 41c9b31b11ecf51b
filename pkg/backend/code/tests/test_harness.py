"""
Tests for the experiment harness: config resolution, metrics recording,
reports, the standalone-vs-combined comparison and the experiment driver.
"""

import json
import math

import pytest

from backend.code.errors import ConfigMismatch, UsageError
from backend.code.harness.compare import compare_runs
from backend.code.harness.config import ExperimentConfig
from backend.code.harness.experiment import run_experiment
from backend.code.harness.metrics import CSV_COLUMNS, Metrics, MetricsRecorder
from backend.code.harness.report import RunReport, emit, load_report, read_csv_rows

SMALL = {"nx": 4, "ny": 4, "nz": 4, "ranks": 2, "inner": 5, "outer": 30, "reps": 2}


def diag_config(matrix, **overrides):
    """diag(1..60) needs enough outer iterations for scheduled failures to fire."""
    values = {"problem": "mm", "matrix": matrix, "ranks": 2, "inner": 5, "outer": 40, "reps": 1}
    values.update(overrides)
    return ExperimentConfig.resolve(None, values)


def make_report(config_hash, spmv_counts, total_times, **config):
    shape = {"problem": "poisson3d", "matrix": None, "nx": 8, "ny": 8, "nz": 8, "ranks": 4}
    shape.update(config)
    repetitions = [
        Metrics(converged=True, spmv_count=spmv, total_time=t, final_relative_residual=1e-9)
        for spmv, t in zip(spmv_counts, total_times)
    ]
    return RunReport(config=shape, config_hash=config_hash, repetitions=repetitions)


class TestExperimentConfig:
    """Layered flat configuration."""

    @pytest.mark.unit
    @pytest.mark.harness
    def test_defaults_from_config_yaml(self):
        config = ExperimentConfig.resolve()
        assert (config.problem, config.nx, config.ranks, config.reps) == ("poisson3d", 8, 4, 5)
        assert config.sdc_interval is None
        assert not config.checkpointing
        assert config.solver.inner_iters == 25
        assert config.fault_plan(0).is_null

    @pytest.mark.unit
    @pytest.mark.harness
    def test_file_then_overrides(self, tmp_path):
        experiment = tmp_path / "exp.yaml"
        experiment.write_text("nx: 5\nseed: 7\ninner: 10\nsdc_interval: 20\n")
        config = ExperimentConfig.resolve(experiment, {"seed": 9, "ny": None, "outer": 12})
        assert (config.nx, config.ny, config.seed) == (5, 8, 9)
        assert (config.solver.inner_iters, config.solver.outer_iters) == (10, 12)
        assert config.sdc_interval == 20

    @pytest.mark.unit
    @pytest.mark.harness
    def test_failures_switch_checkpointing_on(self):
        config = ExperimentConfig.resolve(None, {"failures": "list:1@2,3@4", "spares": 2})
        assert config.checkpointing
        assert config.solver_config.checkpointing
        assert not config.solver.checkpointing
        plan = config.fault_plan(0)
        assert [(e.rank, e.trigger, e.unit) for e in plan.failure_events] == [(1, 2, "outer"), (3, 4, "outer")]
        off = ExperimentConfig.resolve(None, {"failures": "list:1@2", "spares": 1, "checkpoint": "off"})
        assert not off.checkpointing

    @pytest.mark.unit
    @pytest.mark.harness
    def test_auto_failures_are_seeded_per_repetition(self):
        config = ExperimentConfig.resolve(None, {"failures": "auto:40:2", "spares": 2, "seed": 3})
        first, again = config.fault_plan(1), config.fault_plan(1)
        assert first.seed == 4
        assert first.n_failures == 2
        triggers = [(e.rank, e.trigger) for e in first.failure_events]
        assert triggers == [(e.rank, e.trigger) for e in again.failure_events]

    @pytest.mark.unit
    @pytest.mark.harness
    def test_seed_wraps(self):
        config = ExperimentConfig.resolve(None, {"seed": 2**64 - 1})
        assert config.rep_seed(1) == 0

    @pytest.mark.unit
    @pytest.mark.harness
    @pytest.mark.parametrize(
        "overrides",
        [
            {"colour": "blue"},
            {"ranks": 0},
            {"failures": "list:1@2"},
            {"failures": "list:9@2", "spares": 1},
            {"failures": "sometimes"},
            {"problem": "mm"},
            {"sdc_model": "noise"},
            {"inner": 0},
            {"sdc_interval": 5, "sdc_start": 10, "sdc_stop": 10},
            {"sdc_start": -1},
            {"checkpoint_interval": "young:2"},
            {"checkpoint_interval": "daily:3"},
            {"checkpoint_interval": 0},
        ],
    )
    def test_invalid_configs(self, overrides):
        with pytest.raises(UsageError):
            ExperimentConfig.resolve(None, overrides)

    @pytest.mark.unit
    @pytest.mark.harness
    def test_experiment_file_errors(self, tmp_path):
        with pytest.raises(UsageError):
            ExperimentConfig.resolve(tmp_path / "absent.yaml")
        nested = tmp_path / "nested.yaml"
        nested.write_text("solver:\n  inner_iters: 4\n")
        with pytest.raises(UsageError):
            ExperimentConfig.resolve(nested)

    @pytest.mark.unit
    @pytest.mark.harness
    def test_flat_form_replays(self):
        config = ExperimentConfig.resolve(None, {"sdc_model": "scale:1e6", "sdc_interval": 15, "nx": 6})
        flat = config.flat()
        assert flat["sdc_model"] == "scale:1000000.0"
        assert flat["inner"] == 25
        assert "solver" not in flat
        replayed = ExperimentConfig.from_flat(flat)
        assert replayed == config
        assert replayed.config_hash == config.config_hash
        assert ExperimentConfig.resolve(None, {"nx": 7}).config_hash != config.config_hash

    @pytest.mark.unit
    @pytest.mark.harness
    def test_sdc_window_reaches_fault_plan(self):
        config = ExperimentConfig.resolve(None, {"sdc_interval": 5, "sdc_start": 10, "sdc_stop": "30"})
        plan = config.fault_plan(0)
        assert (plan.sdc_interval, plan.sdc_start, plan.sdc_stop) == (5, 10, 30)
        assert config.flat()["sdc_stop"] == 30
        assert ExperimentConfig.from_flat(config.flat()) == config
        assert ExperimentConfig.resolve().fault_plan(0).sdc_stop is None

    @pytest.mark.unit
    @pytest.mark.harness
    @pytest.mark.parametrize("value, expected", [(3, 3), ("4", 4), ("young:2:100", 20), ("young:0:50", 1)])
    def test_checkpoint_interval_forms(self, value, expected):
        config = ExperimentConfig.resolve(None, {"checkpoint_interval": value})
        assert config.solver.checkpoint_interval == expected
        assert config.flat()["checkpoint_interval"] == expected


class TestMetricsRecorder:
    """Only logical rank 0 writes metrics."""

    @pytest.mark.unit
    @pytest.mark.harness
    def test_rank_zero_only(self, mocker):
        metrics = Metrics()
        rank0 = MetricsRecorder(metrics, mocker.Mock(rank=0))
        rank1 = MetricsRecorder(metrics, mocker.Mock(rank=1))
        rank0.count("spmv_count")
        rank1.count("spmv_count")
        rank0.record_checkpoint(128)
        rank1.set("converged", True)
        assert metrics.spmv_count == 1
        assert (metrics.checkpoints_taken, metrics.bytes_checkpointed) == (1, 128)
        assert not metrics.converged
        MetricsRecorder(None, mocker.Mock(rank=0)).count("spmv_count")

    @pytest.mark.unit
    @pytest.mark.harness
    def test_phase_accumulates_time(self, mocker):
        metrics = Metrics()
        recorder = MetricsRecorder(metrics, mocker.Mock(rank=0))
        with recorder.phase("t_check"):
            pass
        with recorder.phase("t_check"), recorder.phase("t_check_dynamic"):
            pass
        assert metrics.t_check >= metrics.t_check_dynamic >= 0.0
        assert 0.0 <= metrics.t_check_dynamic_fraction <= 1.0
        assert Metrics().t_check_dynamic_fraction == 0.0


class TestReports:
    """JSON and CSV reports and their aggregate."""

    @pytest.mark.unit
    @pytest.mark.harness
    def test_aggregate(self):
        report = make_report("abc", [10, 20], [1.0, 3.0])
        report.repetitions[1].final_relative_residual = math.nan
        aggregate = report.aggregate
        assert aggregate["spmv_count"] == {"mean": 15.0, "stddev": 5.0, "cv": pytest.approx(1 / 3)}
        assert aggregate["final_relative_residual"]["mean"] == 1e-9
        assert aggregate["converged"]["mean"] == 1.0
        assert report.all_converged
        assert report.aborted == []

    @pytest.mark.unit
    @pytest.mark.harness
    def test_json_round_trip(self, tmp_path):
        report = make_report("abc", [10, 20], [1.0, 3.0])
        report.repetitions[1].error = "ProcFailed"
        report.repetitions[1].converged = False
        path = emit(report, "json", tmp_path / "nested" / "report.json")
        loaded = load_report(path)
        assert loaded.config_hash == "abc"
        assert [m.spmv_count for m in loaded.repetitions] == [10, 20]
        assert loaded.aborted == [1]
        assert not loaded.all_converged
        data = json.loads(path.read_text())
        assert set(data) == {"config", "config_hash", "repetitions", "aggregate"}

    @pytest.mark.unit
    @pytest.mark.harness
    def test_csv_rows(self, tmp_path):
        report = make_report("abc", [10, 20], [1.0, 3.0])
        path = emit(report, "csv", tmp_path / "report.csv")
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        rows = read_csv_rows(path)
        assert [row["rep"] for row in rows] == [0, 1]
        assert [row["spmv_count"] for row in rows] == [10.0, 20.0]
        assert all(row["converged"] == 1.0 for row in rows)

    @pytest.mark.unit
    @pytest.mark.harness
    def test_report_errors(self, tmp_path):
        with pytest.raises(UsageError):
            emit(make_report("abc", [1], [1.0]), "xml", tmp_path / "r.xml")
        with pytest.raises(UsageError):
            load_report(tmp_path / "absent.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(UsageError):
            load_report(broken)
        partial = tmp_path / "partial.json"
        partial.write_text('{"config": {}}')
        with pytest.raises(UsageError):
            load_report(partial)


class TestCompare:
    """Standalone-versus-combined overhead estimate."""

    @pytest.mark.unit
    @pytest.mark.harness
    def test_additive_estimate(self):
        comparison = compare_runs(
            make_report("base", [100, 100], [1.0, 1.0]),
            make_report("se", [130, 130], [1.5, 1.5]),
            make_report("pf", [120, 120], [1.25, 1.25]),
            make_report("multi", [160, 160], [1.75, 1.75]),
        )
        spmv = comparison.estimates["spmv_count"]
        assert (spmv.baseline, spmv.se_overhead, spmv.pf_overhead) == (100.0, 30.0, 20.0)
        assert spmv.estimate == 150.0
        assert spmv.discrepancy == 10.0
        assert comparison.estimates["total_time"].discrepancy == pytest.approx(0.0)
        data = comparison.to_dict()
        assert data["config_hashes"] == {"baseline": "base", "se": "se", "pf": "pf", "multi": "multi"}
        assert data["estimates"]["spmv_count"]["discrepancy"] == 10.0

    @pytest.mark.unit
    @pytest.mark.harness
    def test_mismatched_problem(self):
        base = make_report("base", [1], [1.0])
        other = make_report("other", [1], [1.0], ranks=8)
        with pytest.raises(ConfigMismatch):
            compare_runs(base, base, other, base)


class TestRunExperiment:
    """End-to-end repetitions through the driver."""

    @pytest.mark.integration
    @pytest.mark.harness
    def test_fault_free_repetitions(self):
        report = run_experiment(ExperimentConfig.resolve(None, SMALL))
        assert len(report.repetitions) == 2
        assert report.all_converged
        assert all(m.n_extra == 0 for m in report.repetitions)
        assert all(m.total_time > 0 for m in report.repetitions)
        assert report.config["nx"] == 4

    @pytest.mark.integration
    @pytest.mark.harness
    def test_failure_is_recovered(self, diag_mtx):
        config = diag_config(diag_mtx, failures="list:1@2", spares=1)
        (metrics,) = run_experiment(config).repetitions
        assert metrics.converged
        assert metrics.error is None
        assert metrics.outer_restarts == 1
        assert metrics.checkpoints_taken > 0
        assert metrics.n_extra >= 0

    @pytest.mark.integration
    @pytest.mark.harness
    def test_aborts_are_recorded(self, diag_mtx):
        config = diag_config(diag_mtx, failures="list:1@2", spares=1, checkpoint="off")
        report = run_experiment(config)
        (metrics,) = report.repetitions
        assert not metrics.converged
        assert metrics.error in ("ProcFailed", "Revoked")
        assert report.aborted == [0]

    @pytest.mark.integration
    @pytest.mark.harness
    def test_budget_exhaustion_keeps_residual(self):
        config = ExperimentConfig.resolve(None, {**SMALL, "reps": 1, "inner": 1, "outer": 1, "tol": 1e-14})
        (metrics,) = run_experiment(config).repetitions
        assert metrics.error == "BudgetExhausted"
        assert 0 < metrics.final_relative_residual < 1
