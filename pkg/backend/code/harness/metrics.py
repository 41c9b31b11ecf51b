"""
Per-run overhead decomposition.

Counters are deterministic for a given (config, seed, plan). Times are
informational. Only logical rank 0 records, through a MetricsRecorder, so
the figures describe one rank's view of the SPMD run.
"""

import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

TIME_FIELDS = (
    "t_sdc_d",
    "t_sdc_r",
    "t_pf_x",
    "t_pf_r",
    "t_check",
    "t_check_dynamic",
    "t_recompute",
    "total_time",
)

COUNTER_FIELDS = (
    "converged",
    "final_relative_residual",
    "spmv_count",
    "n_extra",
    "sdc_injected",
    "sdc_detected",
    "sdc_detection_latency",
    "inner_restarts",
    "outer_restarts",
    "checkpoints_taken",
    "bytes_checkpointed",
    "iterations",
    "inner_solves",
    "inner_spmv_count",
    "outer_iterations",
    "outer_recomputed",
    "spmv_recomputed",
    "sanitized_values",
    "inner_abandoned",
)

CSV_COLUMNS = (
    "config_hash",
    "rep",
    "converged",
    "final_relative_residual",
    "spmv_count",
    "n_extra",
    "sdc_injected",
    "sdc_detected",
    "inner_restarts",
    "outer_restarts",
    "checkpoints_taken",
    "bytes_checkpointed",
    "t_sdc_d",
    "t_sdc_r",
    "t_pf_x",
    "t_pf_r",
    "t_check",
    "t_check_dynamic_fraction",
    "t_recompute",
    "total_time",
)


@dataclass
class Metrics:
    # SDC resilience
    t_sdc_d: float = 0.0
    t_sdc_r: float = 0.0
    n_extra: int = 0
    sdc_detected: int = 0
    sdc_injected: int = 0
    # largest inner-SpMV gap between an injection and its detection
    sdc_detection_latency: int = 0
    inner_restarts: int = 0
    inner_abandoned: int = 0
    sanitized_values: int = 0
    # process-failure resilience
    t_pf_x: float = 0.0
    t_pf_r: float = 0.0
    t_check: float = 0.0
    t_check_dynamic: float = 0.0
    t_recompute: float = 0.0
    checkpoints_taken: int = 0
    bytes_checkpointed: int = 0
    outer_restarts: int = 0
    outer_recomputed: int = 0
    spmv_recomputed: int = 0
    # solver progress
    spmv_count: int = 0
    inner_spmv_count: int = 0
    iterations: int = 0
    inner_solves: int = 0
    outer_iterations: int = 0
    total_time: float = 0.0
    converged: bool = False
    final_relative_residual: float = float("nan")
    error: Optional[str] = None

    @property
    def t_check_dynamic_fraction(self) -> float:
        return self.t_check_dynamic / self.t_check if self.t_check > 0 else 0.0

    def counters(self) -> dict:
        return {name: getattr(self, name) for name in COUNTER_FIELDS}

    def to_dict(self) -> dict:
        data = asdict(self)
        data["t_check_dynamic_fraction"] = self.t_check_dynamic_fraction
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Metrics":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


class PhaseTimer:
    """Adds the elapsed wall time of a block to one Metrics field."""

    def __init__(self, recorder: "MetricsRecorder", field_name: str):
        self.recorder = recorder
        self.field_name = field_name
        self.start_time = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self.start_time
        self.recorder.add(self.field_name, self.elapsed)


class MetricsRecorder:
    """Writes to a shared Metrics only on behalf of logical rank 0."""

    def __init__(self, metrics: Optional[Metrics], ctx):
        self.metrics = metrics
        self.ctx = ctx
        self.recomputing = False

    @property
    def active(self) -> bool:
        return self.metrics is not None and self.ctx.rank == 0

    def add(self, field_name: str, value) -> None:
        if self.active:
            setattr(self.metrics, field_name, getattr(self.metrics, field_name) + value)

    def count(self, field_name: str, n: int = 1) -> None:
        self.add(field_name, n)

    def set(self, field_name: str, value) -> None:
        if self.active:
            setattr(self.metrics, field_name, value)

    def maximum(self, field_name: str, value) -> None:
        if self.active:
            setattr(self.metrics, field_name, max(getattr(self.metrics, field_name), value))

    def phase(self, field_name: str) -> PhaseTimer:
        return PhaseTimer(self, field_name)

    def record_checkpoint(self, nbytes: int) -> None:
        self.count("checkpoints_taken")
        self.add("bytes_checkpointed", nbytes)
