"""
Experiment configuration.

A run is described by one flat key-value mapping whose keys are the CLI long
options. Values are resolved from config.yaml defaults, then an optional
experiment file, then command-line flags, and validated into an
ExperimentConfig. The resolved flat mapping is echoed into every report.
"""

from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from backend.code.checkpoint.interval import parse_checkpoint_interval
from backend.code.errors import UsageError
from backend.code.faultlab.models import CorruptionModel, FailureEvent, FaultPlan, parse_failure_list
from backend.code.faultlab.schedule import plan_failures
from backend.code.solver.config import SolverConfig
from backend.code.utils import config_hash, config_section, load_flat_config

# Flat experiment key -> SolverConfig field
SOLVER_KEYS = {
    "inner": "inner_iters",
    "outer": "outer_iters",
    "tol": "tol",
    "detector": "detector",
    "bound_slack": "bound_slack",
    "mono_interval": "mono_interval",
    "checkpoint_basis": "checkpoint_basis",
    "checkpoint_interval": "checkpoint_interval",
    "max_inner_restarts": "max_inner_restarts",
    "inner_early_exit": "inner_early_exit",
    "inner_tol": "inner_tol",
    "breakdown_tol": "breakdown_tol",
}

# Keys two reports must share before their overheads can be compared
PROBLEM_KEYS = ("problem", "matrix", "nx", "ny", "nz", "ranks")

_SEED_MODULUS = 2**64


class ExperimentConfig(BaseModel):
    """One resolved experiment: problem, world shape, solver, fault plan and output."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    problem: Literal["poisson3d", "mm"] = Field(default="poisson3d", description="Problem generator")
    matrix: Optional[str] = Field(default=None, description="Matrix Market file for problem=mm")
    nx: int = Field(default=8, ge=1)
    ny: int = Field(default=8, ge=1)
    nz: int = Field(default=8, ge=1)
    ranks: int = Field(default=4, ge=1, description="Active ranks")
    spares: int = Field(default=0, ge=0, description="Warm spares")
    reps: int = Field(default=5, ge=1, description="Repetitions; repetition i uses seed + i")
    seed: int = Field(default=0, ge=0, lt=_SEED_MODULUS)
    sdc_interval: Optional[int] = Field(default=None, ge=1, description="Inner SpMVs between injections")
    sdc_start: int = Field(default=0, ge=0, description="First inner SpMV index eligible for injection")
    sdc_stop: Optional[int] = Field(default=None, ge=1, description="Inner SpMV index where injection stops")
    sdc_model: str = Field(default="bitflip", description="bitflip[:BIT] or scale:FACTOR")
    failures: str = Field(default="none", description="none, auto:MEAN:COUNT or list:r@k,...")
    checkpoint: Literal["auto", "on", "off"] = Field(default="auto", description="Neighbor checkpointing")
    format: Literal["json", "csv"] = Field(default="json")
    out: Optional[str] = Field(default=None, description="Report path")
    progress: bool = Field(default=False, description="Show a progress bar over repetitions")
    solver: SolverConfig = Field(default_factory=SolverConfig)

    @field_validator("sdc_interval", "sdc_stop", mode="before")
    @classmethod
    def _none_index(cls, value):
        if value is None or str(value).strip().lower() in ("none", ""):
            return None
        return value

    @field_validator("sdc_model")
    @classmethod
    def _valid_model(cls, value: str) -> str:
        return CorruptionModel.parse(value).to_text()

    @field_validator("failures")
    @classmethod
    def _valid_failures(cls, value: str) -> str:
        _parse_failures(value)
        return value.strip()

    @model_validator(mode="after")
    def _check_world(self):
        if self.problem == "mm" and not self.matrix:
            raise ValueError("problem=mm requires a matrix path")
        if self.sdc_stop is not None and self.sdc_stop <= self.sdc_start:
            raise ValueError(f"sdc_stop must exceed sdc_start, got [{self.sdc_start}, {self.sdc_stop})")
        kind, count, events = _parse_failures(self.failures)
        planned = count if kind == "auto" else len(events)
        if self.spares < planned:
            raise ValueError(f"{planned} planned failures need at least as many spares, got {self.spares}")
        for event in events:
            if not event.rank < self.ranks:
                raise ValueError(f"failure names rank {event.rank} but only {self.ranks} ranks are active")
        return self

    @property
    def checkpointing(self) -> bool:
        if self.checkpoint == "auto":
            return self.failures != "none"
        return self.checkpoint == "on"

    @property
    def solver_config(self) -> SolverConfig:
        """The solver settings with checkpointing switched on or off for this experiment."""
        return self.solver.model_copy(update={"checkpointing": self.checkpointing})

    def rep_seed(self, rep: int) -> int:
        return (self.seed + rep) % _SEED_MODULUS

    def fault_plan(self, rep: int) -> FaultPlan:
        """The fault plan of repetition `rep`."""
        seed = self.rep_seed(rep)
        kind, count, events = _parse_failures(self.failures)
        if kind == "auto":
            mean = float(self.failures.split(":")[1])
            events = tuple(plan_failures(mean, count, range(self.ranks), seed))
        return FaultPlan(
            sdc_interval=self.sdc_interval,
            model=CorruptionModel.parse(self.sdc_model),
            failure_events=events,
            seed=seed,
            sdc_start=self.sdc_start,
            sdc_stop=self.sdc_stop,
        )

    def flat(self) -> Dict[str, Any]:
        """The resolved flat mapping; feeding it back through `resolve` yields an equal config."""
        values = self.model_dump(exclude={"solver", "out", "progress"})
        values["sdc_interval"] = "none" if self.sdc_interval is None else self.sdc_interval
        values["sdc_stop"] = "none" if self.sdc_stop is None else self.sdc_stop
        for key, field_name in SOLVER_KEYS.items():
            values[key] = getattr(self.solver, field_name)
        return values

    @property
    def config_hash(self) -> str:
        return config_hash(self.flat())

    @classmethod
    def from_flat(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        unknown = set(values) - set(cls.model_fields) - set(SOLVER_KEYS)
        if unknown:
            raise UsageError(f"unknown experiment keys: {sorted(unknown)}")
        experiment = {k: v for k, v in values.items() if k not in SOLVER_KEYS}
        solver = {SOLVER_KEYS[k]: v for k, v in values.items() if k in SOLVER_KEYS}
        try:
            if solver.get("checkpoint_interval") is not None:
                solver["checkpoint_interval"] = parse_checkpoint_interval(solver["checkpoint_interval"])
            experiment["solver"] = SolverConfig.build(solver)
            return cls(**experiment)
        except ValidationError as e:
            raise UsageError(f"invalid experiment configuration: {e}") from e

    @classmethod
    def resolve(
        cls,
        experiment_file: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "ExperimentConfig":
        """config.yaml defaults < experiment file < overrides (None values are ignored)."""
        values = config_section("experiment")
        if experiment_file is not None:
            try:
                values.update(load_flat_config(experiment_file))
            except FileNotFoundError as e:
                raise UsageError(f"experiment file not found: {experiment_file}") from e
            except ValueError as e:
                raise UsageError(str(e)) from e
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_flat(values)


def _parse_failures(text: str) -> Tuple[str, int, Tuple[FailureEvent, ...]]:
    """
    Returns:
        ("none", 0, ()), ("auto", COUNT, ()) or ("list", n, events)
    """
    text = str(text).strip()
    if text == "none":
        return "none", 0, ()
    kind, _, argument = text.partition(":")
    if kind == "auto":
        mean_text, _, count_text = argument.partition(":")
        try:
            mean, count = float(mean_text), int(count_text)
        except ValueError as e:
            raise UsageError(f"malformed failures '{text}', expected auto:MEAN:COUNT") from e
        if mean <= 0 or count < 0:
            raise UsageError(f"auto failures need MEAN > 0 and COUNT >= 0, got '{text}'")
        return "auto", count, ()
    if kind == "list":
        events = parse_failure_list(argument)
        FaultPlan(failure_events=events)
        return "list", len(events), events
    raise UsageError(f"unknown failures '{text}', expected none, auto:MEAN:COUNT or list:r@k,...")
