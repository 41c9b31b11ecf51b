from typing import Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from backend.code.errors import UsageError
from backend.code.utils import config_section

DetectorName = Literal["none", "bounded", "monotonicity"]


class SolverConfig(BaseModel):
    """Inner/outer control of FT-GMRES."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    inner_iters: int = Field(default=25, ge=1, description="Arnoldi steps per inner solve")
    outer_iters: int = Field(default=20, ge=1, description="Flexible outer iterations")
    tol: float = Field(default=1e-8, gt=0, description="Relative residual target")
    detector: DetectorName = Field(default="bounded", description="SDC detector on the inner solve")
    bound_slack: float = Field(default=1.0 + 1e-6, ge=1.0, description="Multiplier on the Frobenius bound")
    mono_interval: int = Field(default=5, ge=1, description="Inner steps between explicit residual checks")
    checkpointing: bool = Field(default=False, description="Neighbor checkpoints and failure recovery")
    checkpoint_basis: bool = Field(default=True, description="Dynamic checkpoints carry V, Z and H, not only x")
    checkpoint_interval: int = Field(default=1, ge=1, description="Outer iterations between dynamic checkpoints")
    max_inner_restarts: int = Field(default=3, ge=0, description="SDC restarts of one inner solve before abandoning")
    inner_early_exit: bool = Field(default=False, description="Stop the inner solve once inner_tol is met")
    inner_tol: float = Field(default=0.0, ge=0.0, description="Relative inner residual for early exit")
    breakdown_tol: float = Field(default=1e-12, ge=0.0, description="Relative subdiagonal size treated as breakdown")

    @model_validator(mode="after")
    def _check_early_exit(self):
        if self.inner_early_exit and self.inner_tol <= 0:
            raise ValueError("inner_early_exit requires inner_tol > 0")
        return self

    @property
    def iteration_budget(self) -> int:
        return self.inner_iters * self.outer_iters

    @classmethod
    def build(cls, overrides: Mapping[str, Any] = None) -> "SolverConfig":
        """config.yaml `solver` defaults updated with `overrides`; UsageError on invalid values."""
        values = config_section("solver")
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise UsageError(f"invalid solver configuration: {e}") from e
