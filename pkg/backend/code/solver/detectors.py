"""
Algorithm-level SDC detectors for the inner solve.

The bounded check costs nothing extra: the Arnoldi projections are already
replicated after their allreduce, and no projection of a unit vector onto an
orthonormal basis can exceed ||A||_2 <= ||A||_F. The monotonicity check pays
one SpMV per call for an explicit residual.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Tuple

from backend.code.errors import UsageError
from backend.code.linalg.distributed import dist_norm2, dist_spmv
from backend.code.linalg.types import as_array

MONOTONICITY_SLACK = 1e-10


class DetectionSite(str, Enum):
    PROJECTION = "projection"
    RESIDUAL = "residual"


@dataclass(frozen=True)
class SdcVerdict:
    detected: bool
    site: Optional[DetectionSite] = None
    detail: str = ""

    def __post_init__(self):
        if self.detected and not (self.site and self.detail):
            raise UsageError("a positive verdict must name its site and detail")

    def __bool__(self) -> bool:
        return self.detected


CLEAN = SdcVerdict(False)


def bounded_check(h_entries: Iterable[float], frob_norm: float, slack: float = 1.0 + 1e-6) -> SdcVerdict:
    """Flag any projection whose magnitude exceeds frob_norm * slack, or is not finite."""
    if frob_norm <= 0:
        raise UsageError(f"frob_norm must be positive, got {frob_norm}")
    bound = frob_norm * slack
    for i, h in enumerate(h_entries):
        h = float(h)
        if not math.isfinite(h) or abs(h) > bound:
            return SdcVerdict(
                True, DetectionSite.PROJECTION, f"|h[{i}]| = {abs(h):.6e} exceeds bound {bound:.6e}"
            )
    return CLEAN


def monotonicity_check(
    static,
    x_current,
    prev_explicit_residual: Optional[float],
    comm,
    rhs=None,
    spmv: Optional[Callable] = None,
    floor: float = 0.0,
) -> Tuple[SdcVerdict, float]:
    """
    Explicit residual ||rhs - A x|| compared with the previous one.

    `rhs` defaults to b; `spmv` defaults to a plain dist_spmv with the local
    rows of A. Growth below `floor` is ignored.

    Returns:
        (verdict, residual norm to pass as the next prev_explicit_residual)
    """
    rhs_values = as_array(static.b_local if rhs is None else rhs)
    ax = spmv(x_current) if spmv is not None else dist_spmv(static.a_local, x_current, comm)
    residual = dist_norm2(rhs_values - as_array(ax), comm)
    if not math.isfinite(residual):
        return SdcVerdict(True, DetectionSite.RESIDUAL, f"explicit residual is {residual}"), residual
    if prev_explicit_residual is None:
        return CLEAN, residual
    limit = prev_explicit_residual * (1.0 + MONOTONICITY_SLACK)
    if residual > limit and residual > floor:
        return (
            SdcVerdict(
                True,
                DetectionSite.RESIDUAL,
                f"explicit residual {residual:.6e} grew past {prev_explicit_residual:.6e}",
            ),
            residual,
        )
    return CLEAN, residual
