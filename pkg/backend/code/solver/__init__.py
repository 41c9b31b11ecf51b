"""FT-GMRES with selective reliability: unreliable inner solves under a reliable flexible outer iteration."""

from backend.code.solver.config import SolverConfig
from backend.code.solver.detectors import CLEAN, DetectionSite, SdcVerdict, bounded_check, monotonicity_check
from backend.code.solver.ft_gmres import FtGmresSolver, InnerDirective, SolveResult, ft_gmres, sanitize
from backend.code.solver.givens import GivensLSQ, combine
from backend.code.solver.gmres import InnerResult, gmres_inner
from backend.code.solver.operators import Operators
from backend.code.solver.state import DynamicState, StaticState

__all__ = [
    "CLEAN",
    "DetectionSite",
    "DynamicState",
    "FtGmresSolver",
    "GivensLSQ",
    "InnerDirective",
    "InnerResult",
    "Operators",
    "SdcVerdict",
    "SolveResult",
    "SolverConfig",
    "StaticState",
    "bounded_check",
    "combine",
    "ft_gmres",
    "gmres_inner",
    "monotonicity_check",
    "sanitize",
]
