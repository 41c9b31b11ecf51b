"""
Unreliable inner GMRES.

Arnoldi with modified Gram-Schmidt and Givens rotations, started from z = 0.
Every product goes through the hooked inner SpMV, so this is the only place
injected corruption can reach. The solve always returns an answer in finite
time; the configured detector may instead raise SdcDetected.
"""

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from backend.code.errors import SdcDetected
from backend.code.linalg.types import as_array
from backend.code.solver.config import SolverConfig
from backend.code.solver.detectors import bounded_check, monotonicity_check
from backend.code.solver.givens import GivensLSQ, combine
from backend.code.structured_logging import solver_logger

# Explicit-residual growth below this fraction of ||rhs|| is rounding noise
MONOTONICITY_FLOOR = 1e-14


@dataclass
class InnerResult:
    z: np.ndarray
    steps: int
    residuals: List[float] = field(default_factory=list)
    hessenberg: List[np.ndarray] = field(default_factory=list)
    basis: List[np.ndarray] = field(default_factory=list)
    monotonicity_checks: int = 0


def gmres_inner(static, rhs, cfg: SolverConfig, ops, recorder) -> InnerResult:
    """
    Approximately solve A z = rhs with up to cfg.inner_iters Arnoldi steps.

    Raises:
        SdcDetected: the detector fired; `partial` holds the solution built
            from the steps completed before the offending one
        CommError: a collective observed a failure
    """
    rhs = as_array(rhs)
    n_local = rhs.shape[0]
    recorder.count("inner_solves")
    beta = ops.norm(rhs)
    if beta == 0.0 or not math.isfinite(beta):
        return InnerResult(np.zeros(n_local), 0, [beta])

    basis = [rhs / beta]
    lsq = GivensLSQ(beta)
    result = InnerResult(np.zeros(n_local), 0, [beta], basis=basis)
    prev_residual = None

    for j in range(cfg.inner_iters):
        w = ops.inner_spmv(basis[j])
        column = []
        for i in range(j + 1):
            h_ij = ops.dot(w, basis[i])
            w = w - h_ij * basis[i]
            column.append(h_ij)
        h_next = ops.norm(w)
        column.append(h_next)

        if cfg.detector == "bounded":
            with recorder.phase("t_sdc_d"):
                verdict = bounded_check(column, static.frob_norm, cfg.bound_slack)
            if verdict:
                raise SdcDetected(verdict, partial=combine(basis, lsq.solve(), n_local), step=j)

        lsq.add_column(column)
        result.hessenberg.append(np.array(column))
        result.residuals.append(lsq.residual)
        result.steps = j + 1
        recorder.count("iterations")

        scale = max(abs(h) for h in column)
        breakdown = h_next <= cfg.breakdown_tol * scale
        converged = cfg.inner_early_exit and lsq.residual <= cfg.inner_tol * beta
        last = j + 1 == cfg.inner_iters

        if cfg.detector == "monotonicity" and ((j + 1) % cfg.mono_interval == 0 or last or breakdown or converged):
            z = combine(basis, lsq.solve(), n_local)
            with recorder.phase("t_sdc_d"):
                verdict, residual = monotonicity_check(
                    static,
                    z,
                    prev_residual,
                    ops.comm,
                    rhs=rhs,
                    spmv=ops.inner_spmv,
                    floor=MONOTONICITY_FLOOR * beta,
                )
            result.monotonicity_checks += 1
            if verdict:
                raise SdcDetected(verdict, partial=combine(basis, lsq.solve(j), n_local), step=j)
            prev_residual = residual

        if breakdown or converged:
            solver_logger.debug("inner_stopped", step=j + 1, breakdown=breakdown, residual=lsq.residual)
            break
        basis.append(w / h_next)

    result.z = combine(basis, lsq.solve(), n_local)
    return result
