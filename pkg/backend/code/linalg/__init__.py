"""Sparse linear algebra: CSR kernels, the Poisson generator and distributed variants."""

from backend.code.linalg.distributed import dist_dot, dist_frobenius_norm, dist_norm2, dist_spmv
from backend.code.linalg.kernels import (
    axpy,
    dot,
    frobenius_norm,
    local_dot,
    local_sum_squares,
    norm2,
    partition_rows,
    spmv,
)
from backend.code.linalg.matrix_market import read_matrix_market
from backend.code.linalg.poisson import build_poisson3d
from backend.code.linalg.types import CsrMatrix, DenseVector, Poisson3DSpec, as_array

__all__ = [
    "CsrMatrix",
    "DenseVector",
    "Poisson3DSpec",
    "as_array",
    "axpy",
    "build_poisson3d",
    "dist_dot",
    "dist_frobenius_norm",
    "dist_norm2",
    "dist_spmv",
    "dot",
    "frobenius_norm",
    "local_dot",
    "local_sum_squares",
    "norm2",
    "partition_rows",
    "read_matrix_market",
    "spmv",
]
