"""
Sequential kernels shared by every rank.

Summations go through math.fsum, which is correctly rounded and therefore
independent of evaluation order. SpMV accumulates each row left to right in
column order, so a row block computes bit-identical entries to the full matrix.
"""

import math
from typing import List

from backend.code.errors import LengthMismatch, UsageError
from backend.code.linalg.types import CsrMatrix, DenseVector, as_array


def spmv(matrix: CsrMatrix, x) -> DenseVector:
    """y = A x for a CSR matrix and a full-length x."""
    x_values = as_array(x)
    if x_values.shape[0] != matrix.n_cols:
        raise LengthMismatch(f"spmv: matrix has {matrix.n_cols} columns, vector has {x_values.shape[0]} entries")
    return DenseVector(matrix.to_scipy() @ x_values)


def frobenius_norm(matrix: CsrMatrix) -> float:
    return math.sqrt(local_sum_squares(matrix.values))


def local_sum_squares(values) -> float:
    values = as_array(values)
    return math.fsum(values * values)


def local_dot(u, v) -> float:
    u_values, v_values = as_array(u), as_array(v)
    if u_values.shape != v_values.shape:
        raise LengthMismatch(f"dot: lengths {u_values.shape[0]} and {v_values.shape[0]} differ")
    return math.fsum(u_values * v_values)


def dot(u, v) -> float:
    return local_dot(u, v)


def norm2(v) -> float:
    return math.sqrt(local_sum_squares(v))


def axpy(alpha: float, x, y) -> DenseVector:
    """Return alpha * x + y without mutating either operand."""
    x_values, y_values = as_array(x), as_array(y)
    if x_values.shape != y_values.shape:
        raise LengthMismatch(f"axpy: lengths {x_values.shape[0]} and {y_values.shape[0]} differ")
    offset = y.global_offset if isinstance(y, DenseVector) else 0
    return DenseVector(alpha * x_values + y_values, offset)


def partition_rows(n_rows: int, n_ranks: int) -> List[range]:
    """
    Contiguous near-even row blocks; the first n_rows % n_ranks blocks get one
    extra row. Blocks may be empty when there are more ranks than rows.
    """
    if n_ranks < 1:
        raise UsageError(f"n_ranks must be at least 1, got {n_ranks}")
    if n_rows < 0:
        raise UsageError(f"n_rows must be non-negative, got {n_rows}")
    base, extra = divmod(n_rows, n_ranks)
    blocks = []
    start = 0
    for rank in range(n_ranks):
        stop = start + base + (1 if rank < extra else 0)
        blocks.append(range(start, stop))
        start = stop
    return blocks

