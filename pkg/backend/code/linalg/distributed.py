"""
Distributed kernels over row-block partitions.

Each rank owns a contiguous row block of A and the matching blocks of every
vector. Local partial sums go through fsum, then a fixed-tree allreduce.
"""

import math

import numpy as np

from backend.code.errors import LengthMismatch
from backend.code.linalg.kernels import local_dot, local_sum_squares, spmv
from backend.code.linalg.types import CsrMatrix, DenseVector, as_array


def dist_spmv(a_local: CsrMatrix, x_local, comm) -> DenseVector:
    """
    Owned block of y = A x.

    The full x is assembled by allgather; a CommError from the collective
    propagates unchanged.
    """
    blocks = comm.allgather(as_array(x_local))
    x_full = np.concatenate(blocks) if blocks else np.zeros(0)
    if x_full.shape[0] != a_local.n_cols:
        raise LengthMismatch(
            f"dist_spmv: assembled vector has {x_full.shape[0]} entries, matrix has {a_local.n_cols} columns"
        )
    y = spmv(a_local, x_full)
    y.global_offset = sum(len(block) for block in blocks[: comm.rank])
    return y


def dist_dot(u_local, v_local, comm) -> float:
    return comm.allreduce(local_dot(u_local, v_local), "sum")


def dist_norm2(v_local, comm) -> float:
    return math.sqrt(comm.allreduce(local_sum_squares(v_local), "sum"))


def dist_frobenius_norm(a_local: CsrMatrix, comm) -> float:
    return math.sqrt(comm.allreduce(local_sum_squares(a_local.values), "sum"))
