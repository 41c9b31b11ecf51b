from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import sparse

from backend.code.errors import DimensionOverflow, UsageError

INDEX_DTYPE = np.int32
VALUE_DTYPE = np.float64


@dataclass
class CsrMatrix:
    """
    Compressed sparse row matrix.

    `n_cols` is the global column count; a row block handed to one rank keeps
    global column ids.
    """

    n_rows: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    n_cols: Optional[int] = None

    def __post_init__(self):
        self.row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(self.col_indices, dtype=INDEX_DTYPE)
        self.values = np.ascontiguousarray(self.values, dtype=VALUE_DTYPE)
        if self.n_cols is None:
            self.n_cols = self.n_rows

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @property
    def shape(self) -> tuple:
        return (self.n_rows, self.n_cols)

    def validate(self) -> None:
        """Raise UsageError unless every CSR invariant holds."""
        offsets = self.row_offsets
        if offsets.shape != (self.n_rows + 1,):
            raise UsageError(f"row_offsets must have length {self.n_rows + 1}, got {offsets.shape[0]}")
        if offsets[0] != 0:
            raise UsageError("row_offsets[0] must be 0")
        if np.any(np.diff(offsets) < 0):
            raise UsageError("row_offsets must be non-decreasing")
        if offsets[-1] != self.nnz or self.col_indices.shape[0] != self.nnz:
            raise UsageError("row_offsets[n_rows], len(values) and len(col_indices) must agree")
        if self.nnz and (self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols):
            raise UsageError(f"column indices must lie in [0, {self.n_cols})")
        for row in range(self.n_rows):
            cols = self.col_indices[offsets[row]:offsets[row + 1]]
            if cols.size > 1 and np.any(np.diff(cols) <= 0):
                raise UsageError(f"column indices of row {row} are not strictly increasing")

    def row_block(self, rows: range) -> "CsrMatrix":
        """Owned-row slice with global column ids."""
        start, stop = rows.start, rows.stop
        if not 0 <= start <= stop <= self.n_rows:
            raise UsageError(f"row range [{start}, {stop}) outside [0, {self.n_rows})")
        lo, hi = self.row_offsets[start], self.row_offsets[stop]
        return CsrMatrix(
            n_rows=stop - start,
            row_offsets=self.row_offsets[start:stop + 1] - lo,
            col_indices=self.col_indices[lo:hi].copy(),
            values=self.values[lo:hi].copy(),
            n_cols=self.n_cols,
        )

    def to_scipy(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_scipy(cls, matrix) -> "CsrMatrix":
        csr = sparse.csr_matrix(matrix, dtype=VALUE_DTYPE)
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.nnz > np.iinfo(INDEX_DTYPE).max or csr.shape[1] > np.iinfo(INDEX_DTYPE).max:
            raise DimensionOverflow(f"matrix of shape {csr.shape} with {csr.nnz} entries overflows int32 indices")
        return cls(
            n_rows=csr.shape[0],
            row_offsets=csr.indptr,
            col_indices=csr.indices,
            values=csr.data,
            n_cols=csr.shape[1],
        )

    @classmethod
    def from_dense(cls, array) -> "CsrMatrix":
        return cls.from_scipy(sparse.csr_matrix(np.asarray(array, dtype=VALUE_DTYPE)))


@dataclass
class DenseVector:
    """Dense real vector; `global_offset` locates a distributed block."""

    values: np.ndarray
    global_offset: int = 0

    def __post_init__(self):
        self.values = np.array(self.values, dtype=VALUE_DTYPE, copy=True).reshape(-1)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def copy(self) -> "DenseVector":
        return DenseVector(self.values, self.global_offset)


VectorLike = Union[DenseVector, np.ndarray]


def as_array(vector) -> np.ndarray:
    if isinstance(vector, DenseVector):
        return vector.values
    return np.asarray(vector, dtype=VALUE_DTYPE).reshape(-1)


@dataclass(frozen=True)
class Poisson3DSpec:
    """Grid cell counts of the synthetic 3-D problem."""

    nx: int
    ny: int = 1
    nz: int = 1
    order: int = field(init=False)

    def __post_init__(self):
        for axis, count in (("nx", self.nx), ("ny", self.ny), ("nz", self.nz)):
            if int(count) != count or count < 1:
                raise UsageError(f"{axis} must be a positive integer, got {count}")
        object.__setattr__(self, "order", int(self.nx) * int(self.ny) * int(self.nz))
