from typing import Tuple

import numpy as np
from scipy import sparse

from backend.code.errors import DimensionOverflow
from backend.code.linalg.types import INDEX_DTYPE, CsrMatrix, DenseVector, Poisson3DSpec

# (di, dj, dk) neighbours in ascending global-index order around the diagonal
_STENCIL = (
    (0, 0, -1),
    (0, -1, 0),
    (-1, 0, 0),
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
)


def build_poisson3d(spec: Poisson3DSpec) -> Tuple[CsrMatrix, DenseVector]:
    """
    7-point finite-difference Laplacian with Dirichlet boundaries.

    Unknown (i, j, k) has global index i + nx * (j + ny * k); the diagonal is 6
    and every in-grid neighbour gets -1. The result is symmetric positive
    definite; the right-hand side is all ones.
    """
    nx, ny, nz = spec.nx, spec.ny, spec.nz
    n = spec.order
    if 7 * n > np.iinfo(INDEX_DTYPE).max:
        raise DimensionOverflow(f"poisson grid {nx}x{ny}x{nz} has too many entries for int32 indices")

    index = np.arange(n, dtype=np.int64)
    i = index % nx
    j = (index // nx) % ny
    k = index // (nx * ny)

    rows, cols, vals = [], [], []
    for di, dj, dk in _STENCIL:
        mask = (
            (i + di >= 0) & (i + di < nx)
            & (j + dj >= 0) & (j + dj < ny)
            & (k + dk >= 0) & (k + dk < nz)
        )
        owners = index[mask]
        rows.append(owners)
        cols.append(owners + di + nx * (dj + ny * dk))
        vals.append(np.full(owners.shape[0], 6.0 if (di, dj, dk) == (0, 0, 0) else -1.0))

    coo = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return CsrMatrix.from_scipy(coo), DenseVector(np.ones(n))
