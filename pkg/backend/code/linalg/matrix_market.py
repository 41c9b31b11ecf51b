from pathlib import Path
from typing import Union

import numpy as np
from scipy import io, sparse

from backend.code.errors import UsageError
from backend.code.linalg.types import CsrMatrix
from backend.code.structured_logging import solver_logger


def read_matrix_market(path: Union[str, Path]) -> CsrMatrix:
    """
    Load a real, square Matrix Market file into CSR form.

    Duplicate entries are summed; symmetric storage is expanded.
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"matrix file not found: {path}")
    try:
        loaded = io.mmread(str(path))
    except (ValueError, OSError) as e:
        raise UsageError(f"cannot parse Matrix Market file {path}: {e}") from e

    if np.iscomplexobj(loaded.data if sparse.issparse(loaded) else loaded):
        raise UsageError(f"{path}: complex matrices are not supported")
    if loaded.shape[0] != loaded.shape[1]:
        raise UsageError(f"{path}: matrix must be square, got shape {loaded.shape}")

    matrix = CsrMatrix.from_scipy(loaded)
    solver_logger.info("matrix_loaded", path=str(path), n_rows=matrix.n_rows, nnz=matrix.nnz)
    return matrix
