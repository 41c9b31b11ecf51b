import hashlib

import numpy as np

from backend.code.linalg.types import CsrMatrix, as_array


def static_digest(a_local: CsrMatrix, b_local) -> int:
    """64-bit digest over the CSR arrays of A and the bytes of b."""
    hasher = hashlib.blake2b(digest_size=8)
    hasher.update(np.ascontiguousarray(a_local.row_offsets, dtype="<i8").tobytes())
    hasher.update(np.ascontiguousarray(a_local.col_indices, dtype="<i4").tobytes())
    hasher.update(np.ascontiguousarray(a_local.values, dtype="<f8").tobytes())
    hasher.update(np.ascontiguousarray(as_array(b_local), dtype="<f8").tobytes())
    return int.from_bytes(hasher.digest(), "little")


def verify_static(static_state) -> bool:
    """True iff A and b still hash to the digest recorded at setup."""
    return static_digest(static_state.a_local, static_state.b_local) == static_state.checksum
