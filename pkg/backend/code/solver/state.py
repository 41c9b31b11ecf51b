"""
Static and dynamic solver state, and their checkpoint payloads.

Static state (A and b) never changes after setup. Dynamic state is everything
the outer iteration needs to resume bit-for-bit: the cycle start x0, the
outer bases V and Z, and the Hessenberg columns from which the Givens
least-squares state is rebuilt.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from backend.code.checkpoint.codec import decode_arrays, encode_arrays
from backend.code.checkpoint.verify import static_digest, verify_static
from backend.code.errors import ChecksumMismatch
from backend.code.linalg.types import CsrMatrix, DenseVector


@dataclass
class StaticState:
    a_local: CsrMatrix
    b_local: DenseVector
    frob_norm: float
    checksum: int
    block_sizes: List[int]

    @classmethod
    def build(cls, a_local: CsrMatrix, b_local: DenseVector, frob_norm: float, block_sizes) -> "StaticState":
        return cls(a_local, b_local, frob_norm, static_digest(a_local, b_local), list(block_sizes))

    @property
    def n_local(self) -> int:
        return len(self.b_local)

    def to_payload(self) -> bytes:
        return encode_arrays(
            {
                "row_offsets": self.a_local.row_offsets,
                "col_indices": self.a_local.col_indices,
                "values": self.a_local.values,
                "b": self.b_local.values,
                "shape": np.array([self.a_local.n_rows, self.a_local.n_cols, self.b_local.global_offset]),
                "frob_norm": np.array([self.frob_norm]),
                "checksum": np.array([self.checksum], dtype=np.uint64).view(np.int64),
                "block_sizes": np.array(self.block_sizes),
            }
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "StaticState":
        arrays = decode_arrays(payload)
        n_rows, n_cols, offset = (int(v) for v in arrays["shape"])
        static = cls(
            a_local=CsrMatrix(n_rows, arrays["row_offsets"], arrays["col_indices"], arrays["values"], n_cols),
            b_local=DenseVector(arrays["b"], offset),
            frob_norm=float(arrays["frob_norm"][0]),
            checksum=int(arrays["checksum"].view(np.uint64)[0]),
            block_sizes=[int(v) for v in arrays["block_sizes"]],
        )
        if not verify_static(static):
            raise ChecksumMismatch("restored static state does not match its setup digest")
        return static


@dataclass
class DynamicState:
    """Outer FGMRES state of one rank; V, Z and H belong to the current cycle."""

    x0_local: np.ndarray
    k: int
    cycle_start: int
    V: List[np.ndarray]
    Z: List[np.ndarray] = field(default_factory=list)
    H: List[np.ndarray] = field(default_factory=list)
    b_norm: float = 0.0
    beta: float = 0.0
    x_local: Optional[np.ndarray] = None

    @property
    def cycle_length(self) -> int:
        return len(self.Z)

    def to_payload(self, x_local: np.ndarray, include_basis: bool) -> bytes:
        n_local = x_local.shape[0]
        arrays = {
            "x": x_local,
            "meta": np.array([self.k, self.cycle_start, int(include_basis)]),
            "norms": np.array([self.b_norm, self.beta]),
        }
        if include_basis:
            m = len(self.Z)
            hessenberg = np.zeros((m + 1, m))
            for j, column in enumerate(self.H):
                hessenberg[: j + 2, j] = column
            arrays.update(
                {
                    "x0": self.x0_local,
                    "V": np.stack(self.V, axis=1) if self.V else np.zeros((n_local, 0)),
                    "Z": np.stack(self.Z, axis=1) if self.Z else np.zeros((n_local, 0)),
                    "H": hessenberg,
                }
            )
        return encode_arrays(arrays)

    @classmethod
    def from_payload(cls, payload: bytes) -> "DynamicState":
        """Basis payloads restore the full cycle; x-only payloads leave V empty for a fresh cycle."""
        arrays = decode_arrays(payload)
        k, cycle_start, has_basis = (int(v) for v in arrays["meta"])
        b_norm, beta = (float(v) for v in arrays["norms"])
        if not has_basis:
            return cls(
                x0_local=arrays["x"], k=k, cycle_start=k, V=[], b_norm=b_norm, x_local=arrays["x"]
            )
        hessenberg = arrays["H"]
        return cls(
            x0_local=arrays["x0"],
            k=k,
            cycle_start=cycle_start,
            V=[np.ascontiguousarray(column) for column in arrays["V"].T],
            Z=[np.ascontiguousarray(column) for column in arrays["Z"].T],
            H=[hessenberg[: j + 2, j].copy() for j in range(hessenberg.shape[1])],
            b_norm=b_norm,
            beta=beta,
            x_local=arrays["x"],
        )
