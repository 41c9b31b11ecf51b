"""
Byte-exact checkpoint format.

Header (little endian, 32 bytes): magic "RKCP", version u16, kind u8,
owner u32, epoch u32, payload_len u64, checksum u64. The checksum is a 64-bit
BLAKE2b digest of the payload.

Payloads produced by encode_arrays hold named arrays: count u32, then per
array name_len u8, name, dtype code u8, ndim u8, dims u64 each, raw data.
"""

import hashlib
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Mapping, Optional

import numpy as np

from backend.code.errors import ChecksumMismatch, UsageError

MAGIC = b"RKCP"
VERSION = 1
HEADER = struct.Struct("<4sHBIIQQ")

_DTYPES = {ord("f"): np.dtype("<f8"), ord("i"): np.dtype("<i8")}
_CODES = {"f": ord("f"), "i": ord("i")}


class CheckpointKind(IntEnum):
    STATIC = 0
    DYNAMIC = 1


def digest64(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class Checkpoint:
    owner: int
    epoch: int
    kind: CheckpointKind
    payload: bytes
    checksum: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CheckpointKind(self.kind))
        object.__setattr__(self, "payload", bytes(self.payload))
        if self.checksum is None:
            object.__setattr__(self, "checksum", digest64(self.payload))

    def verify(self) -> bool:
        return digest64(self.payload) == self.checksum

    def to_bytes(self) -> bytes:
        header = HEADER.pack(MAGIC, VERSION, int(self.kind), self.owner, self.epoch, len(self.payload), self.checksum)
        return header + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        """Decode and verify; raises ChecksumMismatch on any corruption."""
        if len(data) < HEADER.size:
            raise ChecksumMismatch(f"checkpoint of {len(data)} bytes is shorter than its header")
        magic, version, kind, owner, epoch, length, checksum = HEADER.unpack_from(data)
        if magic != MAGIC or version != VERSION:
            raise ChecksumMismatch(f"bad checkpoint header magic={magic!r} version={version}")
        payload = data[HEADER.size:]
        if len(payload) != length:
            raise ChecksumMismatch(f"checkpoint payload has {len(payload)} bytes, header says {length}")
        try:
            kind = CheckpointKind(kind)
        except ValueError as e:
            raise ChecksumMismatch(f"unknown checkpoint kind {kind}") from e
        checkpoint = cls(owner=owner, epoch=epoch, kind=kind, payload=payload, checksum=checksum)
        if not checkpoint.verify():
            raise ChecksumMismatch(f"checksum mismatch in {kind.name.lower()} checkpoint of rank {owner}")
        return checkpoint


def encode_arrays(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, array in arrays.items():
        array = np.asarray(array)
        if array.dtype.kind == "f":
            code, dtype = "f", _DTYPES[ord("f")]
        elif array.dtype.kind in "iub":
            code, dtype = "i", _DTYPES[ord("i")]
        else:
            raise UsageError(f"array '{name}' has unsupported dtype {array.dtype}")
        encoded_name = name.encode("utf-8")
        if len(encoded_name) > 255:
            raise UsageError(f"array name '{name}' is too long")
        parts.append(struct.pack("<B", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(struct.pack("<BB", _CODES[code], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b"".join(parts)


def decode_arrays(payload: bytes) -> Dict[str, np.ndarray]:
    (count,) = struct.unpack_from("<I", payload, 0)
    offset = 4
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        name = payload[offset:offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", payload, offset)
        offset += 2
        shape = struct.unpack_from(f"<{ndim}Q", payload, offset)
        offset += 8 * ndim
        dtype = _DTYPES.get(code)
        if dtype is None:
            raise ChecksumMismatch(f"unknown dtype code {code} for array '{name}'")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        nbytes = size * dtype.itemsize
        if offset + nbytes > len(payload):
            raise ChecksumMismatch(f"array '{name}' runs past the end of the payload")
        if size == 0:
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            arrays[name] = np.frombuffer(payload, dtype=dtype, count=size, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise ChecksumMismatch(f"{len(payload) - offset} trailing bytes after array payload")
    return arrays
