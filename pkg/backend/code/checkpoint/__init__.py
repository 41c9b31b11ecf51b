"""Neighbor checkpoints for static and dynamic state, plus local SDC snapshots."""

from backend.code.checkpoint.codec import Checkpoint, CheckpointKind, decode_arrays, digest64, encode_arrays
from backend.code.checkpoint.interval import outer_checkpoint_interval, parse_checkpoint_interval, young_interval
from backend.code.checkpoint.snapshot import SnapshotKeeper, SnapshotToken
from backend.code.checkpoint.store import CheckpointStore, RestoreResult
from backend.code.checkpoint.verify import static_digest, verify_static

__all__ = [
    "Checkpoint",
    "CheckpointKind",
    "CheckpointStore",
    "RestoreResult",
    "SnapshotKeeper",
    "SnapshotToken",
    "decode_arrays",
    "digest64",
    "encode_arrays",
    "outer_checkpoint_interval",
    "parse_checkpoint_interval",
    "static_digest",
    "verify_static",
    "young_interval",
]
