"""
In-memory neighbor checkpointing.

Rank r keeps the checkpoints of its predecessor (r - 1) mod n and a copy of its
own. Every store is two-phase: the incoming checkpoint is verified into a
pending slot and only replaces the held one after an agree confirms that every
rank received a good copy.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

from backend.code.checkpoint.codec import Checkpoint, CheckpointKind
from backend.code.errors import ChecksumMismatch, CommError, HolderDead, UsageError
from backend.code.structured_logging import checkpoint_logger

TAG_STATIC = 101
TAG_DYNAMIC = 102
TAG_RESTORE_STATIC = 103
TAG_RESTORE_DYNAMIC = 104
TAG_RESEED_STATIC = 105
TAG_RESEED_DYNAMIC = 106

# Contribution of a rank with no retained state to the restore-epoch minimum
_NO_EPOCH = 2**31


@dataclass(frozen=True)
class RestoreResult:
    """What one rank gets back from fetch_for_restore."""

    epoch: int
    static_payload: Optional[bytes]
    dynamic_payload: Optional[bytes]
    fresh: bool


class CheckpointStore:
    """Checkpoints held by one rank; lives across communicator repairs."""

    def __init__(self):
        self.held_static: Optional[Checkpoint] = None
        self.held_dynamic: Optional[Checkpoint] = None
        self.own_static: Optional[Checkpoint] = None
        self.own_dynamic: Optional[Checkpoint] = None
        self._pending: Optional[Checkpoint] = None

    @property
    def held(self) -> Dict[int, Tuple[Optional[Checkpoint], Optional[Checkpoint]]]:
        """owner -> (static, dynamic) kept for the predecessor."""
        if self.held_static is None and self.held_dynamic is None:
            return {}
        owner = (self.held_static or self.held_dynamic).owner
        return {owner: (self.held_static, self.held_dynamic)}

    @property
    def latest_epoch(self) -> int:
        return self.own_dynamic.epoch if self.own_dynamic is not None else 0

    @property
    def fresh(self) -> bool:
        """True for a spare that has not received its adopted rank's state yet."""
        return self.own_static is None

    # ---- store ---------------------------------------------------------

    def store_static(self, comm, payload: bytes, recorder=None) -> Checkpoint:
        checkpoint = Checkpoint(owner=comm.rank, epoch=0, kind=CheckpointKind.STATIC, payload=payload)
        self.own_static = checkpoint
        self._exchange(comm, checkpoint, TAG_STATIC)
        self.held_static, self._pending = self._pending, None
        if recorder is not None:
            recorder.record_checkpoint(len(payload))
        checkpoint_logger.debug("static_checkpoint_stored", bytes=len(payload))
        return checkpoint

    def store_dynamic(self, comm, payload: bytes, epoch: int, recorder=None) -> Checkpoint:
        """Replace the latest dynamic checkpoint; the old one survives a failed store."""
        checkpoint = Checkpoint(owner=comm.rank, epoch=epoch, kind=CheckpointKind.DYNAMIC, payload=payload)
        self._exchange(comm, checkpoint, TAG_DYNAMIC)
        self.held_dynamic, self._pending = self._pending, None
        self.own_dynamic = checkpoint
        if recorder is not None:
            recorder.record_checkpoint(len(payload))
        checkpoint_logger.debug("dynamic_checkpoint_stored", epoch=epoch, bytes=len(payload))
        return checkpoint

    def _exchange(self, comm, checkpoint: Checkpoint, tag: int) -> None:
        """Send to the successor, verify what the predecessor sent into the pending slot, then agree."""
        n = comm.size
        successor, predecessor = (comm.rank + 1) % n, (comm.rank - 1) % n
        self._pending = None
        local_error: Optional[BaseException] = None
        try:
            comm.send(successor, tag, checkpoint.to_bytes())
            received = Checkpoint.from_bytes(comm.recv(predecessor, tag))
            if received.owner != predecessor or received.kind != checkpoint.kind:
                raise ChecksumMismatch(
                    f"expected {checkpoint.kind.name.lower()} checkpoint of rank {predecessor}, "
                    f"got {received.kind.name.lower()} of rank {received.owner}"
                )
        except (CommError, ChecksumMismatch) as e:
            local_error = e
        else:
            self._pending = received

        agreement = comm.agree(local_error is None)
        if agreement.failed:
            self._pending = None
            raise CommError.proc_failed_error(agreement.failed)
        if not agreement:
            self._pending = None
            if isinstance(local_error, (CommError, ChecksumMismatch)):
                raise local_error
            raise ChecksumMismatch(f"a peer rejected the {checkpoint.kind.name.lower()} checkpoint exchange")

    # ---- restore -------------------------------------------------------

    def fetch_for_restore(self, comm, failed: Iterable[int] = ()) -> RestoreResult:
        """
        Deliver checkpoints to spares that adopted failed ranks.

        Collective over the repaired communicator. Every rank learns the
        restore epoch, the minimum latest epoch retained by any rank that
        still has state. Fresh spares get their rank's static and dynamic
        checkpoints from the successor that held them; afterwards each rank
        re-seeds a fresh successor with its own copies.

        Raises:
            HolderDead: a fresh rank's holder is fresh as well
        """
        n, rank = comm.size, comm.rank
        fresh_flags = comm.allgather(self.fresh)
        fresh = sorted(r for r, flag in enumerate(fresh_flags) if flag)
        unexpected = set(failed) - set(fresh)
        if unexpected:
            raise UsageError(f"ranks {sorted(unexpected)} were reported failed but still hold state")
        for owner in fresh:
            holder = (owner + 1) % n
            if holder in fresh:
                checkpoint_logger.error("checkpoint_holder_dead", owner=owner, holder=holder)
                raise HolderDead(owner, holder)

        epoch = comm.allreduce(_NO_EPOCH if self.fresh else self.latest_epoch, "min")
        if not fresh:
            return RestoreResult(epoch, None, self._own_dynamic_payload(epoch), fresh=False)

        ok = True
        successor, predecessor = (rank + 1) % n, (rank - 1) % n
        was_fresh = self.fresh
        own = (self.own_static, self.own_dynamic)
        held = (self.held_static, self.held_dynamic)
        try:
            if predecessor in fresh:
                comm.send(predecessor, TAG_RESTORE_STATIC, self.held_static.to_bytes())
                if epoch > 0:
                    comm.send(predecessor, TAG_RESTORE_DYNAMIC, self._held_dynamic_at(epoch).to_bytes())
            if was_fresh:
                own = (
                    Checkpoint.from_bytes(comm.recv(successor, TAG_RESTORE_STATIC)),
                    Checkpoint.from_bytes(comm.recv(successor, TAG_RESTORE_DYNAMIC)) if epoch > 0 else None,
                )
            if successor in fresh:
                comm.send(successor, TAG_RESEED_STATIC, own[0].to_bytes())
                if epoch > 0:
                    comm.send(successor, TAG_RESEED_DYNAMIC, own[1].to_bytes())
            if was_fresh:
                held = (
                    Checkpoint.from_bytes(comm.recv(predecessor, TAG_RESEED_STATIC)),
                    Checkpoint.from_bytes(comm.recv(predecessor, TAG_RESEED_DYNAMIC)) if epoch > 0 else None,
                )
        except (CommError, ChecksumMismatch) as e:
            checkpoint_logger.warning("restore_transfer_failed", error_type=type(e).__name__, error_message=str(e))
            ok = False

        agreement = comm.agree(ok)
        if agreement.failed:
            raise CommError.proc_failed_error(agreement.failed)
        if not agreement:
            raise ChecksumMismatch("checkpoint delivery to a spare failed verification")

        self.own_static, self.own_dynamic = own
        self.held_static, self.held_dynamic = held
        checkpoint_logger.info("checkpoints_restored", epoch=epoch, fresh=fresh, adopted=was_fresh)
        return RestoreResult(
            epoch=epoch,
            static_payload=self.own_static.payload if was_fresh else None,
            dynamic_payload=self._own_dynamic_payload(epoch),
            fresh=was_fresh,
        )

    def _own_dynamic_payload(self, epoch: int) -> Optional[bytes]:
        if epoch == 0:
            return None
        if self.own_dynamic is None or self.own_dynamic.epoch != epoch:
            raise UsageError(f"no retained dynamic checkpoint at restore epoch {epoch}")
        return self.own_dynamic.payload

    def _held_dynamic_at(self, epoch: int) -> Checkpoint:
        if self.held_dynamic is None or self.held_dynamic.epoch != epoch:
            raise UsageError(f"no held dynamic checkpoint at restore epoch {epoch}")
        return self.held_dynamic
