"""
Communicator handles for the simulated SPMD runtime.

A CommState is one repair generation of the process group, shared by every
member. Each rank talks to it through its own Communicator handle, which keeps
that rank's collective sequence numbers and lockstep fingerprint.

Collectives meet in rendezvous slots keyed by sequence number. A slot
completes once every member has arrived or is dead; its outcome is computed
exactly once and handed to every caller, so all ranks see the same result or
the same error.
"""

import hashlib
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from backend.code.errors import CommError, LockstepViolation, UsageError
from backend.code.structured_logging import trace_logger

if TYPE_CHECKING:
    from backend.code.runtime.world import World

COLLECTIVE = "coll"
FAULT_TOLERANT = "ft"


class ReduceOp(str, Enum):
    SUM = "sum"
    MAX = "max"
    MIN = "min"
    LAND = "land"


_COMBINE = {
    ReduceOp.SUM: np.add,
    ReduceOp.MAX: np.maximum,
    ReduceOp.MIN: np.minimum,
    ReduceOp.LAND: np.logical_and,
}


def tree_reduce(values: Sequence[Any], op) -> Any:
    """
    Combine per-rank values pairwise over a fixed binary tree of rank ids.

    The combination order depends only on the number of ranks, never on
    arrival order.
    """
    op = ReduceOp(op)
    combine = _COMBINE[op]
    level = [np.asarray(v) for v in values]
    if not level:
        raise UsageError("cannot reduce an empty set of contributions")
    while len(level) > 1:
        paired = [combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            paired.append(level[-1])
        level = paired
    result = level[0]
    if result.ndim == 0:
        return bool(result) if op is ReduceOp.LAND else result.item()
    return result


@dataclass(frozen=True)
class Agreement:
    """Result of agree: the AND of live flags plus the ranks seen dead."""

    value: bool
    failed: FrozenSet[int] = frozenset()

    def __bool__(self) -> bool:
        return self.value


@dataclass
class _Slot:
    op: str
    arrivals: Dict[int, Any] = field(default_factory=dict)
    done: bool = False
    value: Any = None
    error: Optional[Callable[[], BaseException]] = None


class CommState:
    """One generation of the process group; `members[rank]` is a process id."""

    def __init__(self, epoch: int, members: Iterable[int], substituted: Iterable[int] = ()):
        self.epoch = epoch
        self.members: List[int] = list(members)
        self.substituted: FrozenSet[int] = frozenset(substituted)
        self.revoked = False
        self.revoked_with: FrozenSet[int] = frozenset()
        self.slots: Dict[tuple, _Slot] = {}
        self.mailboxes: Dict[tuple, deque] = defaultdict(deque)

    @property
    def size(self) -> int:
        return len(self.members)


def _frozen_copy(value):
    if isinstance(value, np.ndarray):
        copied = np.array(value, copy=True)
        copied.flags.writeable = False
        return copied
    return value


def _nbytes(value) -> int:
    if isinstance(value, (bytes, bytearray)):
        return len(value)
    if isinstance(value, np.ndarray):
        return int(value.nbytes)
    if isinstance(value, (list, tuple)):
        return sum(_nbytes(v) for v in value)
    return 8


class Communicator:
    """A rank's handle on a CommState."""

    def __init__(self, world: "World", state: CommState, rank: int):
        if not 0 <= rank < state.size:
            raise UsageError(f"rank {rank} outside communicator of size {state.size}")
        self._world = world
        self._state = state
        self.rank = rank
        self.pid = state.members[rank]
        self._seq = 0
        self._ft_seq = 0
        self._digest = hashlib.blake2b(digest_size=8)

    # ---- introspection -------------------------------------------------

    @property
    def size(self) -> int:
        return self._state.size

    @property
    def epoch(self) -> int:
        return self._state.epoch

    @property
    def revoked(self) -> bool:
        return self._state.revoked

    @property
    def active_ranks(self) -> tuple:
        return tuple(range(self._state.size))

    @property
    def failed(self) -> FrozenSet[int]:
        with self._world.cond:
            return self._dead_ranks()

    @property
    def spare_pool(self) -> tuple:
        return self._world.spare_pool

    @property
    def substituted(self) -> FrozenSet[int]:
        return self._state.substituted

    @property
    def fingerprint(self) -> str:
        """Running digest of the collective call sites this rank has entered."""
        return self._digest.hexdigest()

    # ---- point to point ------------------------------------------------

    def send(self, dst: int, tag: int, payload: bytes) -> None:
        """Buffered send; never blocks."""
        self._check_peer(dst)
        world = self._world
        with world.cond:
            world.enter(self.pid, "send")
            state = self._state
            if state.revoked:
                self._trace("send", tag, len(payload), "Revoked")
                raise CommError.revoked_error(state.revoked_with)
            if not world.is_alive(state.members[dst]):
                self._trace("send", tag, len(payload), "ProcFailed")
                raise CommError.proc_failed_error([dst])
            state.mailboxes[(self.rank, dst, tag)].append(bytes(payload))
            self._trace("send", tag, len(payload), "ok")
            world.cond.notify_all()

    def recv(self, src: int, tag: int) -> bytes:
        """Next message on (src, self, tag) in FIFO order."""
        self._check_peer(src)
        world = self._world
        with world.cond:
            world.enter(self.pid, "recv")
            state = self._state
            queue = state.mailboxes[(src, self.rank, tag)]
            started = world.clock()
            while True:
                if state.revoked:
                    self._trace("recv", tag, 0, "Revoked")
                    raise CommError.revoked_error(state.revoked_with)
                if queue:
                    payload = queue.popleft()
                    self._trace("recv", tag, len(payload), "ok")
                    return payload
                if not world.is_alive(state.members[src]):
                    self._trace("recv", tag, 0, "ProcFailed")
                    raise CommError.proc_failed_error([src])
                world.wait(self.pid, "recv", started)

    # ---- collectives ---------------------------------------------------

    def barrier(self) -> None:
        self._collective("barrier", None, lambda arrivals: None)

    def allreduce(self, value, op="sum"):
        op = ReduceOp(op)
        return self._collective(f"allreduce:{op.value}", value, lambda arrivals: tree_reduce(arrivals, op))

    def allgather(self, block) -> list:
        """Every rank's contribution, in rank order."""
        return list(self._collective("allgather", block, lambda arrivals: list(arrivals)))

    def revoke(self) -> None:
        """Poison the communicator; idempotent."""
        world = self._world
        with world.cond:
            world.enter(self.pid, "revoke")
            state = self._state
            if not state.revoked:
                state.revoked = True
                state.revoked_with = self._dead_ranks()
                for key, slot in state.slots.items():
                    if key[0] == COLLECTIVE and not slot.done:
                        slot.done = True
                        slot.error = lambda known=state.revoked_with: CommError.revoked_error(known)
            self._trace("revoke", 0, 0, "ok")
            world.cond.notify_all()

    def agree(self, flag: bool = True) -> Agreement:
        """Failure-tolerant AND over live members; works on a revoked communicator."""

        def decide(arrivals_by_rank, dead):
            alive_flags = [bool(v) for r, v in arrivals_by_rank.items() if r not in dead]
            return Agreement(value=all(alive_flags), failed=frozenset(dead)), None

        return self._fault_tolerant("agree", bool(flag), decide)

    def shrink_and_substitute(self) -> "Communicator":
        """
        Replace every dead member by a spare taken in pool order.

        The new communicator has epoch + 1, the same size and rank ids, and
        is not revoked. This communicator is revoked afterwards.
        """
        world = self._world

        def substitute(arrivals_by_rank, dead):
            return world.substitute(self._state, dead)

        state = self._fault_tolerant("shrink", None, substitute)
        return Communicator(world, state, self.rank)

    # ---- internals -----------------------------------------------------

    def _check_peer(self, peer: int) -> None:
        if not 0 <= peer < self._state.size:
            raise UsageError(f"peer rank {peer} outside communicator of size {self._state.size}")

    def _dead_ranks(self) -> FrozenSet[int]:
        return frozenset(
            rank for rank, pid in enumerate(self._state.members) if not self._world.is_alive(pid)
        )

    def _join_slot(self, kind: str, seq: int, op: str, value) -> _Slot:
        self._digest.update(f"{kind}:{seq}:{op};".encode())
        slot = self._state.slots.setdefault((kind, seq), _Slot(op))
        if slot.op != op:
            message = f"rank {self.rank} entered {op} where its peers entered {slot.op} (epoch {self.epoch}, seq {seq})"
            if not slot.done:
                slot.done = True
                slot.error = lambda: LockstepViolation(message)
                self._world.cond.notify_all()
            raise LockstepViolation(message)
        slot.arrivals[self.rank] = _frozen_copy(value)
        self._world.cond.notify_all()
        return slot

    def _pending(self, slot: _Slot, dead: FrozenSet[int]) -> bool:
        return any(r not in slot.arrivals and r not in dead for r in range(self._state.size))

    def _collective(self, op: str, value, compute: Callable[[list], Any]):
        world = self._world
        with world.cond:
            world.enter(self.pid, op)
            seq = self._seq
            self._seq += 1
            state = self._state
            if state.revoked:
                self._digest.update(f"{COLLECTIVE}:{seq}:{op};".encode())
                self._trace(op, seq, _nbytes(value), "Revoked")
                raise CommError.revoked_error(state.revoked_with)
            slot = self._join_slot(COLLECTIVE, seq, op, value)
            started = world.clock()
            while not slot.done:
                dead = self._dead_ranks()
                if not self._pending(slot, dead):
                    slot.done = True
                    if dead:
                        slot.error = lambda ranks=dead: CommError.proc_failed_error(ranks)
                    else:
                        slot.value = _frozen_copy_all(compute([slot.arrivals[r] for r in range(state.size)]))
                    world.cond.notify_all()
                    break
                world.wait(self.pid, op, started)
            return self._deliver(slot, op, seq, value)

    def _fault_tolerant(self, op: str, value, decide: Callable[[dict, FrozenSet[int]], tuple]):
        world = self._world
        with world.cond:
            world.enter(self.pid, op)
            seq = self._ft_seq
            self._ft_seq += 1
            slot = self._join_slot(FAULT_TOLERANT, seq, op, value)
            started = world.clock()
            while not slot.done:
                dead = self._dead_ranks()
                if not self._pending(slot, dead):
                    slot.done = True
                    slot.value, slot.error = decide(dict(slot.arrivals), dead)
                    world.cond.notify_all()
                    break
                world.wait(self.pid, op, started)
            return self._deliver(slot, op, seq, value)

    def _deliver(self, slot: _Slot, op: str, seq: int, value):
        if slot.error is not None:
            error = slot.error()
            outcome = error.kind.value if isinstance(error, CommError) else type(error).__name__
            self._trace(op, seq, _nbytes(value), outcome)
            raise error
        self._trace(op, seq, _nbytes(value), "ok")
        result = slot.value
        if isinstance(result, np.ndarray):
            return np.array(result, copy=True)
        if isinstance(result, list):
            return list(result)
        return result

    def _trace(self, op: str, tag: int, nbytes: int, outcome: str) -> None:
        if not trace_logger.disabled:
            trace_logger.info(f"{self.epoch} {self.rank} {op} {tag} {nbytes} {outcome}")


def _frozen_copy_all(value):
    if isinstance(value, list):
        return [_frozen_copy(v) for v in value]
    return _frozen_copy(value)

