import copy
import itertools
from dataclasses import dataclass
from typing import Any, Optional

from backend.code.errors import UsageError

_token_ids = itertools.count(1)


@dataclass
class SnapshotToken:
    token_id: int
    state: Any
    live: bool = True


class SnapshotKeeper:
    """
    Rank-local in-memory snapshots for SDC rollback.

    At most one token is live at a time. A token may be rolled back any
    number of times until it is committed.
    """

    def __init__(self):
        self._live: Optional[SnapshotToken] = None

    @property
    def live(self) -> Optional[SnapshotToken]:
        return self._live

    def local_snapshot(self, state) -> SnapshotToken:
        if self._live is not None:
            raise UsageError(f"snapshot {self._live.token_id} is still live; commit it first")
        self._live = SnapshotToken(token_id=next(_token_ids), state=copy.deepcopy(state))
        return self._live

    def local_rollback(self, token: SnapshotToken):
        if not token.live or token is not self._live:
            raise UsageError(f"snapshot {token.token_id} was already committed")
        return copy.deepcopy(token.state)

    def commit(self, token: SnapshotToken) -> None:
        if token is not self._live:
            raise UsageError(f"snapshot {token.token_id} is not the live snapshot")
        token.live = False
        token.state = None
        self._live = None

    def discard(self) -> None:
        """Drop the live snapshot, if any; used when an inner solve is aborted."""
        if self._live is not None:
            self._live.live = False
            self._live.state = None
            self._live = None
