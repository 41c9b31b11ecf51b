from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Optional

from backend.code.errors import UsageError

if TYPE_CHECKING:
    from backend.code.runtime.communicator import Communicator
    from backend.code.runtime.world import World

CLOCK_UNITS = ("outer", "spmv", "inner_spmv")


@dataclass
class RankClock:
    """
    Progress counters of one logical rank.

    Failure triggers compare against these. `outer` is the index of the outer
    iteration in progress, -1 before the first one.
    """

    outer: int = -1
    spmv: int = 0
    inner_spmv: int = 0

    def value(self, unit: str) -> int:
        if unit not in CLOCK_UNITS:
            raise UsageError(f"unknown clock unit '{unit}', expected one of {CLOCK_UNITS}")
        return getattr(self, unit)

    def as_list(self) -> list:
        return [self.outer, self.spmv, self.inner_spmv]


@dataclass
class RankContext:
    """What a rank program receives: its communicator, clock and world."""

    world: "World"
    pid: int
    comm: "Communicator"
    clock: RankClock
    activated: bool = False

    @property
    def rank(self) -> int:
        return self.comm.rank

    @property
    def size(self) -> int:
        return self.comm.size

    @property
    def plan(self) -> Optional[Any]:
        return self.world.plan
