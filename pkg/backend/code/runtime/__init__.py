"""Simulated SPMD message-passing runtime with fail-stop ranks and warm spares."""

from backend.code.runtime.communicator import Agreement, CommState, Communicator, ReduceOp, tree_reduce
from backend.code.runtime.context import CLOCK_UNITS, RankClock, RankContext
from backend.code.runtime.world import World, spawn_world

__all__ = [
    "Agreement",
    "CLOCK_UNITS",
    "CommState",
    "Communicator",
    "RankClock",
    "RankContext",
    "ReduceOp",
    "World",
    "spawn_world",
    "tree_reduce",
]
