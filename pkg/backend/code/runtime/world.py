"""
Simulated SPMD world: one host thread per logical process.

All runtime state sits behind a single condition variable. Process death is
fail-stop and only ever takes effect at a runtime call boundary, where the
rank's failure triggers are evaluated against its clock.
"""

import contextvars
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple

from backend.code.errors import DoubleArm, InsufficientSpares, RankKilled, UsageError, WorldAborted
from backend.code.runtime.communicator import CommState, Communicator
from backend.code.runtime.context import RankClock, RankContext
from backend.code.structured_logging import rank_context, runtime_logger
from backend.code.utils import config_section

RankProgram = Callable[[RankContext], Any]


class _WorldShutdown(BaseException):
    """Unwinds ranks blocked in the runtime after another rank aborted the world."""


class DeadlockDetected(RuntimeError):
    pass


@dataclass
class _Process:
    pid: int
    clock: RankClock = field(default_factory=RankClock)
    rank: Optional[int] = None
    alive: bool = True
    doomed: bool = False
    activation: Optional[Communicator] = None


class World:
    """
    A group of `n_active` ranks plus `n_spares` warm spares.

    Usage:
        world = World(4, n_spares=1)
        arm(plan, world)              # optional, before spawn
        results = world.spawn(program)
    """

    def __init__(
        self,
        n_active: int,
        n_spares: int = 0,
        deadlock_timeout: Optional[float] = None,
    ):
        if n_active < 1:
            raise UsageError(f"a world needs at least one active rank, got {n_active}")
        if n_spares < 0:
            raise UsageError(f"spare count must be non-negative, got {n_spares}")
        runtime_cfg = config_section("runtime")
        if deadlock_timeout is None:
            deadlock_timeout = float(runtime_cfg.get("deadlock_timeout_seconds", 120))

        self.n_active = n_active
        self.n_spares = n_spares
        self.deadlock_timeout = deadlock_timeout
        self.cond = threading.Condition()

        self._procs = [_Process(pid) for pid in range(n_active + n_spares)]
        for pid in range(n_active):
            self._procs[pid].rank = pid
        self._spare_pool = deque(range(n_active, n_active + n_spares))
        self._initial = CommState(epoch=0, members=range(n_active))
        self._latest = self._initial
        self.epochs: List[int] = [0]

        self.plan = None
        self.failure_events: list = []
        self.kill_count = 0

        self._spawned = False
        self._running = 0
        self._shutdown = False
        self._aborted = False
        self._panics: Dict[int, Tuple[BaseException, str]] = {}
        self._results: Dict[int, Any] = {}

    # ---- configuration -------------------------------------------------

    def arm(self, plan) -> None:
        """Install a fault plan; its failure events become kill triggers."""
        if self.plan is not None:
            raise DoubleArm("a fault plan is already armed on this world")
        if self._spawned:
            raise UsageError("a fault plan must be armed before the world is spawned")
        self.plan = plan
        self.failure_events = [replace(event, fired=False) for event in plan.failure_events]
        for event in self.failure_events:
            if not 0 <= event.rank < self.n_active:
                raise UsageError(f"failure event names rank {event.rank} outside [0, {self.n_active})")

    @property
    def spare_pool(self) -> tuple:
        return tuple(self._spare_pool)

    @property
    def epoch(self) -> int:
        return self._latest.epoch

    # ---- lifecycle -----------------------------------------------------

    def spawn(self, program: RankProgram) -> List[Any]:
        """
        Run `program` on every active rank and park the spares.

        Returns:
            One result per logical rank id, from whichever process held that
            id when the world ended.

        Raises:
            WorldAborted: a rank raised; carries the lowest such rank's cause.
        """
        with self.cond:
            if self._spawned:
                raise UsageError("a world can only be spawned once")
            self._spawned = True
            self._running = self.n_active

        threads = []
        for pid in range(self.n_active + self.n_spares):
            target = self._run_active if pid < self.n_active else self._run_spare
            ctx = contextvars.copy_context()
            thread = threading.Thread(
                target=ctx.run, args=(target, pid, program), name=f"ftlab-pid{pid}", daemon=True
            )
            threads.append(thread)
        runtime_logger.info("world_spawned", n_active=self.n_active, n_spares=self.n_spares)
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        if self._panics:
            rank = min(self._panics)
            cause, diagnostic = self._panics[rank]
            runtime_logger.error(
                "world_aborted", rank=rank, error_type=type(cause).__name__, error_message=str(cause)
            )
            raise WorldAborted(rank, cause, diagnostic)
        runtime_logger.info("world_finished", epoch=self.epoch, kill_count=self.kill_count)
        return [self._results.get(rank) for rank in range(self.n_active)]

    def _run_active(self, pid: int, program: RankProgram) -> None:
        comm = Communicator(self, self._initial, pid)
        ctx = RankContext(world=self, pid=pid, comm=comm, clock=self._procs[pid].clock)
        self._execute(ctx, program)

    def _run_spare(self, pid: int, program: RankProgram) -> None:
        activation = self.wait_for_activation(pid)
        if activation is None:
            runtime_logger.debug("spare_released", pid=pid)
            return
        comm, rank = activation
        ctx = RankContext(
            world=self, pid=pid, comm=comm, clock=self._procs[pid].clock, activated=True
        )
        self._execute(ctx, program)

    def _execute(self, ctx: RankContext, program: RankProgram) -> None:
        proc = self._procs[ctx.pid]
        rank_context.set(ctx.rank)
        try:
            result = program(ctx)
            with self.cond:
                self._results[ctx.rank] = result
        except RankKilled:
            with self.cond:
                proc.alive = False
            runtime_logger.info("rank_died", pid=ctx.pid, rank=proc.rank)
        except _WorldShutdown:
            pass
        except BaseException as exc:
            with self.cond:
                rank = proc.rank if proc.rank is not None else ctx.pid
                diagnostic = "deadlock" if isinstance(exc, DeadlockDetected) else ""
                self._panics.setdefault(rank, (exc, diagnostic))
                self._aborted = True
            runtime_logger.error(
                "rank_panicked", pid=ctx.pid, error_type=type(exc).__name__, error_message=str(exc)
            )
        finally:
            with self.cond:
                self._running -= 1
                if self._running == 0:
                    self._shutdown = True
                self.cond.notify_all()

    def wait_for_activation(self, pid: int) -> Optional[Tuple[Communicator, int]]:
        """
        Park a spare until shrink_and_substitute selects it.

        Returns:
            (repaired communicator, adopted rank id), or None if the world
            ended first
        """
        proc = self._procs[pid]
        with self.cond:
            while proc.activation is None and not self._shutdown:
                self.cond.wait()
            if proc.activation is None:
                return None
            return proc.activation, proc.rank

    # ---- failure machinery (callers hold self.cond) --------------------

    def clock(self) -> float:
        return time.monotonic()

    def is_alive(self, pid: int) -> bool:
        return self._procs[pid].alive

    def enter(self, pid: int, op: str) -> None:
        """Runtime call boundary: fire due triggers, then honour a pending kill."""
        if self._aborted:
            raise _WorldShutdown()
        proc = self._procs[pid]
        for event in self.failure_events:
            if not event.fired and event.rank == proc.rank and proc.clock.value(event.unit) >= event.trigger:
                event.fired = True
                runtime_logger.info(
                    "failure_triggered", rank=event.rank, unit=event.unit, trigger=event.trigger, op=op
                )
                self._doom(proc)
        if proc.doomed:
            raise RankKilled(f"rank {proc.rank} (pid {pid}) killed")

    def wait(self, pid: int, op: str, started: float) -> None:
        """Block on the condition; unwinds on abort, kill or deadlock timeout."""
        if self._aborted:
            raise _WorldShutdown()
        if self._procs[pid].doomed:
            raise RankKilled(f"rank {self._procs[pid].rank} (pid {pid}) killed while blocked in {op}")
        remaining = self.deadlock_timeout - (self.clock() - started)
        if remaining <= 0:
            raise DeadlockDetected(
                f"rank {self._procs[pid].rank} blocked in {op} for more than {self.deadlock_timeout}s"
            )
        self.cond.wait(timeout=remaining)

    def _doom(self, proc: _Process) -> None:
        if proc.alive and not proc.doomed:
            proc.doomed = True
            self.kill_count += 1
            self.cond.notify_all()

    def kill(self, rank: int) -> None:
        """Kill the process currently holding `rank`; a no-op if it is already dead."""
        with self.cond:
            self._doom(self._procs[self._latest.members[rank]])

    def substitute(self, state: CommState, dead: FrozenSet[int]):
        """
        Build the next generation of `state` with spares in place of `dead`.

        Returns:
            (new CommState, None) or (None, factory of InsufficientSpares)
        """
        if len(dead) > len(self._spare_pool):
            available = len(self._spare_pool)
            return None, lambda: InsufficientSpares(dead, available)
        members = list(state.members)
        for rank in sorted(dead):
            pid = self._spare_pool.popleft()
            members[rank] = pid
            spare = self._procs[pid]
            spare.rank = rank
        new_state = CommState(epoch=state.epoch + 1, members=members, substituted=dead)
        for rank in sorted(dead):
            spare = self._procs[new_state.members[rank]]
            spare.activation = Communicator(self, new_state, rank)
            self._running += 1
        state.revoked = True
        self._latest = new_state
        self.epochs.append(new_state.epoch)
        runtime_logger.info(
            "communicator_repaired",
            epoch=new_state.epoch,
            substituted=sorted(dead),
            spares_left=len(self._spare_pool),
        )
        self.cond.notify_all()
        return new_state, None


def spawn_world(n_active: int, n_spares: int, program: RankProgram, plan=None, **world_kwargs) -> List[Any]:
    """Create a world, arm `plan` if given and run `program` on it."""
    world = World(n_active, n_spares, **world_kwargs)
    if plan is not None:
        world.arm(plan)
    return world.spawn(program)
