"""
Tests for the simulated SPMD runtime: collectives, point-to-point, fail-stop
kills, revoke / agree / shrink_and_substitute and world lifecycle.
"""

import numpy as np
import pytest

from backend.code.errors import (
    CommError,
    CommErrorKind,
    DoubleArm,
    InsufficientSpares,
    LockstepViolation,
    UsageError,
    WorldAborted,
)
from backend.code.faultlab.models import FailureEvent, FaultPlan
from backend.code.runtime import Agreement, RankClock, World, spawn_world, tree_reduce
from backend.code.runtime import communicator as communicator_module


def kill_plan(*ranks, trigger=0):
    """Kill each rank when it reaches outer iteration `trigger`."""
    return FaultPlan(failure_events=tuple(FailureEvent(r, trigger, "outer") for r in ranks))


class TestTreeReduce:
    """Fixed-tree reduction."""

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_scalar_ops(self):
        assert tree_reduce([1, 2, 3, 4, 5], "sum") == 15
        assert tree_reduce([1.0, 7.0, 3.0], "max") == 7.0
        assert tree_reduce([4, -2, 9], "min") == -2
        assert tree_reduce([True, True, False], "land") is False
        assert tree_reduce([True, True], "land") is True

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_pairing_is_fixed(self):
        values = [0.1, 0.2, 0.3, 0.4, 0.5]
        assert tree_reduce(values, "sum") == ((0.1 + 0.2) + (0.3 + 0.4)) + 0.5

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_elementwise_arrays(self):
        result = tree_reduce([np.array([1, 5]), np.array([4, 2])], "max")
        np.testing.assert_array_equal(result, [4, 5])

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            tree_reduce([], "sum")


class TestCollectives:
    """Healthy-path collectives and messaging."""

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_allreduce_and_allgather(self, run_world):
        def program(ctx):
            comm = ctx.comm
            comm.barrier()
            return (
                comm.allreduce(ctx.rank + 1, "sum"),
                comm.allreduce(float(ctx.rank), "max"),
                comm.allreduce(ctx.rank, "min"),
                comm.allgather(ctx.rank * 10),
            )

        results, _ = run_world(4, program)
        assert results == [(10, 3.0, 0, [0, 10, 20, 30])] * 4

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_allgather_results_are_private_copies(self, run_world):
        def program(ctx):
            blocks = ctx.comm.allgather(np.full(2, float(ctx.rank)))
            local = np.array(blocks[0], copy=True)
            local += 100.0
            return [b.tolist() for b in blocks]

        results, _ = run_world(2, program)
        assert results[0] == results[1] == [[0.0, 0.0], [1.0, 1.0]]

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_send_recv_fifo(self, run_world):
        def program(ctx):
            comm = ctx.comm
            if ctx.rank == 0:
                comm.send(1, 7, b"first")
                comm.send(1, 7, b"second")
                return None
            return [comm.recv(0, 7), comm.recv(0, 7)]

        results, _ = run_world(2, program)
        assert results[1] == [b"first", b"second"]

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_fingerprints_match_in_lockstep(self, run_world):
        def program(ctx):
            ctx.comm.barrier()
            ctx.comm.allreduce(1.0)
            return ctx.comm.fingerprint

        results, _ = run_world(3, program)
        assert len(set(results)) == 1

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_lockstep_violation(self, run_world):
        def program(ctx):
            try:
                if ctx.rank == 0:
                    ctx.comm.barrier()
                else:
                    ctx.comm.allgather(1)
            except LockstepViolation:
                return "violation"
            return "ok"

        results, _ = run_world(2, program)
        assert results == ["violation", "violation"]

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_trace_line_format(self, run_world, mocker):
        trace = mocker.patch.object(communicator_module, "trace_logger")
        trace.disabled = False

        def program(ctx):
            ctx.comm.barrier()

        run_world(1, program)
        trace.info.assert_called_with("0 0 barrier 0 8 ok")


class TestFailures:
    """Fail-stop kills and the recovery primitives."""

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_killed_rank_surfaces_as_proc_failed(self, run_world):
        def program(ctx):
            ctx.clock.outer = 0
            try:
                ctx.comm.barrier()
            except CommError as e:
                return e.kind, sorted(e.ranks)
            return "ok"

        results, world = run_world(3, program, plan=kill_plan(1))
        assert results[0] == results[2] == (CommErrorKind.PROC_FAILED, [1])
        assert results[1] is None
        assert world.kill_count == 1

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_recv_from_dead_rank(self, run_world):
        def program(ctx):
            ctx.clock.outer = 0
            if ctx.rank == 1:
                ctx.comm.barrier()
                return None
            try:
                ctx.comm.recv(1, 3)
            except CommError as e:
                return e.kind
            return "ok"

        results, _ = run_world(2, program, plan=kill_plan(1))
        assert results[0] is CommErrorKind.PROC_FAILED

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_revoke_interrupts_and_agree_still_works(self, run_world):
        def program(ctx):
            comm = ctx.comm
            outcome = "ok"
            if ctx.rank == 0:
                comm.revoke()
                comm.revoke()
            else:
                try:
                    comm.barrier()
                except CommError as e:
                    outcome = e.kind
            agreement = comm.agree(True)
            return outcome, agreement, comm.revoked

        results, _ = run_world(3, program)
        assert results[0] == ("ok", Agreement(True), True)
        assert results[1] == results[2] == (CommErrorKind.REVOKED, Agreement(True), True)

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_agree_is_an_and(self, run_world):
        def program(ctx):
            return bool(ctx.comm.agree(ctx.rank != 2))

        results, _ = run_world(4, program)
        assert results == [False] * 4

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_agree_reports_dead_ranks(self, run_world):
        def program(ctx):
            ctx.clock.outer = 0
            agreement = ctx.comm.agree(True)
            return agreement.value, sorted(agreement.failed)

        results, _ = run_world(3, program, plan=kill_plan(2))
        assert results[0] == results[1] == (True, [2])

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_shrink_and_substitute_activates_spare(self, run_world):
        def program(ctx):
            comm = ctx.comm
            if not ctx.activated:
                ctx.clock.outer = 0
                try:
                    comm.barrier()
                except CommError:
                    comm.revoke()
                    comm.agree(True)
                    comm = ctx.comm = comm.shrink_and_substitute()
            comm.barrier()
            return comm.epoch, comm.size, sorted(comm.substituted), comm.revoked

        results, world = run_world(3, program, n_spares=1, plan=kill_plan(1))
        assert results == [(1, 3, [1], False)] * 3
        assert world.epochs == [0, 1]
        assert world.spare_pool == ()

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_insufficient_spares(self, run_world):
        def program(ctx):
            ctx.clock.outer = 0
            try:
                ctx.comm.barrier()
            except CommError:
                ctx.comm.revoke()
                try:
                    ctx.comm.shrink_and_substitute()
                except InsufficientSpares as e:
                    return sorted(e.failed), e.available
            return "ok"

        results, _ = run_world(3, program, plan=kill_plan(0, 2))
        assert results[1] == ([0, 2], 0)

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_unused_spares_are_released(self, run_world):
        results, world = run_world(2, lambda ctx: ctx.rank, n_spares=2)
        assert results == [0, 1]
        assert world.spare_pool == (2, 3)


class TestWorldLifecycle:
    """Arming, aborts and the deadlock guard."""

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_rank_error_aborts_world(self):
        def program(ctx):
            if ctx.rank == 2:
                raise ValueError("boom")
            ctx.comm.barrier()

        with pytest.raises(WorldAborted) as info:
            spawn_world(3, 0, program, deadlock_timeout=10.0)
        assert info.value.rank == 2
        assert isinstance(info.value.cause, ValueError)

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_deadlock_guard(self):
        def program(ctx):
            if ctx.rank == 0:
                ctx.comm.recv(1, 9)

        with pytest.raises(WorldAborted) as info:
            spawn_world(2, 0, program, deadlock_timeout=0.3)
        assert info.value.diagnostic == "deadlock"

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_double_arm(self):
        world = World(2)
        world.arm(FaultPlan())
        with pytest.raises(DoubleArm):
            world.arm(FaultPlan())

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_arm_after_spawn(self):
        world = World(1)
        world.spawn(lambda ctx: None)
        with pytest.raises(UsageError):
            world.arm(FaultPlan())

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_arm_rejects_unknown_rank(self):
        with pytest.raises(UsageError):
            World(2).arm(kill_plan(5))

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_kill_by_rank(self, run_world):
        def program(ctx):
            if ctx.rank == 0:
                ctx.world.kill(1)
                return None
            ctx.comm.barrier()
            return "survived"

        results, world = run_world(2, program)
        assert results[1] is None
        assert world.kill_count == 1

    @pytest.mark.unit
    @pytest.mark.runtime
    def test_rank_clock_units(self):
        clock = RankClock(outer=3, spmv=10, inner_spmv=7)
        assert clock.value("outer") == 3
        assert clock.as_list() == [3, 10, 7]
        with pytest.raises(UsageError):
            clock.value("hours")
