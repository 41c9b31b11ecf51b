"""
Exception hierarchy for the multiresilience lab.

Every error the lab raises on purpose derives from FtLabError so callers can
separate lab aborts from programming errors. Process death is the exception
to that rule: RankKilled derives from BaseException so that solver code
catching Exception never swallows a fail-stop.
"""

from enum import Enum
from typing import Iterable, Optional


class FtLabError(Exception):
    """Base exception for all lab errors."""
    pass


class UsageError(FtLabError, ValueError):
    """API contract or configuration violation."""
    pass


class LengthMismatch(UsageError):
    """Operand lengths do not agree."""
    pass


class DimensionOverflow(UsageError):
    """Problem dimensions exceed the index type."""
    pass


class LockstepViolation(UsageError):
    """Ranks reached one collective through different call sites."""
    pass


class CommErrorKind(str, Enum):
    PROC_FAILED = "ProcFailed"
    REVOKED = "Revoked"


class CommError(FtLabError):
    """
    Failure surfaced by a runtime operation.

    ProcFailed always names at least one dead rank; Revoked may carry the
    ranks known dead by whoever revoked, or none.
    """

    def __init__(self, kind: CommErrorKind, ranks: Iterable[int] = ()):
        self.kind = CommErrorKind(kind)
        self.ranks = frozenset(ranks)
        if self.kind is CommErrorKind.PROC_FAILED and not self.ranks:
            raise UsageError("ProcFailed requires at least one failed rank")
        super().__init__(f"{self.kind.value}: ranks={sorted(self.ranks)}")

    @property
    def proc_failed(self) -> bool:
        return self.kind is CommErrorKind.PROC_FAILED

    @classmethod
    def proc_failed_error(cls, ranks: Iterable[int]) -> "CommError":
        return cls(CommErrorKind.PROC_FAILED, ranks)

    @classmethod
    def revoked_error(cls, ranks: Iterable[int] = ()) -> "CommError":
        return cls(CommErrorKind.REVOKED, ranks)


class InsufficientSpares(FtLabError):
    """More failures since the last repair than spares left in the pool."""

    def __init__(self, failed: Iterable[int], available: int):
        self.failed = frozenset(failed)
        self.available = available
        super().__init__(
            f"{len(self.failed)} failed ranks {sorted(self.failed)} but only {available} spares left"
        )


class HolderDead(FtLabError):
    """The neighbor holding a needed checkpoint failed as well."""

    def __init__(self, owner: int, holder: int):
        self.owner = owner
        self.holder = holder
        super().__init__(f"checkpoint of rank {owner} was held by rank {holder}, which also failed")


class ChecksumMismatch(FtLabError):
    """A checkpoint payload does not match its recorded digest."""
    pass


class SdcDetected(FtLabError):
    """
    Raised inside the inner solve when a detector fires.

    `partial` is the inner least-squares solution built from the steps that
    completed before the offending one, used once the restart budget is spent.
    """

    def __init__(self, verdict, partial=None, step: int = 0):
        self.verdict = verdict
        self.partial = partial
        self.step = step
        super().__init__(f"silent data corruption detected at inner step {step}: {verdict.detail}")


class BudgetExhausted(FtLabError):
    """No convergence within the outer iteration budget."""

    def __init__(self, outer_iters: int, relative_residual: float):
        self.outer_iters = outer_iters
        self.relative_residual = relative_residual
        super().__init__(
            f"no convergence after {outer_iters} outer iterations (relative residual {relative_residual:.3e})"
        )


class DoubleArm(FtLabError):
    """A fault plan was armed twice on the same world."""
    pass


class ConfigMismatch(FtLabError):
    """Reports being compared do not share a problem and rank configuration."""
    pass


class WorldAborted(FtLabError):
    """A simulated world ended because one of its ranks raised."""

    def __init__(self, rank: Optional[int], cause: BaseException, diagnostic: str = ""):
        self.rank = rank
        self.cause = cause
        self.diagnostic = diagnostic
        message = f"world aborted by rank {rank}: {type(cause).__name__}: {cause}"
        if diagnostic:
            message += f" ({diagnostic})"
        super().__init__(message)


class RankKilled(BaseException):
    """Unwinds a simulated process that has been killed."""
    pass
