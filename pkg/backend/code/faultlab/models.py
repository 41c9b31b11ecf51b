"""Fault plan data model and its text forms."""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

from backend.code.errors import UsageError
from backend.code.runtime.context import CLOCK_UNITS

BITFLIP = "bitflip"
SCALE = "scale"


@dataclass(frozen=True)
class CorruptionModel:
    """
    How one injected element is corrupted.

    bitflip flips `bit` (0 = least significant mantissa bit, 63 = sign), or a
    bit drawn uniformly per injection when `bit` is None. scale multiplies
    the element by `factor`.
    """

    kind: str = BITFLIP
    bit: Optional[int] = None
    factor: Optional[float] = None

    def __post_init__(self):
        if self.kind == BITFLIP:
            if self.bit is not None and not 0 <= self.bit <= 63:
                raise UsageError(f"bit index must lie in [0, 63], got {self.bit}")
            if self.factor is not None:
                raise UsageError("a bitflip model takes no factor")
        elif self.kind == SCALE:
            if self.factor is None or not math.isfinite(self.factor) or self.factor == 1.0:
                raise UsageError(f"scale factor must be finite and differ from 1, got {self.factor}")
            if self.bit is not None:
                raise UsageError("a scale model takes no bit index")
        else:
            raise UsageError(f"unknown corruption model '{self.kind}', expected bitflip or scale")

    @classmethod
    def parse(cls, text: str) -> "CorruptionModel":
        """Parse `bitflip`, `bitflip:BIT` or `scale:FACTOR`."""
        kind, _, argument = str(text).strip().partition(":")
        try:
            if kind == BITFLIP:
                return cls(BITFLIP, bit=int(argument) if argument else None)
            if kind == SCALE:
                return cls(SCALE, factor=float(argument) if argument else None)
        except ValueError as e:
            raise UsageError(f"malformed corruption model '{text}': {e}") from e
        raise UsageError(f"unknown corruption model '{text}', expected bitflip[:BIT] or scale:FACTOR")

    def to_text(self) -> str:
        if self.kind == SCALE:
            return f"scale:{self.factor!r}"
        return BITFLIP if self.bit is None else f"bitflip:{self.bit}"


@dataclass
class FailureEvent:
    """Kill `rank` once its clock in `unit` reaches `trigger`."""

    rank: int
    trigger: int
    unit: str = "spmv"
    fired: bool = False

    def __post_init__(self):
        if self.rank < 0:
            raise UsageError(f"failure rank must be non-negative, got {self.rank}")
        if self.trigger < 0:
            raise UsageError(f"failure trigger must be non-negative, got {self.trigger}")
        if self.unit not in CLOCK_UNITS:
            raise UsageError(f"failure unit must be one of {CLOCK_UNITS}, got '{self.unit}'")


@dataclass(frozen=True)
class FaultPlan:
    """
    Everything injected into one run.

    Triggers are non-decreasing per unit; events sharing a trigger fire
    together and must name distinct ranks. SDC injections are restricted to
    inner SpMV indices in [sdc_start, sdc_stop); sdc_stop None is unbounded.
    """

    sdc_interval: Optional[int] = None
    model: CorruptionModel = field(default_factory=CorruptionModel)
    failure_events: Tuple[FailureEvent, ...] = ()
    seed: int = 0
    sdc_start: int = 0
    sdc_stop: Optional[int] = None

    def __post_init__(self):
        if self.sdc_interval is not None and self.sdc_interval < 1:
            raise UsageError(f"sdc_interval must be at least 1 or none, got {self.sdc_interval}")
        if self.sdc_start < 0:
            raise UsageError(f"sdc_start must be non-negative, got {self.sdc_start}")
        if self.sdc_stop is not None and self.sdc_stop <= self.sdc_start:
            raise UsageError(f"sdc_stop must exceed sdc_start, got [{self.sdc_start}, {self.sdc_stop})")
        if not 0 <= self.seed < 2**64:
            raise UsageError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        events = tuple(self.failure_events)
        object.__setattr__(self, "failure_events", events)
        for unit in CLOCK_UNITS:
            same_unit = [e for e in events if e.unit == unit]
            for earlier, later in zip(same_unit, same_unit[1:]):
                if later.trigger < earlier.trigger:
                    raise UsageError(f"failure triggers must be non-decreasing, got {earlier.trigger} then {later.trigger}")
                if later.trigger == earlier.trigger and later.rank == earlier.rank:
                    raise UsageError(f"rank {later.rank} is scheduled to fail twice at trigger {later.trigger}")

    @property
    def n_failures(self) -> int:
        return len(self.failure_events)

    @property
    def is_null(self) -> bool:
        return self.sdc_interval is None and not self.failure_events

    def in_sdc_window(self, index: int) -> bool:
        return index >= self.sdc_start and (self.sdc_stop is None or index < self.sdc_stop)

    def to_text(self) -> str:
        """Flat key-value block for embedding in an experiment config."""
        events = ",".join(f"{e.rank}@{e.trigger}:{e.unit}" for e in self.failure_events) or "none"
        return "\n".join(
            [
                f"sdc_interval: {self.sdc_interval if self.sdc_interval is not None else 'none'}",
                f"sdc_window: [{self.sdc_start}, {self.sdc_stop if self.sdc_stop is not None else 'none'})",
                f"sdc_model: {self.model.to_text()}",
                f"failure_events: {events}",
                f"seed: {self.seed}",
            ]
        )


def parse_failure_list(text: str, unit: str = "outer") -> Tuple[FailureEvent, ...]:
    """Parse `r@k,r@k,...`; each item may carry its own unit as `r@k:unit`."""
    events = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        rank_text, sep, trigger_text = item.partition("@")
        if not sep:
            raise UsageError(f"malformed failure '{item}', expected RANK@TRIGGER")
        trigger_text, _, item_unit = trigger_text.partition(":")
        try:
            events.append(FailureEvent(int(rank_text), int(trigger_text), item_unit or unit))
        except ValueError as e:
            raise UsageError(f"malformed failure '{item}': {e}") from e
    return tuple(events)
