"""
Silent data corruption of inner-solve SpMV outputs.

Injection decisions are drawn from a generator seeded with (plan seed,
injection index), so every rank draws the same target rank, element and bit
without communicating.
"""

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from backend.code.errors import UsageError
from backend.code.faultlab.models import SCALE, FaultPlan
from backend.code.linalg.types import DenseVector, as_array
from backend.code.structured_logging import faultlab_logger


def flip_bit(value: float, bit: int) -> float:
    """Flip one bit of the IEEE-754 binary64 encoding of `value`."""
    if not 0 <= bit <= 63:
        raise UsageError(f"bit index must lie in [0, 63], got {bit}")
    word = np.array([value], dtype=np.float64).view(np.uint64)
    word ^= np.uint64(1) << np.uint64(bit)
    return float(word.view(np.float64)[0])


@dataclass(frozen=True)
class Injection:
    index: int
    target_rank: int
    element: int
    bit: Optional[int]
    before: float
    after: float


def draw_injection(plan: FaultPlan, index: int, block_sizes: Sequence[int]) -> Tuple[int, int, Optional[int]]:
    """(target rank, local element, bit) for injection `index`; bit is None for scale."""
    candidates = [rank for rank, size in enumerate(block_sizes) if size > 0]
    if not candidates:
        raise UsageError("no rank owns any rows to corrupt")
    rng = np.random.default_rng([plan.seed, index])
    target = candidates[int(rng.integers(len(candidates)))]
    element = int(rng.integers(block_sizes[target]))
    if plan.model.kind == SCALE:
        return target, element, None
    bit = plan.model.bit if plan.model.bit is not None else int(rng.integers(64))
    return target, element, bit


def sdc_hook(y_block, index: int, plan: FaultPlan, rank: int, block_sizes: Sequence[int]):
    """
    Corrupt one element of the distributed SpMV output when `index` is a
    multiple of the plan's interval inside the plan's SDC window.

    Returns:
        (possibly corrupted block, Injection or None). The Injection is
        returned on every rank, including those whose block is untouched.
    """
    if plan.sdc_interval is None or index <= 0 or index % plan.sdc_interval or not plan.in_sdc_window(index):
        return y_block, None
    target, element, bit = draw_injection(plan, index, block_sizes)
    values = as_array(y_block)
    before = after = float("nan")
    if rank == target:
        values = np.array(values, copy=True)
        before = float(values[element])
        after = before * plan.model.factor if bit is None else flip_bit(before, bit)
        values[element] = after
        offset = y_block.global_offset if isinstance(y_block, DenseVector) else 0
        y_block = DenseVector(values, offset)
    return y_block, Injection(index, target, element, bit, before, after)


class SdcInjector:
    """Per-rank hook on the inner SpMV path; refuses to run outside the inner phase."""

    def __init__(self, plan: FaultPlan, block_sizes: Sequence[int]):
        self.plan = plan
        self.block_sizes = list(block_sizes)
        self.pending: Optional[Injection] = None
        self._inner = False

    @property
    def enabled(self) -> bool:
        return self.plan.sdc_interval is not None

    @contextmanager
    def inner_phase(self):
        self._inner = True
        try:
            yield self
        finally:
            self._inner = False

    def claim(self) -> Optional[Injection]:
        """The latest injection not yet matched to a detection; clears it."""
        injection, self.pending = self.pending, None
        return injection

    def __call__(self, y_block, index: int, rank: int):
        if not self._inner:
            raise UsageError("SDC injection attempted outside the inner solve")
        y_block, injection = sdc_hook(y_block, index, self.plan, rank, self.block_sizes)
        if injection is not None:
            self.pending = injection
            if rank == injection.target_rank:
                faultlab_logger.debug(
                    "sdc_injected",
                    index=index,
                    element=injection.element,
                    bit=injection.bit,
                    before=injection.before,
                    after=injection.after,
                )
        return y_block, injection
