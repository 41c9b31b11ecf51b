import math
from typing import Iterable, List, Sequence

import numpy as np

from backend.code.errors import UsageError
from backend.code.faultlab.models import FailureEvent


def exponential_triggers(mean_interval: float, uniforms: Sequence[float]) -> List[int]:
    """
    Inverse-CDF failure times for Exp(1 / mean_interval).

    Each uniform u in (0, 1] gives a gap ceil(-mean * ln u), at least 1; gaps
    are cumulated into triggers.
    """
    if mean_interval <= 0:
        raise UsageError(f"mean_interval must be positive, got {mean_interval}")
    triggers, total = [], 0
    for u in uniforms:
        if not 0 < u <= 1:
            raise UsageError(f"uniform draws must lie in (0, 1], got {u}")
        total += max(1, math.ceil(-mean_interval * math.log(u)))
        triggers.append(total)
    return triggers


def plan_failures(
    mean_interval: float,
    n_failures: int,
    candidate_ranks: Iterable[int],
    seed: int,
    unit: str = "spmv",
) -> List[FailureEvent]:
    """Seeded exponential failure schedule; ranks drawn without replacement."""
    if n_failures < 0:
        raise UsageError(f"n_failures must be non-negative, got {n_failures}")
    candidates = sorted(set(candidate_ranks))
    if n_failures > len(candidates):
        raise UsageError(f"cannot fail {n_failures} distinct ranks out of {len(candidates)} candidates")
    if n_failures == 0:
        return []
    rng = np.random.default_rng(seed)
    uniforms = 1.0 - rng.random(n_failures)
    ranks = rng.choice(candidates, size=n_failures, replace=False)
    triggers = exponential_triggers(mean_interval, uniforms)
    return [FailureEvent(int(rank), trigger, unit) for rank, trigger in zip(ranks, triggers)]
