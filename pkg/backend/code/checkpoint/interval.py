import math

from backend.code.errors import UsageError


def young_interval(checkpoint_cost: float, mtbf: float) -> float:
    """Young's first-order optimal time between checkpoints: sqrt(2 * cost * MTBF)."""
    if checkpoint_cost < 0 or mtbf <= 0:
        raise UsageError(f"need checkpoint_cost >= 0 and mtbf > 0, got {checkpoint_cost}, {mtbf}")
    return math.sqrt(2.0 * checkpoint_cost * mtbf)


def outer_checkpoint_interval(checkpoint_cost: float, mtbf: float, outer_iteration_cost: float) -> int:
    """
    Young's interval expressed in whole outer iterations, at least 1.

    All three arguments share one unit (seconds, or SpMV counts).
    """
    if outer_iteration_cost <= 0:
        raise UsageError(f"outer_iteration_cost must be positive, got {outer_iteration_cost}")
    return max(1, round(young_interval(checkpoint_cost, mtbf) / outer_iteration_cost))


def parse_checkpoint_interval(value) -> int:
    """
    An outer checkpoint interval given as a count or as `young:COST:MTBF`.

    The Young form takes the checkpoint cost and the mean time between
    failures in outer iterations.

    Raises:
        UsageError: malformed text or out-of-range values
    """
    text = str(value).strip()
    kind, sep, argument = text.partition(":")
    if not sep:
        try:
            return int(text)
        except ValueError as e:
            raise UsageError(f"checkpoint interval must be an integer or young:COST:MTBF, got '{text}'") from e
    if kind != "young":
        raise UsageError(f"unknown checkpoint interval '{text}', expected an integer or young:COST:MTBF")
    cost_text, _, mtbf_text = argument.partition(":")
    try:
        cost, mtbf = float(cost_text), float(mtbf_text)
    except ValueError as e:
        raise UsageError(f"malformed checkpoint interval '{text}', expected young:COST:MTBF") from e
    return outer_checkpoint_interval(cost, mtbf, 1.0)
