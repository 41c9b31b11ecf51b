"""Deterministic fault injection: SpMV output corruption and scheduled rank kills."""

from backend.code.faultlab.arm import arm
from backend.code.faultlab.injector import Injection, SdcInjector, draw_injection, flip_bit, sdc_hook
from backend.code.faultlab.models import CorruptionModel, FailureEvent, FaultPlan, parse_failure_list
from backend.code.faultlab.schedule import exponential_triggers, plan_failures

__all__ = [
    "CorruptionModel",
    "FailureEvent",
    "FaultPlan",
    "Injection",
    "SdcInjector",
    "arm",
    "draw_injection",
    "exponential_triggers",
    "flip_bit",
    "parse_failure_list",
    "plan_failures",
    "sdc_hook",
]
