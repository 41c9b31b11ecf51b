from backend.code.faultlab.models import FaultPlan
from backend.code.structured_logging import faultlab_logger


def arm(plan: FaultPlan, world) -> None:
    """
    Register `plan` with a world before it is spawned.

    Failure events become kill triggers; the solver picks the SDC hook up
    from `world.plan` on its inner SpMV path.

    Raises:
        DoubleArm: the world already carries a plan
    """
    world.arm(plan)
    faultlab_logger.info(
        "fault_plan_armed",
        sdc_interval=plan.sdc_interval,
        sdc_window=(plan.sdc_start, plan.sdc_stop),
        model=plan.model.to_text(),
        failures=[(e.rank, e.trigger, e.unit) for e in plan.failure_events],
        seed=plan.seed,
    )
