from .base import ControlPlan, ControlState, Controller, Observation, clamp_unit
from .comfort import ComfortSchedule, comfort_violated
from .dfc import (
    DfcConfig,
    DfcController,
    PlanContext,
    PlannerError,
    PlanResult,
    WarmupError,
    dfc_plan,
    dfc_step,
    track_reference,
)
from .pid import PidController, PidState, pid_step
from .rc2 import Rc2Controller, rc2_step

__all__ = [
    "ComfortSchedule",
    "ControlPlan",
    "ControlState",
    "Controller",
    "DfcConfig",
    "DfcController",
    "Observation",
    "PidController",
    "PidState",
    "PlanContext",
    "PlanResult",
    "PlannerError",
    "Rc2Controller",
    "WarmupError",
    "clamp_unit",
    "comfort_violated",
    "dfc_plan",
    "dfc_step",
    "pid_step",
    "rc2_step",
    "track_reference",
]
