from __future__ import annotations

from dataclasses import dataclass, replace

from ..thermal import KELVIN
from .base import ControlState, Observation
from .comfort import ComfortSchedule


@dataclass(frozen=True)
class PidState:
    kp: float = 0.4  # 1/K
    ki: float = 0.002  # 1/(K s)
    kd: float = 0.0  # s/K
    integral: float = 0.0  # K s
    prev_error: float | None = None
    out_min: float = 0.0
    out_max: float = 1.0
    anti_windup: bool = True

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be >= 0")
        if not self.out_min < self.out_max:
            raise ValueError("need out_min < out_max")


def pid_step(pid: PidState, setpoint: float, measured: float, dt: float) -> tuple[ControlState, PidState]:
    """One discrete PID update; returns the clamped output and the new controller state.

    Conditional integration: the integral is frozen whenever the output is
    saturated and the error would push it further into saturation.  The
    integral is also bounded so that ``|ki * integral| <= 1``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    error = setpoint - measured
    derivative = 0.0 if pid.prev_error is None else (error - pid.prev_error) / dt
    integral = pid.integral + error * dt
    if pid.ki > 0:
        bound = 1.0 / pid.ki
        integral = min(max(integral, -bound), bound)
    raw = pid.kp * error + pid.ki * integral + pid.kd * derivative
    if pid.anti_windup and ((raw > pid.out_max and error > 0) or (raw < pid.out_min and error < 0)):
        integral = pid.integral
        raw = pid.kp * error + pid.ki * integral + pid.kd * derivative
    out = min(max(raw, pid.out_min), pid.out_max)
    return ControlState(out), replace(pid, integral=integral, prev_error=error)


class PidController:
    """RC1: PID on the measured air temperature against the scheduled setpoint."""

    name = "rc1"

    def __init__(self, schedule: ComfortSchedule, pid: PidState | None = None):
        self.schedule = schedule
        self.pid = pid or PidState()

    def step(self, obs: Observation) -> ControlState:
        out, self.pid = pid_step(
            self.pid, self.schedule.setpoint(obs.timestamp), obs.state.t_air - KELVIN, obs.dt
        )
        return out
