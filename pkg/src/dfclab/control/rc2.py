from __future__ import annotations

from ..thermal import KELVIN, ZoneModel
from .base import ControlState, Observation, clamp_unit
from .comfort import ComfortSchedule

INCREMENT = 0.05


def rc2_step(current: ControlState | float, measured: float, setpoint: float, band: float) -> ControlState:
    """Incremental rule: +0.05 below setpoint, -0.05 above setpoint + band, else hold."""
    n = current.n_set if isinstance(current, ControlState) else float(current)
    if measured < setpoint:
        n += INCREMENT
    elif measured > setpoint + band:
        n -= INCREMENT
    return ControlState(clamp_unit(n))


class Rc2Controller:
    """RC2: the incremental rule applied to a simulated look-ahead temperature.

    The zone model is rolled ``lookahead`` steps forward at the current
    speed over the forecast weather; the end temperature is compared with the
    setpoint in force at that time.
    """

    name = "rc2"

    def __init__(self, schedule: ComfortSchedule, model: ZoneModel, lookahead: int = 1, n_init: float = 0.0):
        if lookahead < 1:
            raise ValueError("lookahead must be >= 1")
        self.schedule = schedule
        self.model = model
        self.lookahead = lookahead
        self.n_set = clamp_unit(n_init)

    def predicted_temperature(self, obs: Observation) -> tuple[float, float]:
        """Look-ahead air temperature (deg C) and the time it refers to."""
        horizon = list(obs.forecast[: self.lookahead])
        trace = self.model.simulate(obs.state, horizon, [self.n_set] * len(horizon), obs.dt)
        return trace.outputs[-1].next_state.t_air - KELVIN, obs.timestamp + len(horizon) * obs.dt

    def sync(self, n_set: float) -> None:
        """Adopt the speed actually applied (when another controller acted)."""
        self.n_set = clamp_unit(n_set)

    def step(self, obs: Observation) -> ControlState:
        temp, when = self.predicted_temperature(obs)
        out = rc2_step(self.n_set, temp, self.schedule.setpoint(when), self.schedule.band)
        self.n_set = out.n_set
        return out
