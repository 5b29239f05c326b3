"""Dynamic feedforward control: a boosted indoor-temperature reference refined through simulation.

Each planning call rolls the zone model over the forecast horizon.  When the
comfort band would be left, a constant reference is boosted round by round:
the reference is tracked through the simulator, the realised temperatures
are compared with the scheduled setpoints, and a small regression tree fitted
to those residuals (over horizon position, leading weather and lagged
indoor/speed history) updates the reference.  An update is kept only if the
simulated loss does not rise (step halving otherwise).  The speeds from the
last accepted simulation pass are the plan.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..gbdt import fit_tree, get_loss, init_constant, pseudo_residuals
from ..thermal import KELVIN, ThermalState, ZoneModel
from ..weather import WeatherRecord
from .base import ControlPlan, ControlState, Observation, clamp_unit
from .comfort import ComfortSchedule, comfort_violated


class PlannerError(RuntimeError):
    pass


class WarmupError(RuntimeError):
    """Not enough lag history yet; seed the first steps with another controller (RC2)."""


@dataclass(frozen=True)
class DfcConfig:
    horizon: int = 12
    n_rounds: int = 12
    learning_rate: float = 0.5
    loss: str = "squared"
    lag_count: int = 6
    tracker_gain: float = 1.0
    max_leaves: int = 4
    min_samples_leaf: int = 1
    max_backtracks: int = 3
    check_monotone: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.lag_count < 1:
            raise ValueError("lag_count must be >= 1")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be >= 0")
        if not 0 < self.tracker_gain <= 1:
            raise ValueError("tracker_gain must be in (0, 1]")
        get_loss(self.loss)


@dataclass(frozen=True)
class PlanContext:
    """Lagged history, oldest first: indoor air (deg C) and applied speeds."""

    indoor: tuple[float, ...]
    n_set: tuple[float, ...]

    @property
    def current(self) -> float:
        return self.n_set[-1]


@dataclass
class PlanResult:
    plan: ControlPlan
    triggered: bool
    reference: np.ndarray | None = None
    realized: np.ndarray | None = None
    losses: list[float] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        """Accepted boosting updates (``losses`` also holds the initial rollout)."""
        return max(len(self.losses) - 1, 0)


def plan_features(context: PlanContext, forecast: Sequence[WeatherRecord]) -> np.ndarray:
    """Leading and lagging inputs, one row per horizon step."""
    lag = np.concatenate([context.indoor, context.n_set])
    rows = [np.concatenate([[k, rec.temp], lag]) for k, rec in enumerate(forecast)]
    return np.array(rows)


def track_reference(
    model: ZoneModel,
    state: ThermalState,
    forecast: Sequence[WeatherRecord],
    reference: np.ndarray,
    dt: float,
    gain: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the horizon with a one-step inverse tracker.

    Each step's speed solves the air-node balance for the end-of-step
    temperature ``t + gain * (ref - t)``, clamped to [0, 1].  Returns the
    speeds and the realised air temperatures (deg C).
    """
    controls = np.empty(len(forecast))
    temps = np.empty(len(forecast))
    s = state
    for k, rec in enumerate(forecast):
        a, b = model.air_response(s, rec, dt)
        goal = s.t_air + gain * (reference[k] + KELVIN - s.t_air)
        n = clamp_unit((goal - a) / b) if b > 0 else 0.0
        s = model.step(s, rec, n, dt).next_state
        controls[k] = n
        temps[k] = s.t_air - KELVIN
    return controls, temps


def dfc_plan(
    context: PlanContext,
    forecast: Sequence[WeatherRecord],
    state: ThermalState,
    cfg: DfcConfig,
    model: ZoneModel,
    schedule: ComfortSchedule,
    dt: float,
) -> PlanResult:
    H = cfg.horizon
    if len(forecast) != H:
        raise ValueError(f"forecast has {len(forecast)} steps, horizon is {H}")
    forecast = list(forecast)
    ends = [rec.timestamp + dt for rec in forecast]
    targets = np.array([schedule.setpoint(t) for t in ends])

    hold = [context.current] * H
    held = model.simulate(state, forecast, hold, dt).t_air - KELVIN
    if cfg.n_rounds == 0 or not comfort_violated(held, schedule, ends):
        return PlanResult(plan=ControlPlan(hold), triggered=False, realized=held)

    loss = get_loss(cfg.loss)
    X = plan_features(context, forecast)
    reference = np.full(H, init_constant(targets, loss))

    def rollout(ref: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        controls, realized = track_reference(model, state, forecast, ref, dt, cfg.tracker_gain)
        if not np.all(np.isfinite(realized)):
            raise PlannerError("non-finite temperatures in planner rollout")
        return controls, realized, float(np.sum(loss.evaluate(targets, realized)))

    controls, realized, current = rollout(reference)
    losses = [current]
    for _ in range(cfg.n_rounds):
        residuals = pseudo_residuals(targets, realized, loss)
        if not np.all(np.isfinite(residuals)):
            raise PlannerError("non-finite pseudo-residuals")
        prior = realized
        tree = fit_tree(
            X,
            residuals,
            max_leaves=cfg.max_leaves,
            min_samples_leaf=cfg.min_samples_leaf,
            leaf_value=lambda rows: loss.leaf_value(targets[rows], prior[rows]),
        )
        update = tree.predict(X)
        # The tracker clamps speeds, so a full step can overshoot; halve until
        # the simulated loss does not rise, or give up on this direction.
        eta = cfg.learning_rate
        for _ in range(cfg.max_backtracks + 1):
            candidate = reference + eta * update
            c_controls, c_realized, c_loss = rollout(candidate)
            if c_loss <= current:
                break
            eta *= 0.5
        else:
            break
        reference, controls, realized, current = candidate, c_controls, c_realized, c_loss
        losses.append(current)

    if cfg.check_monotone:
        for i in range(1, len(losses)):
            if losses[i] > losses[i - 1]:
                raise PlannerError(f"planner loss rose in round {i}: {losses[i - 1]} -> {losses[i]}")
    return PlanResult(
        plan=ControlPlan(controls), triggered=True, reference=reference, realized=realized, losses=losses
    )


class DfcController:
    """Receding-horizon DFC: plan, apply the first speed, slide the lag buffers."""

    name = "dfc"

    def __init__(self, schedule: ComfortSchedule, model: ZoneModel, cfg: DfcConfig | None = None):
        self.schedule = schedule
        self.model = model
        self.cfg = cfg or DfcConfig()
        self.indoor: deque[float] = deque(maxlen=self.cfg.lag_count)
        self.applied: deque[float] = deque(maxlen=self.cfg.lag_count)
        self.last_plan: PlanResult | None = None

    @property
    def warmed_up(self) -> bool:
        return len(self.indoor) >= self.cfg.lag_count

    def context(self) -> PlanContext:
        return PlanContext(indoor=tuple(self.indoor), n_set=tuple(self.applied))

    def observe(self, obs: Observation, n_set: float) -> None:
        self.indoor.append(obs.state.t_air - KELVIN)
        self.applied.append(clamp_unit(n_set))

    def plan(self, obs: Observation) -> PlanResult:
        if not self.warmed_up:
            raise WarmupError(
                f"DFC needs {self.cfg.lag_count} observations, has {len(self.indoor)}; seed with RC2"
            )
        forecast = list(obs.forecast[: self.cfg.horizon])
        return dfc_plan(self.context(), forecast, obs.state, self.cfg, self.model, self.schedule, obs.dt)

    def step(self, obs: Observation) -> ControlState:
        result = self.plan(obs)
        self.last_plan = result
        out = result.plan.head
        self.observe(obs, out.n_set)
        return out


def dfc_step(controller: DfcController, obs: Observation) -> ControlState:
    return controller.step(obs)
