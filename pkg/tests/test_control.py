import math

import numpy as np
import pytest
from oracles import reference_pid

from dfclab.control import (
    ComfortSchedule,
    ControlPlan,
    ControlState,
    DfcConfig,
    DfcController,
    Observation,
    PidController,
    PidState,
    PlanContext,
    Rc2Controller,
    WarmupError,
    comfort_violated,
    dfc_plan,
    pid_step,
    rc2_step,
    track_reference,
)
from dfclab.thermal import KELVIN, ThermalState, ZoneModel
from dfclab.weather import WeatherRecord

SCHEDULE = ComfortSchedule()
DT = 600.0
MORNING = 5 * 3600.0  # 05:00 UTC on day zero


def record(ts, temp=0.0):
    return WeatherRecord(timestamp=ts, temp=temp, dew=temp - 3, hum=75, pres=1010, winds=3)


def forecast_from(ts, n, temp=0.0):
    return [record(ts + DT * k, temp) for k in range(n)]


def observation(step, ts, state, n=12, temp=0.0):
    fc = forecast_from(ts, n, temp)
    return Observation(step=step, timestamp=ts, state=state, weather=fc[0], forecast=fc, dt=DT)


# --- plan containers -----------------------------------------------------------

def test_control_values_are_bounded():
    with pytest.raises(ValueError):
        ControlState(1.01)
    with pytest.raises(ValueError):
        ControlPlan([0.2, -0.1])
    assert ControlPlan([0.3, 0.4]).head == ControlState(0.3)


# --- PID (RC1) -------------------------------------------------------------------

def test_pid_zero_error_gives_zero():
    out, state = pid_step(PidState(), 21.0, 21.0, DT)
    assert out.n_set == 0.0 and state.integral == 0.0


def test_pid_saturates_without_winding_up():
    out, state = pid_step(PidState(), 21.0, 5.0, DT)
    assert out.n_set == 1.0
    assert state.integral == 0.0


def test_pid_proportional_only():
    pid = PidState(kp=0.3, ki=0.0, kd=0.0)
    for err in (-1.0, 0.5, 2.0, 5.0):
        out, _ = pid_step(pid, 20.0 + err, 20.0, DT)
        assert out.n_set == pytest.approx(min(max(0.3 * err, 0.0), 1.0))


def test_pid_integral_bounded():
    pid = PidState(kp=0.0, ki=0.01)
    for _ in range(50):
        _, pid = pid_step(pid, 20.1, 20.0, DT)
    assert abs(pid.ki * pid.integral) <= 1.0 + 1e-12


def test_pid_step_response_matches_reference_and_settles():
    K, tau = 5.0, 3600.0
    decay = math.exp(-DT / tau)

    def plant(y, u):
        return K * u + (y - K * u) * decay

    expected_u, expected_y = reference_pid(0.4, 0.002, [1.0] * 200, plant, 0.0, DT)
    pid, y, us, ys = PidState(), 0.0, [], []
    for _ in range(200):
        out, pid = pid_step(pid, 1.0, y, DT)
        y = plant(y, out.n_set)
        us.append(out.n_set)
        ys.append(y)
    assert np.array_equal(us, expected_u)
    assert np.array_equal(ys, expected_y)
    assert np.all(np.abs(np.array(ys[-50:]) - 1.0) <= 0.1)


def test_pid_rejects_bad_settings():
    with pytest.raises(ValueError):
        PidState(kp=-1.0)
    with pytest.raises(ValueError):
        pid_step(PidState(), 21.0, 20.0, 0.0)


# --- RC2 incremental rule ---------------------------------------------------------

@pytest.mark.parametrize(
    "current, measured, setpoint, band, expected",
    [
        (0.10, 20.0, 21.0, 0.5, 0.15),
        (1.00, 20.0, 21.0, 0.5, 1.00),
        (0.30, 21.8, 21.0, 0.5, 0.25),
        (0.00, 22.0, 21.0, 0.5, 0.00),
        (0.40, 21.3, 21.0, 0.5, 0.40),
        (0.40, 21.0, 21.0, 0.5, 0.40),
    ],
)
def test_rc2_rule(current, measured, setpoint, band, expected):
    assert rc2_step(current, measured, setpoint, band).n_set == pytest.approx(expected, abs=1e-12)


def test_rc2_controller_uses_lookahead_and_sync():
    model = ZoneModel()
    ctrl = Rc2Controller(SCHEDULE, model, lookahead=1, n_init=0.2)
    state = ThermalState.uniform(KELVIN + 18.0)
    obs = observation(0, MORNING, state)
    temp, when = ctrl.predicted_temperature(obs)
    assert when == MORNING + DT
    assert temp == pytest.approx(model.step(state, obs.forecast[0], 0.2, DT).next_state.t_air - KELVIN)
    assert ctrl.step(obs).n_set == pytest.approx(0.25)
    ctrl.sync(0.7)
    assert ctrl.n_set == 0.7


# --- comfort ---------------------------------------------------------------------

def test_comfort_schedule_and_closed_band():
    day, night = 8 * 3600.0, 2 * 3600.0
    assert SCHEDULE.setpoint(day) == 21.0 and SCHEDULE.setpoint(night) == 19.0
    assert SCHEDULE.setpoint(7 * 3600.0) == 21.0 and SCHEDULE.setpoint(18 * 3600.0) == 19.0
    assert not comfort_violated([20.5, 21.5], SCHEDULE, [day, day])
    assert comfort_violated([20.49], SCHEDULE, [day])
    assert comfort_violated([19.51], SCHEDULE, [night])
    with pytest.raises(ValueError):
        comfort_violated([20.0], SCHEDULE, [])
    with pytest.raises(ValueError):
        ComfortSchedule(band=0.0)


# --- DFC ---------------------------------------------------------------------------

def cold_start(t_c=18.0):
    return ThermalState.uniform(KELVIN + t_c)


def context(n=0.2, lags=6, t_c=18.0):
    return PlanContext(indoor=(t_c,) * lags, n_set=(n,) * lags)


def test_dfc_holds_when_comfortable():
    model = ZoneModel()
    state = ThermalState.uniform(KELVIN + 19.0)
    # a well-insulated zone at setpoint during a mild night: holding the speed stays in band
    fc = forecast_from(0.0, 6, temp=19.0)
    res = dfc_plan(context(0.0, t_c=19.0), fc, state, DfcConfig(horizon=6), model, SCHEDULE, DT)
    assert not res.triggered and res.rounds == 0
    assert res.plan.steps == (0.0,) * 6


def test_dfc_zero_rounds_is_hold():
    fc = forecast_from(MORNING, 12)
    res = dfc_plan(context(0.3), fc, cold_start(), DfcConfig(n_rounds=0), ZoneModel(), SCHEDULE, DT)
    assert res.plan.steps == (0.3,) * 12


def hand_single_leaf_round(t0, t_c):
    """One boosting round with a single-leaf tree, computed without the planner."""
    model, state = ZoneModel(), cold_start(t_c)
    fc = forecast_from(t0, 12)
    targets = np.array([SCHEDULE.setpoint(t0 + DT * (k + 1)) for k in range(12)])
    ref0 = np.full(12, targets.mean())
    _, realized0 = track_reference(model, state, fc, ref0, DT)
    ref1 = ref0 + np.mean(targets - realized0)
    controls1, realized1 = track_reference(model, state, fc, ref1, DT)
    loss = lambda r: float(np.sum((targets - r) ** 2) / 2)  # noqa: E731
    return fc, state, ref1, controls1, loss(realized0), loss(realized1)


@pytest.mark.parametrize("t0, t_c, accepted", [(6 * 3600.0, 19.0, True), (17 * 3600.0, 19.0, False)])
def test_dfc_single_round_single_leaf_by_hand(t0, t_c, accepted):
    fc, state, ref1, controls1, loss0, loss1 = hand_single_leaf_round(t0, t_c)
    assert (loss1 < loss0) == accepted
    cfg = DfcConfig(n_rounds=1, learning_rate=1.0, max_leaves=1, max_backtracks=0)
    res = dfc_plan(context(0.2, t_c=t_c), fc, state, cfg, ZoneModel(), SCHEDULE, DT)
    assert res.triggered
    assert res.losses[0] == pytest.approx(loss0, rel=1e-12)
    if accepted:
        assert res.rounds == 1 and res.losses[1] == pytest.approx(loss1, rel=1e-12)
        assert np.allclose(res.reference, ref1, rtol=0, atol=1e-12)
        assert np.allclose(res.plan.steps, controls1, rtol=0, atol=1e-12)
    else:
        assert res.rounds == 0


def test_dfc_losses_monotone_and_plan_bounded():
    model = ZoneModel()
    for t_c, temp in ((17.0, -5.0), (18.5, 0.0), (22.5, 8.0)):
        cfg = DfcConfig(check_monotone=True)
        res = dfc_plan(context(0.4, t_c=t_c), forecast_from(MORNING, 12, temp), cold_start(t_c), cfg, model, SCHEDULE, DT)
        assert all(b <= a for a, b in zip(res.losses, res.losses[1:]))
        assert all(0.0 <= v <= 1.0 for v in res.plan.steps)


def test_dfc_forecast_length_checked():
    with pytest.raises(ValueError):
        dfc_plan(context(), forecast_from(MORNING, 5), cold_start(), DfcConfig(), ZoneModel(), SCHEDULE, DT)


def test_dfc_config_validation():
    with pytest.raises(ValueError):
        DfcConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        DfcConfig(max_backtracks=-1)
    with pytest.raises(ValueError):
        DfcConfig(loss="huber")


def test_dfc_controller_warmup_and_receding_horizon():
    model = ZoneModel()
    ctrl = DfcController(SCHEDULE, model)
    state = cold_start()
    with pytest.raises(WarmupError):
        ctrl.step(observation(0, MORNING, state))
    for k in range(6):
        ctrl.observe(observation(k, MORNING + DT * k, state), 0.2)
    assert ctrl.warmed_up
    obs = observation(6, MORNING + 6 * DT, state)
    out = ctrl.step(obs)
    assert out.n_set == ctrl.last_plan.plan.head.n_set
    assert ctrl.applied[-1] == out.n_set
    assert ctrl.indoor[-1] == pytest.approx(18.0)


def test_dfc_is_deterministic():
    results = []
    for _ in range(2):
        res = dfc_plan(context(0.2), forecast_from(MORNING, 12, -3.0), cold_start(), DfcConfig(), ZoneModel(), SCHEDULE, DT)
        results.append((res.plan.steps, tuple(res.losses)))
    assert results[0] == results[1]


def test_all_strategies_emit_unit_speeds():
    model = ZoneModel()
    rc1 = PidController(SCHEDULE)
    rc2 = Rc2Controller(SCHEDULE, model)
    dfc = DfcController(SCHEDULE, model)
    state = cold_start(17.0)
    for k in range(6):
        dfc.observe(observation(k, DT * k, state), 0.0)
    for k in range(6, 60):
        obs = observation(k, DT * k, state, temp=-4.0)
        for ctrl in (rc1, rc2, dfc):
            assert 0.0 <= ctrl.step(obs).n_set <= 1.0
        state = model.step(state, obs.weather, dfc.applied[-1], DT).next_state
