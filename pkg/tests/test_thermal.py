import math
from dataclasses import replace

import numpy as np
import pytest
from oracles import KELVIN, cop_oracle, node_rhs, rk4

from dfclab.thermal import (
    GainsSchedule,
    HeatPumpParams,
    SimulationFault,
    ThermalParams,
    ThermalState,
    ZoneModel,
    cop,
    rk4_step,
    simulate_horizon,
    step,
    system_matrices,
)
from dfclab.weather import WeatherRecord

HP = HeatPumpParams()
NO_GAINS = GainsSchedule(occupied_gain=0.0, unoccupied_gain=0.0)


def still_air(temp_c=10.0, ts=0.0, solar=0.0):
    return WeatherRecord(timestamp=ts, temp=temp_c, dew=temp_c - 3, hum=70, pres=1000, winds=2, solar=solar)


# --- COP -----------------------------------------------------------------------

def test_cop_hand_values():
    assert cop(278.15, 308.15, HP) == pytest.approx(0.4 * 308.15 / 30.0)
    assert cop(278.15, 308.15, HP) == pytest.approx(4.109, abs=5e-4)
    assert cop(308.15, 308.15, HP) == HP.cop_max
    assert cop(278.15, 400.0, HP) == pytest.approx(1.313, abs=5e-4)


def test_cop_clamps_and_errors():
    assert cop(300.0, 302.0, HP) == HP.cop_max
    assert cop(200.0, 400.0, replace(HP, eta_carnot=0.1)) == HP.cop_min
    with pytest.raises(ValueError):
        cop(float("nan"), 300.0, HP)
    with pytest.raises(ValueError):
        cop(280.0, 0.0, HP)


def test_parameter_validation():
    with pytest.raises(ValueError):
        ThermalParams(r_ext=0.0)
    with pytest.raises(ValueError):
        ThermalParams(ventilation_ach=-1)
    with pytest.raises(ValueError):
        HeatPumpParams(cop_min=7.0)
    with pytest.raises(ValueError):
        GainsSchedule(occupied_gain=-1)


def test_default_parameters_carry_published_resistances():
    p = ThermalParams()
    assert (p.r_ext, p.c_ext, p.r_floor, p.r_roof, p.r_int) == (1.41e-4, 4.93e8, 1e-3, 1e-3, 1.3e-4)
    assert p.c_floor == p.c_roof == 0.5 * p.c_ext
    assert p.c_int == p.c_ext
    assert p.c_air == pytest.approx(1.2 * 1005 * 1675 * 3)
    assert p.solar_aperture == pytest.approx(0.05 * 1675)


# --- stepping ------------------------------------------------------------------

def test_equilibrium_is_preserved_for_72_hours():
    model = ZoneModel(ThermalParams(), HP, NO_GAINS)
    state = ThermalState.uniform(283.15)
    for k in range(72 * 6):
        state = model.step(state, still_air(10.0, ts=600.0 * k), 0.0, 600.0).next_state
    assert np.all(np.abs(state.as_vector() - 283.15) < 0.01)


def test_off_state_draws_no_power():
    out = ZoneModel().step(ThermalState.uniform(290.0), still_air(0.0), 0.0, 600.0)
    assert out.p_el == 0.0 and out.q_heat == 0.0


def test_full_speed_step_bookkeeping():
    out = ZoneModel(hp=HP, gains=NO_GAINS).step(ThermalState.uniform(293.15), still_air(0.0), 1.0, 600.0)
    assert out.q_heat * 600.0 == pytest.approx(1.11e7)
    assert out.q_heat == pytest.approx(out.cop * out.p_el, rel=1e-12)
    assert out.cop == pytest.approx(cop_oracle(273.15, 303.15))


def test_step_matches_fine_reference_integration():
    # independent right-hand side, RK4 at a tenth of the simulator's internal substep
    p = ThermalParams()
    model = ZoneModel(p, HP, GainsSchedule())
    state = ThermalState(293.0, 289.0, 292.0, 287.0, 285.0)
    rec = still_air(-3.0, ts=9 * 3600.0, solar=150.0)
    out = model.step(state, rec, 0.7, 600.0)
    q_air = 0.7 * HP.q_nominal + 10.0 * p.floor_area + 150.0 * p.solar_aperture
    ref = rk4(node_rhs(p, 270.15, p.t_ground, q_air), np.append(state.as_vector(), 0.0), 6.0, 100)
    assert np.allclose(out.next_state.as_vector(), ref[:5], rtol=0, atol=1e-4)
    assert out.heat_loss == pytest.approx(ref[5], rel=1e-5)


def test_generic_rk4_agrees_with_system_matrices():
    p = ThermalParams()
    A, B = system_matrices(p)
    u = np.array([270.0, p.t_ground, 5000.0])
    x = np.array([293.0, 290.0, 292.0, 288.0, 286.0, 0.0])
    f_mat = lambda v: A @ v + B @ u  # noqa: E731
    f_ref = node_rhs(p, 270.0, p.t_ground, 5000.0)
    assert np.allclose(f_mat(x), f_ref(x), rtol=1e-12, atol=1e-12)
    assert np.allclose(rk4_step(f_mat, x, 30.0), rk4(f_ref, x, 30.0, 1), rtol=0, atol=1e-9)


def test_equal_split_when_rest_resistance_unset():
    p = ThermalParams(r_ext_rest=None, r_roof_rest=None, r_floor_rest=None, ventilation_ach=0.0)
    ua = 1 / p.r_ext + 1 / p.r_roof + 1 / p.r_floor
    assert p.steady_state_ua() == pytest.approx(ua)


def test_energy_conservation_over_a_day():
    p = ThermalParams()
    model = ZoneModel(p, HP, GainsSchedule())
    state = ThermalState(292.0, 288.0, 291.0, 287.0, 286.0)
    caps = p.capacities
    injected = lost = 0.0
    start = state.as_vector()
    for k in range(144):
        rec = still_air(2.0 + 3 * math.sin(k / 20), ts=600.0 * k, solar=max(0.0, 200 * math.sin(k / 144 * 2 * math.pi)))
        out = model.step(state, rec, 0.5 * (k % 3 == 0), 600.0)
        injected += (out.q_heat + out.q_gains) * 600.0
        lost += out.heat_loss
        state = out.next_state
    stored = float(caps @ (state.as_vector() - start))
    assert injected - lost == pytest.approx(stored, rel=1e-6)


def test_monotone_in_control():
    model = ZoneModel()
    weather = [still_air(0.0, ts=600.0 * k) for k in range(12)]
    low = model.simulate(ThermalState.uniform(292.0), weather, [0.2] * 12, 600.0)
    rng = np.random.default_rng(0)
    high = model.simulate(ThermalState.uniform(292.0), weather, list(np.clip(0.2 + rng.random(12) * 0.5, 0, 1)), 600.0)
    assert high.t_air[-1] >= low.t_air[-1]


def test_passive_decay_is_monotone():
    model = ZoneModel(ThermalParams(), HP, NO_GAINS)
    weather = [still_air(0.0, ts=600.0 * k) for k in range(144)]
    trace = model.simulate(ThermalState.uniform(293.15), weather, [0.0] * 144, 600.0)
    assert np.all(np.diff(trace.t_air) <= 0)
    assert trace.t_air[-1] > 273.15


def test_simulate_horizon_composition_and_energy():
    p, gains = ThermalParams(), GainsSchedule()
    state = ThermalState.uniform(292.0)
    one = simulate_horizon(p, HP, state, [still_air(1.0)], [0.4], gains)
    single = step(p, HP, state, still_air(1.0), gains, 0.4, 600.0)
    assert len(one) == 1 and one.outputs[0] == single
    day = simulate_horizon(p, HP, state, [still_air(1.0, ts=600.0 * k) for k in range(144)], [0.3] * 144, gains)
    total = 0.0
    for o in day.outputs:
        total += o.p_el * 600.0
    assert day.energy_el == pytest.approx(total, rel=1e-12)
    with pytest.raises(ValueError):
        simulate_horizon(p, HP, state, [still_air()], [0.1, 0.2], gains)


def test_invalid_inputs():
    model = ZoneModel()
    with pytest.raises(ValueError):
        model.step(ThermalState.uniform(290.0), still_air(), 1.5, 600.0)
    with pytest.raises(ValueError):
        model.step(ThermalState.uniform(290.0), still_air(), 0.5, 0.0)
    with pytest.raises(SimulationFault) as err:
        model.step(ThermalState.uniform(150.0), still_air(), 0.5, 600.0)
    assert err.value.state.t_air == 150.0


def test_air_temperature_capped_at_sanity_bound():
    model = ZoneModel(ThermalParams(), replace(HP, q_nominal=1e12), NO_GAINS)
    out = model.step(ThermalState.uniform(300.0), still_air(10.0), 1.0, 600.0)
    assert out.next_state.t_air <= 400.0 + 1e-9
    assert out.q_heat < 1e12


def test_air_response_is_affine_in_speed():
    model = ZoneModel()
    state = ThermalState(292.0, 289.0, 291.0, 288.0, 287.0)
    rec = still_air(-2.0, ts=8 * 3600.0, solar=80.0)
    a, b = model.air_response(state, rec, 600.0)
    for n in (0.0, 0.35, 1.0):
        assert model.step(state, rec, n, 600.0).next_state.t_air == pytest.approx(a + b * n, abs=1e-9)


def test_gains_schedule_by_local_time():
    g = GainsSchedule(utc_offset_hours=1.0)
    assert g.density(6 * 3600.0) == 10.0  # 07:00 local
    assert g.density(5 * 3600.0) == 2.0
    assert g.density(17 * 3600.0) == 2.0  # 18:00 local is unoccupied


def test_determinism():
    model = ZoneModel()
    weather = [still_air(0.5 + 0.01 * k, ts=600.0 * k, solar=10.0 * (k % 7)) for k in range(50)]
    a = model.simulate(ThermalState.uniform(291.0), weather, [0.3] * 50, 600.0)
    b = model.simulate(ThermalState.uniform(291.0), weather, [0.3] * 50, 600.0)
    assert a == b
    assert KELVIN == 273.15
