"""Four-element RC zone model driven by a variable-speed air-source heat pump.

Nodes: zone air, exterior walls, interior walls, floor plate, roof.  Every
envelope node couples to the air node through its element resistance; the
exterior wall and roof also couple to ambient air, and the floor to the
ground.  Heat-pump output, internal gains and solar gains all land on the
air node.  Internally everything is kelvin and seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .weather import WeatherRecord

KELVIN = 273.15
T_MIN_K = 200.0
T_MAX_K = 400.0
AIR_DENSITY = 1.2  # kg/m3
AIR_CP = 1005.0  # J/(kg K)
CEILING_HEIGHT = 3.0  # m
MAX_SUBSTEP = 60.0  # s

AIR, EXT, INT, FLOOR, ROOF = range(5)
N_NODES = 5
# Extra state slot integrating the heat leaving through boundaries (J).
_LOSS = 5


class SimulationFault(RuntimeError):
    """A node temperature left the sanity bounds; ``state`` holds the offending values."""

    def __init__(self, message: str, state: "ThermalState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class ThermalParams:
    """RC parameters of the office zone.

    ``r_*_rest`` are the outer resistances between an envelope node and its
    boundary (ambient or ground).  Leaving one as ``None`` splits the element
    resistance equally: half toward the air, half toward the boundary.
    """

    r_ext: float = 1.41e-4
    c_ext: float = 4.93e8
    r_floor: float = 1e-3
    c_floor: float | None = None
    r_roof: float = 1e-3
    c_roof: float | None = None
    r_int: float = 1.3e-4
    c_int: float | None = None
    c_air: float | None = None
    floor_area: float = 1675.0
    ventilation_ach: float = 0.2
    solar_aperture: float | None = None
    r_ext_rest: float | None = 1.5e-3
    r_roof_rest: float | None = 7.5e-3
    r_floor_rest: float | None = 9.0e-3
    t_ground: float = 283.15

    def __post_init__(self):
        derived = {
            "c_floor": 0.5 * self.c_ext,
            "c_roof": 0.5 * self.c_ext,
            "c_int": self.c_ext,
            "c_air": AIR_DENSITY * AIR_CP * self.floor_area * CEILING_HEIGHT,
            "solar_aperture": 0.05 * self.floor_area,
        }
        for name, value in derived.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, float(value))

        for name in ("r_ext", "r_floor", "r_roof", "r_int", "c_ext", "c_floor", "c_roof", "c_int", "c_air"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        for name in ("r_ext_rest", "r_roof_rest", "r_floor_rest"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if not self.floor_area > 0:
            raise ValueError("floor_area must be positive")
        if self.ventilation_ach < 0:
            raise ValueError("ventilation_ach must be >= 0")
        if self.solar_aperture < 0:
            raise ValueError("solar_aperture must be >= 0")

    def _split(self, r: float, rest: float | None) -> tuple[float, float]:
        if rest is None:
            return 0.5 * r, 0.5 * r
        return r, rest

    @property
    def ventilation_conductance(self) -> float:
        """W/K, from the air capacity and air-change rate."""
        return self.c_air * self.ventilation_ach / 3600.0

    @property
    def capacities(self) -> np.ndarray:
        return np.array([self.c_air, self.c_ext, self.c_int, self.c_floor, self.c_roof])

    def steady_state_ua(self) -> float:
        """Total conductance from air to the boundaries (W/K), ignoring capacities."""
        ext = sum(self._split(self.r_ext, self.r_ext_rest))
        roof = sum(self._split(self.r_roof, self.r_roof_rest))
        floor = sum(self._split(self.r_floor, self.r_floor_rest))
        return 1.0 / ext + 1.0 / roof + 1.0 / floor + self.ventilation_conductance


@dataclass(frozen=True)
class HeatPumpParams:
    q_nominal: float = 18_500.0
    eta_carnot: float = 0.4
    cop_max: float = 6.0
    cop_min: float = 1.0
    sink_offset: float = 10.0  # supply temperature above zone air, K

    def __post_init__(self):
        if not self.q_nominal > 0:
            raise ValueError("q_nominal must be positive")
        if not 0 < self.eta_carnot <= 1:
            raise ValueError("eta_carnot must be in (0, 1]")
        if not self.cop_max > self.cop_min >= 1:
            raise ValueError("need cop_max > cop_min >= 1")


@dataclass(frozen=True)
class GainsSchedule:
    occupied_gain: float = 10.0  # W/m2
    unoccupied_gain: float = 2.0  # W/m2
    occupied_start: float = 7.0  # local hour
    occupied_end: float = 18.0
    utc_offset_hours: float = 0.0

    def __post_init__(self):
        if self.occupied_gain < 0 or self.unoccupied_gain < 0:
            raise ValueError("gain densities must be >= 0")

    def is_occupied(self, timestamp: float) -> bool:
        hour = local_hour(timestamp, self.utc_offset_hours)
        return self.occupied_start <= hour < self.occupied_end

    def density(self, timestamp: float) -> float:
        return self.occupied_gain if self.is_occupied(timestamp) else self.unoccupied_gain


def local_hour(timestamp: float, utc_offset_hours: float = 0.0) -> float:
    return ((timestamp + 3600.0 * utc_offset_hours) % 86400.0) / 3600.0


@dataclass(frozen=True)
class ThermalState:
    t_air: float
    t_ext_wall: float
    t_int_wall: float
    t_floor: float
    t_roof: float
    sim_time: float = 0.0

    @classmethod
    def uniform(cls, temperature_k: float, sim_time: float = 0.0) -> ThermalState:
        return cls(*(5 * [float(temperature_k)]), sim_time=sim_time)

    @classmethod
    def from_vector(cls, x: Sequence[float], sim_time: float) -> ThermalState:
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), float(x[4]), sim_time=sim_time)

    def as_vector(self) -> np.ndarray:
        return np.array([self.t_air, self.t_ext_wall, self.t_int_wall, self.t_floor, self.t_roof])

    def is_valid(self) -> bool:
        return all(math.isfinite(t) and T_MIN_K <= t <= T_MAX_K for t in self.as_vector())


@dataclass(frozen=True)
class StepOutput:
    next_state: ThermalState
    p_el: float  # W
    q_heat: float  # W, heat-pump output to the air node
    cop: float
    q_gains: float = 0.0  # W, internal + solar
    heat_loss: float = 0.0  # J through boundaries during the step


@dataclass(frozen=True)
class Trace:
    outputs: tuple[StepOutput, ...]
    energy_el: float  # J
    dt: float

    def __len__(self) -> int:
        return len(self.outputs)

    @property
    def t_air(self) -> np.ndarray:
        return np.array([o.next_state.t_air for o in self.outputs])

    @property
    def p_el(self) -> np.ndarray:
        return np.array([o.p_el for o in self.outputs])


def cop(t_source: float, t_sink: float, hp: HeatPumpParams) -> float:
    """Carnot-fraction COP, clamped to the heat pump's [cop_min, cop_max]."""
    if not (math.isfinite(t_source) and math.isfinite(t_sink)):
        raise ValueError("cop inputs must be finite")
    if t_sink <= 0:
        raise ValueError("t_sink must be positive kelvin")
    lift = t_sink - t_source
    if lift <= 0:
        return hp.cop_max
    return min(max(hp.eta_carnot * t_sink / lift, hp.cop_min), hp.cop_max)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of x' = f(x)."""
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def system_matrices(params: ThermalParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time ``A`` (6x6) and ``B`` (6x3) of the augmented linear system.

    State: the five node temperatures plus the integrated boundary loss.
    Inputs: ``[t_outdoor, t_ground, q_air]``.
    """
    ext_in, ext_out = params._split(params.r_ext, params.r_ext_rest)
    roof_in, roof_out = params._split(params.r_roof, params.r_roof_rest)
    floor_in, floor_out = params._split(params.r_floor, params.r_floor_rest)
    g_in = {EXT: 1 / ext_in, INT: 1 / params.r_int, FLOOR: 1 / floor_in, ROOF: 1 / roof_in}
    h_vent = params.ventilation_conductance
    caps = params.capacities

    a = np.zeros((6, 6))
    b = np.zeros((6, 3))
    for node, g in g_in.items():
        a[AIR, node] += g
        a[AIR, AIR] -= g
        a[node, AIR] += g
        a[node, node] -= g
    a[AIR, AIR] -= h_vent
    b[AIR, 0] += h_vent
    b[AIR, 2] = 1.0

    for node, g_out, col in ((EXT, 1 / ext_out, 0), (ROOF, 1 / roof_out, 0), (FLOOR, 1 / floor_out, 1)):
        a[node, node] -= g_out
        b[node, col] += g_out
        a[_LOSS, node] += g_out
        b[_LOSS, col] -= g_out
    a[_LOSS, AIR] += h_vent
    b[_LOSS, 0] -= h_vent

    a[:N_NODES] /= caps[:, None]
    b[:N_NODES] /= caps[:, None]
    return a, b


@lru_cache(maxsize=64)
def _discrete_operator(params: ThermalParams, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact RK4 propagation over ``dt`` with piecewise-constant inputs.

    For a linear system one RK4 step of size h is x -> R x + h S B u with
    R = I + Z + Z^2/2 + Z^3/6 + Z^4/24 and S = I + Z/2 + Z^2/6 + Z^3/24,
    Z = hA.  Chaining the substeps gives ``(Phi, Gamma)``.
    """
    n_sub = max(1, math.ceil(dt / MAX_SUBSTEP - 1e-9))
    h = dt / n_sub
    a, b = system_matrices(params)
    eye = np.eye(6)
    z = h * a
    z2 = z @ z
    z3 = z2 @ z
    z4 = z3 @ z
    r = eye + z + z2 / 2 + z3 / 6 + z4 / 24
    s = eye + z / 2 + z2 / 6 + z3 / 24
    hsb = h * (s @ b)
    phi = eye.copy()
    gamma = np.zeros_like(hsb)
    for _ in range(n_sub):
        gamma = r @ gamma + hsb
        phi = r @ phi
    return phi, gamma


class ZoneModel:
    """Immutable zone + heat-pump simulator.  State is always passed explicitly."""

    def __init__(
        self,
        params: ThermalParams | None = None,
        hp: HeatPumpParams | None = None,
        gains: GainsSchedule | None = None,
    ):
        self.params = params or ThermalParams()
        self.hp = hp or HeatPumpParams()
        self.gains = gains or GainsSchedule()

    def gain_power(self, outdoor: WeatherRecord) -> float:
        internal = self.gains.density(outdoor.timestamp) * self.params.floor_area
        return internal + outdoor.solar * self.params.solar_aperture

    def _propagate(self, x: np.ndarray, outdoor_k: float, q_air: float, dt: float) -> np.ndarray:
        phi, gamma = _discrete_operator(self.params, float(dt))
        u = np.array([outdoor_k, self.params.t_ground, q_air])
        return phi @ x + gamma @ u

    def air_response(self, state: ThermalState, outdoor: WeatherRecord, dt: float) -> tuple[float, float]:
        """End-of-step air temperature as ``a + b * n_set`` (kelvin)."""
        phi, gamma = _discrete_operator(self.params, float(dt))
        x = np.append(state.as_vector(), 0.0)
        u = np.array([outdoor.temp + KELVIN, self.params.t_ground, self.gain_power(outdoor)])
        a = float(phi[AIR] @ x + gamma[AIR] @ u)
        return a, float(gamma[AIR, 2] * self.hp.q_nominal)

    def step(self, state: ThermalState, outdoor: WeatherRecord, n_set: float, dt: float) -> StepOutput:
        if not 0.0 <= n_set <= 1.0:
            raise ValueError(f"n_set={n_set} outside [0, 1]")
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not state.is_valid():
            raise SimulationFault("invalid state before step", state)

        outdoor_k = outdoor.temp + KELVIN
        q_gains = self.gain_power(outdoor)
        q_heat = n_set * self.hp.q_nominal
        x0 = np.append(state.as_vector(), 0.0)
        x1 = self._propagate(x0, outdoor_k, q_heat + q_gains, dt)
        if q_heat > 0 and x1[AIR] > T_MAX_K:
            _, gamma = _discrete_operator(self.params, float(dt))
            q_heat = max(0.0, q_heat - (x1[AIR] - T_MAX_K) / gamma[AIR, 2])
            x1 = self._propagate(x0, outdoor_k, q_heat + q_gains, dt)

        nxt = ThermalState.from_vector(x1[:N_NODES], state.sim_time + dt)
        if not nxt.is_valid():
            raise SimulationFault(f"node temperature outside [{T_MIN_K}, {T_MAX_K}] K", nxt)

        c = cop(outdoor_k, state.t_air + self.hp.sink_offset, self.hp)
        p_el = q_heat / c if q_heat > 0 else 0.0
        return StepOutput(
            next_state=nxt, p_el=p_el, q_heat=q_heat, cop=c, q_gains=q_gains, heat_loss=float(x1[_LOSS])
        )

    def simulate(
        self,
        state0: ThermalState,
        weather: Sequence[WeatherRecord],
        controls: Sequence[float],
        dt: float,
    ) -> Trace:
        if len(weather) != len(controls):
            raise ValueError(f"weather ({len(weather)}) and controls ({len(controls)}) differ in length")
        if len(weather) < 1:
            raise ValueError("horizon must contain at least one step")
        outputs = []
        energy = 0.0
        state = state0
        for rec, n in zip(weather, controls):
            out = self.step(state, rec, float(n), dt)
            outputs.append(out)
            energy += out.p_el * dt
            state = out.next_state
        return Trace(outputs=tuple(outputs), energy_el=energy, dt=dt)


def step(
    params: ThermalParams,
    hp: HeatPumpParams,
    state: ThermalState,
    outdoor: WeatherRecord,
    gains: GainsSchedule,
    n_set: float,
    dt: float,
) -> StepOutput:
    return ZoneModel(params, hp, gains).step(state, outdoor, n_set, dt)


def simulate_horizon(
    params: ThermalParams,
    hp: HeatPumpParams,
    state0: ThermalState,
    weather: Sequence[WeatherRecord],
    controls: Sequence[float],
    gains: GainsSchedule,
    dt: float = 600.0,
) -> Trace:
    return ZoneModel(params, hp, gains).simulate(state0, weather, controls, dt)


def reference_rhs(
    params: ThermalParams, outdoor_k: float, q_air: float
) -> Callable[[np.ndarray], np.ndarray]:
    """Right-hand side of the node equations written out term by term.

    Independent of :func:`system_matrices`; used to cross-check the
    propagation operator with :func:`rk4_step`.
    """
    ext_in, ext_out = params._split(params.r_ext, params.r_ext_rest)
    roof_in, roof_out = params._split(params.r_roof, params.r_roof_rest)
    floor_in, floor_out = params._split(params.r_floor, params.r_floor_rest)
    h_vent = params.ventilation_conductance
    tg = params.t_ground

    def f(x: np.ndarray) -> np.ndarray:
        ta, te, ti, tf, tr = x[:5]
        q_ext = (te - ta) / ext_in
        q_int = (ti - ta) / params.r_int
        q_floor = (tf - ta) / floor_in
        q_roof = (tr - ta) / roof_in
        q_vent = h_vent * (outdoor_k - ta)
        dta = (q_ext + q_int + q_floor + q_roof + q_vent + q_air) / params.c_air
        dte = (-q_ext + (outdoor_k - te) / ext_out) / params.c_ext
        dti = -q_int / params.c_int
        dtf = (-q_floor + (tg - tf) / floor_out) / params.c_floor
        dtr = (-q_roof + (outdoor_k - tr) / roof_out) / params.c_roof
        loss = (te - outdoor_k) / ext_out + (tr - outdoor_k) / roof_out + (tf - tg) / floor_out - q_vent
        return np.array([dta, dte, dti, dtf, dtr, loss])

    return f
