"""Scenario documents, closed-loop experiments, and strategy comparison."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .control import (
    ComfortSchedule,
    DfcConfig,
    DfcController,
    Observation,
    PidController,
    PidState,
    PlannerError,
    Rc2Controller,
    WarmupError,
)
from .forecasting import WeatherForecaster, WindowSpec, train_weather_model
from .thermal import KELVIN, GainsSchedule, HeatPumpParams, SimulationFault, ThermalParams, ThermalState, ZoneModel
from .weather import (
    WeatherRecord,
    WeatherSeries,
    format_timestamp,
    generate_synthetic_weather,
    load_weather_csv,
    parse_timestamp,
)

log = logging.getLogger(__name__)

STRATEGIES = ("rc1", "rc2", "dfc")
J_PER_KWH = 3.6e6


class ScenarioError(ValueError):
    pass


class ExperimentAborted(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


class ComparisonError(ValueError):
    pass


def _from_dict(cls, doc: dict[str, Any] | None, where: str):
    """Build a flat dataclass from a mapping, rejecting unknown keys."""
    doc = dict(doc or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {unknown}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class WeatherSource:
    """Exactly one of ``csv`` or ``synthetic_seed``."""

    csv: str | None = None
    synthetic_seed: int | None = 7
    history_days: float = 60.0

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic_seed is None):
            raise ValueError("give exactly one of csv or synthetic_seed")
        if self.history_days < 0:
            raise ValueError("history_days must be >= 0")


@dataclass(frozen=True)
class ForecasterConfig:
    lag_count: int = 6
    n_estimators: int = 50
    learning_rate: float = 0.25
    max_leaves: int = 31
    min_samples_leaf: int = 20

    def build(self) -> WeatherForecaster:
        return WeatherForecaster(
            spec=WindowSpec(lag_count=self.lag_count, differences=True),
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_leaves=self.max_leaves,
            min_samples_leaf=self.min_samples_leaf,
        )


@dataclass(frozen=True)
class StrategySpec:
    kind: str = "rc1"
    pid: PidState = field(default_factory=PidState)
    rc2_lookahead: int = 1
    dfc: DfcConfig = field(default_factory=DfcConfig)

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.kind!r}")

    @property
    def forecast_steps(self) -> int:
        if self.kind == "dfc":
            return max(self.dfc.horizon, self.rc2_lookahead)
        if self.kind == "rc2":
            return self.rc2_lookahead
        return 1

    def to_dict(self) -> dict:
        pid = dataclasses.asdict(self.pid)
        for key in ("integral", "prev_error"):
            pid.pop(key)
        return {
            "kind": self.kind,
            "pid": pid,
            "rc2_lookahead": self.rc2_lookahead,
            "dfc": dataclasses.asdict(self.dfc),
        }

    @classmethod
    def from_dict(cls, doc: dict | None) -> StrategySpec:
        doc = dict(doc or {})
        unknown = sorted(set(doc) - {"kind", "pid", "rc2_lookahead", "dfc"})
        if unknown:
            raise ScenarioError(f"strategy: unknown key(s) {unknown}")
        pid_doc = dict(doc.get("pid") or {})
        if {"integral", "prev_error"} & set(pid_doc):
            raise ScenarioError("strategy.pid: controller state is not configurable")
        try:
            return cls(
                kind=doc.get("kind", "rc1"),
                pid=_from_dict(PidState, pid_doc, "strategy.pid"),
                rc2_lookahead=int(doc.get("rc2_lookahead", 1)),
                dfc=_from_dict(DfcConfig, doc.get("dfc"), "strategy.dfc"),
            )
        except ValueError as exc:
            raise ScenarioError(f"strategy: {exc}") from None


@dataclass(frozen=True)
class Scenario:
    name: str = "reference"
    thermal: ThermalParams = field(default_factory=ThermalParams)
    heat_pump: HeatPumpParams = field(default_factory=HeatPumpParams)
    gains: GainsSchedule = field(default_factory=GainsSchedule)
    comfort: ComfortSchedule = field(default_factory=ComfortSchedule)
    dt: float = 600.0
    duration_days: float = 30.0
    start: str = "2021-01-04T00:00:00Z"
    weather: WeatherSource = field(default_factory=WeatherSource)
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    strategy: StrategySpec = field(default_factory=StrategySpec)

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.duration_days < 1:
            raise ScenarioError("duration must be at least one day")
        steps = self.duration_days * 86400.0 / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ScenarioError("duration must be a whole number of control steps")
        try:
            parse_timestamp(self.start)
        except ValueError:
            raise ScenarioError(f"start {self.start!r} is not an ISO-8601 timestamp") from None

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_days * 86400.0 / self.dt))

    @property
    def start_ts(self) -> float:
        return parse_timestamp(self.start)

    def with_strategy(self, kind: str) -> Scenario:
        return replace(self, strategy=replace(self.strategy, kind=kind))

    def with_seed(self, seed: int) -> Scenario:
        if self.weather.csv is not None:
            return self
        return replace(self, weather=replace(self.weather, synthetic_seed=int(seed)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "thermal": dataclasses.asdict(self.thermal),
            "heat_pump": dataclasses.asdict(self.heat_pump),
            "gains": dataclasses.asdict(self.gains),
            "comfort": dataclasses.asdict(self.comfort),
            "dt": self.dt,
            "duration_days": self.duration_days,
            "start": self.start,
            "weather": dataclasses.asdict(self.weather),
            "forecaster": dataclasses.asdict(self.forecaster),
            "strategy": self.strategy.to_dict(),
        }

    def core(self) -> dict:
        """Everything except the strategy and the display name."""
        doc = self.to_dict()
        doc.pop("strategy")
        doc.pop("name")
        return doc

    def core_digest(self) -> str:
        return hashlib.sha256(json.dumps(self.core(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> Scenario:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ScenarioError(f"scenario: unknown key(s) {unknown}")
        weather_doc = dict(doc.get("weather") or {})
        if "csv" in weather_doc and "synthetic_seed" not in weather_doc:
            weather_doc["synthetic_seed"] = None
        kwargs: dict[str, Any] = {
            "thermal": _from_dict(ThermalParams, doc.get("thermal"), "thermal"),
            "heat_pump": _from_dict(HeatPumpParams, doc.get("heat_pump"), "heat_pump"),
            "gains": _from_dict(GainsSchedule, doc.get("gains"), "gains"),
            "comfort": _from_dict(ComfortSchedule, doc.get("comfort"), "comfort"),
            "weather": _from_dict(WeatherSource, weather_doc, "weather"),
            "forecaster": _from_dict(ForecasterConfig, doc.get("forecaster"), "forecaster"),
            "strategy": StrategySpec.from_dict(doc.get("strategy")),
        }
        for key in ("name", "start"):
            if key in doc:
                kwargs[key] = str(doc[key])
        for key in ("dt", "duration_days"):
            if key in doc:
                kwargs[key] = float(doc[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
        scenario = cls.from_dict(doc)
        csv_path = scenario.weather.csv
        if csv_path is not None and not Path(csv_path).is_absolute():
            scenario = replace(scenario, weather=replace(scenario.weather, csv=str(path.parent / csv_path)))
        return scenario

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def load_weather(self, extra_steps: int = 0) -> WeatherSeries:
        """Weather covering the training history, the evaluation window and ``extra_steps`` beyond it."""
        src = self.weather
        if src.synthetic_seed is not None:
            begin = self.start_ts - src.history_days * 86400.0
            days = src.history_days + self.duration_days + math.ceil((extra_steps + 1) * self.dt / 86400.0)
            return generate_synthetic_weather(src.synthetic_seed, days, self.dt, start=begin)
        series = load_weather_csv(src.csv, dt=self.dt)
        return series


def reference_scenario(**overrides) -> Scenario:
    return replace(Scenario(), **overrides)


@dataclass
class ExperimentResult:
    strategy: str
    scenario_core: dict
    energy_kwh: float
    energy_per_day_per_m2: float
    comfort_violation_fraction: float
    night_violation_fraction: float
    mean_cop: float | None
    days: float
    floor_area: float
    dt: float
    traces: dict[str, np.ndarray]

    TRACE_COLUMNS = ("time", "t_air", "n_set", "p_el", "q_heat", "cop", "t_outdoor", "setpoint")

    @property
    def core_digest(self) -> str:
        return hashlib.sha256(json.dumps(self.scenario_core, sort_keys=True).encode()).hexdigest()[:16]

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "energy_kwh": self.energy_kwh,
            "energy_per_day_per_m2": self.energy_per_day_per_m2,
            "comfort_violation_fraction": self.comfort_violation_fraction,
            "night_violation_fraction": self.night_violation_fraction,
            "mean_cop": self.mean_cop,
            "days": self.days,
            "floor_area": self.floor_area,
            "dt": self.dt,
            "steps": len(self.traces["time"]),
            "scenario_digest": self.core_digest,
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result_path = out_dir / f"result_{self.strategy}.json"
        doc = {"summary": self.summary(), "scenario_core": self.scenario_core}
        result_path.write_text(json.dumps(doc, indent=2) + "\n")
        trace_path = out_dir / f"trace_{self.strategy}.csv"
        with trace_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.TRACE_COLUMNS)
            for i in range(len(self.traces["time"])):
                row = [format_timestamp(self.traces["time"][i])]
                row += [repr(float(self.traces[c][i])) for c in self.TRACE_COLUMNS[1:]]
                writer.writerow(row)
        return result_path, trace_path


def fit_forecaster(scenario: Scenario, series: WeatherSeries | None = None):
    """Train the outdoor-temperature model on the history preceding the evaluation window."""
    series = series if series is not None else scenario.load_weather(scenario.strategy.forecast_steps)
    i0 = series.index_of(scenario.start_ts)
    history = series[:i0]
    return train_weather_model(history, model=scenario.forecaster.build())


class _ForecastTable:
    """Per-step forecast records: element 0 measured now, later ones from the weather model.

    Non-temperature columns hold their current value; solar is taken from
    the same time one day earlier (diurnal persistence).
    """

    def __init__(self, series: WeatherSeries, start: int, n_steps: int, horizon: int, model: WeatherForecaster | None):
        self.series = series
        self.start = start
        self.horizon = horizon
        self.day_steps = int(round(86400.0 / series.interval))
        if horizon > 1:
            if model is None:
                raise ValueError("a weather model is required for multi-step forecasts")
            ends = np.arange(start, start + n_steps)
            self.temps = model.rollout_batch(series, ends, horizon - 1)
        else:
            self.temps = np.empty((n_steps, 0))

    def __call__(self, j: int) -> list[WeatherRecord]:
        i = self.start + j
        now = self.series[i]
        out = [now]
        for k in range(1, self.horizon):
            ts = now.timestamp + k * self.series.interval
            lag = i + k - self.day_steps
            solar = float(self.series.solar[lag]) if lag >= 0 else now.solar
            out.append(replace(now, timestamp=ts, temp=float(self.temps[j, k - 1]), solar=solar))
        return out


def run_experiment(scenario: Scenario, forecaster: WeatherForecaster | None = None) -> ExperimentResult:
    """Closed-loop run of the scenario's strategy over the evaluation window."""
    spec = scenario.strategy
    dt = scenario.dt
    horizon = spec.forecast_steps
    series = scenario.load_weather(horizon)
    if not math.isclose(series.interval, dt):
        raise ScenarioError(f"weather interval {series.interval} s differs from dt {dt} s")
    try:
        i0 = series.index_of(scenario.start_ts)
    except KeyError:
        raise ScenarioError("scenario start is not covered by the weather series") from None
    n = scenario.n_steps
    if i0 + n + horizon > len(series):
        raise ScenarioError("weather series ends before the evaluation window (plus horizon)")

    if spec.kind in ("rc2", "dfc") and forecaster is None:
        if i0 * dt < 30 * 86400.0:
            raise ScenarioError("predictive strategies need at least 30 days of weather history")
        report = fit_forecaster(scenario, series)
        log.info("weather model R2=%.4f (persistence %.4f)", report.r2 or float("nan"), report.persistence_r2 or float("nan"))
        forecaster = report.model
    forecasts = _ForecastTable(series, i0, n, horizon, forecaster if spec.kind != "rc1" else None)

    model = ZoneModel(scenario.thermal, scenario.heat_pump, scenario.gains)
    schedule = scenario.comfort
    rc2 = Rc2Controller(schedule, model, lookahead=spec.rc2_lookahead)
    if spec.kind == "rc1":
        controller = PidController(schedule, spec.pid)
    elif spec.kind == "rc2":
        controller = rc2
    else:
        controller = DfcController(schedule, model, spec.dfc)

    state = ThermalState.uniform(schedule.night_setpoint + KELVIN)
    cols = {c: np.empty(n) for c in ExperimentResult.TRACE_COLUMNS}
    for j in range(n):
        rec = series[i0 + j]
        obs = Observation(step=j, timestamp=rec.timestamp, state=state, weather=rec, forecast=forecasts(j), dt=dt)
        try:
            if isinstance(controller, DfcController):
                try:
                    n_set = controller.step(obs).n_set
                except WarmupError:
                    n_set = rc2.step(obs).n_set
                    controller.observe(obs, n_set)
            else:
                n_set = controller.step(obs).n_set
            out = model.step(state, rec, n_set, dt)
        except (SimulationFault, PlannerError) as exc:
            raise ExperimentAborted(str(exc), j) from exc
        cols["time"][j] = rec.timestamp
        cols["t_air"][j] = state.t_air - KELVIN
        cols["n_set"][j] = n_set
        cols["p_el"][j] = out.p_el
        cols["q_heat"][j] = out.q_heat
        cols["cop"][j] = out.cop
        cols["t_outdoor"][j] = rec.temp
        cols["setpoint"][j] = schedule.setpoint(rec.timestamp)
        state = out.next_state

    return _summarise(scenario, cols)


def _summarise(scenario: Scenario, cols: dict[str, np.ndarray]) -> ExperimentResult:
    schedule = scenario.comfort
    energy_j = float(np.sum(cols["p_el"] * scenario.dt))
    energy_kwh = energy_j / J_PER_KWH
    days = scenario.duration_days
    day = np.array([schedule.is_day(t) for t in cols["time"]])
    outside = np.abs(cols["t_air"] - cols["setpoint"]) > schedule.band
    heating = cols["q_heat"] > 0
    return ExperimentResult(
        strategy=scenario.strategy.kind,
        scenario_core=scenario.core(),
        energy_kwh=energy_kwh,
        energy_per_day_per_m2=energy_kwh / days / scenario.thermal.floor_area,
        comfort_violation_fraction=float(outside[day].mean()) if day.any() else 0.0,
        night_violation_fraction=float(outside[~day].mean()) if (~day).any() else 0.0,
        mean_cop=float(cols["cop"][heating].mean()) if heating.any() else None,
        days=days,
        floor_area=scenario.thermal.floor_area,
        dt=scenario.dt,
        traces=cols,
    )


def percent_saving(baseline: float, value: float) -> float:
    if baseline <= 0:
        raise ValueError("baseline energy must be positive")
    return 100.0 * (baseline - value) / baseline


@dataclass
class ComparisonSummary:
    rows: list[dict]

    def table(self) -> str:
        head = f"{'strategy':<10}{'kWh/(day m2)':>14}{'saving %':>10}{'violation':>11}{'mean COP':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            cop_txt = f"{r['mean_cop']:.2f}" if r["mean_cop"] is not None else "n/a"
            lines.append(
                f"{r['strategy']:<10}{r['energy_per_day_per_m2']:>14.4f}{r['saving_percent']:>10.1f}"
                f"{r['comfort_violation_fraction']:>11.3f}{cop_txt:>10}"
            )
        return "\n".join(lines)


def compare(results: Sequence[ExperimentResult]) -> ComparisonSummary:
    """Energy table with savings relative to the first result.

    Refuses results whose scenarios differ in anything but the strategy.
    """
    if len(results) < 2:
        raise ComparisonError("need at least two results")
    core = results[0].scenario_core
    for r in results[1:]:
        if r.scenario_core != core:
            raise ComparisonError(f"scenario of {r.strategy!r} differs from {results[0].strategy!r}")
    base = results[0].energy_per_day_per_m2
    rows = [
        {
            "strategy": r.strategy,
            "energy_per_day_per_m2": r.energy_per_day_per_m2,
            "saving_percent": round(percent_saving(base, r.energy_per_day_per_m2), 1),
            "comfort_violation_fraction": r.comfort_violation_fraction,
            "night_violation_fraction": r.night_violation_fraction,
            "mean_cop": r.mean_cop,
        }
        for r in results
    ]
    return ComparisonSummary(rows)


def write_comparison(summary: ComparisonSummary, results: Sequence[ExperimentResult], out_dir: str | Path) -> list[Path]:
    """Summary table/JSON plus one aligned CSV per plotted signal (speed, indoor temperature, COP)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "summary.txt", out_dir / "summary.json"]
    paths[0].write_text(summary.table() + "\n")
    paths[1].write_text(json.dumps({"rows": summary.rows}, indent=2) + "\n")
    times = results[0].traces["time"]
    for r in results[1:]:
        if not np.array_equal(r.traces["time"], times):
            raise ComparisonError("traces are not aligned in time")
    for signal in ("n_set", "t_air", "cop", "p_el"):
        path = out_dir / f"panel_{signal}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "setpoint", "t_outdoor"] + [r.strategy for r in results])
            for i, ts in enumerate(times):
                writer.writerow(
                    [format_timestamp(ts), results[0].traces["setpoint"][i], results[0].traces["t_outdoor"][i]]
                    + [repr(float(r.traces[signal][i])) for r in results]
                )
        paths.append(path)
    return paths


def run_all(scenario: Scenario, strategies: Sequence[str] = STRATEGIES) -> list[ExperimentResult]:
    """Run several strategies on one scenario, sharing a single trained weather model."""
    forecaster = None
    if any(k != "rc1" for k in strategies):
        forecaster = fit_forecaster(scenario.with_strategy("dfc")).model
    return [run_experiment(scenario.with_strategy(k), forecaster) for k in strategies]
