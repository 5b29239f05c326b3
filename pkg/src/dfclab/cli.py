"""Command-line entry point.

Exit codes: 0 success, 2 invalid input (arguments, scenario, weather file,
model file), 3 runtime fault during simulation or planning.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .control import PlannerError
from .forecasting import WeatherForecaster, WindowSpec, load_weather_model, save_weather_model, train_weather_model
from .harness import (
    STRATEGIES,
    ComparisonError,
    ExperimentAborted,
    Scenario,
    ScenarioError,
    compare,
    fit_forecaster,
    run_experiment,
    write_comparison,
)
from .thermal import SimulationFault
from .weather import WeatherFormatError, generate_synthetic_weather, load_weather_csv, write_weather_csv

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

log = logging.getLogger("dfclab")


class UsageError(ValueError):
    pass


def _scenario(args) -> Scenario:
    path = Path(args.scenario)
    if not path.is_file():
        raise UsageError(f"scenario file not found: {path}")
    scenario = Scenario.load(path)
    if args.seed is not None:
        if scenario.weather.csv is not None:
            log.warning("--seed ignored: the scenario reads weather from %s", scenario.weather.csv)
        scenario = scenario.with_seed(args.seed)
    return scenario


def _forecaster(args, scenario: Scenario) -> WeatherForecaster | None:
    if getattr(args, "model", None):
        path = Path(args.model)
        if not path.is_file():
            raise UsageError(f"model file not found: {path}")
        try:
            return load_weather_model(path)
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"{path}: malformed weather model ({exc})") from None
    return None


def cmd_weather_synth(args) -> int:
    if args.days < 1:
        raise UsageError("--days must be >= 1")
    series = generate_synthetic_weather(args.seed, args.days, args.dt, start=args.start)
    write_weather_csv(series, args.out)
    print(f"wrote {len(series)} records to {args.out}")
    return EXIT_OK


def cmd_weather_train(args) -> int:
    if args.lags < 1:
        raise UsageError("--lags must be >= 1")
    series = load_weather_csv(args.input, dt=args.dt)
    model = WeatherForecaster(spec=WindowSpec(lag_count=args.lags, differences=True))
    report = train_weather_model(series, model=model)
    meta = {
        "source": str(args.input),
        "r2": report.r2,
        "persistence_r2": report.persistence_r2,
        "n_train": report.n_train,
        "n_test": report.n_test,
    }
    save_weather_model(report.model, args.model, meta)
    if report.r2 is None:
        print("held-out R2: undefined (zero-variance test target)")
    else:
        print(f"held-out R2: {report.r2:.5f} (persistence {report.persistence_r2:.5f})")
    print(f"model written to {args.model}")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _scenario(args).with_strategy(args.strategy)
    result = run_experiment(scenario, _forecaster(args, scenario))
    result_path, trace_path = result.write(args.out)
    s = result.summary()
    print(
        f"{s['strategy']}: {s['energy_per_day_per_m2']:.5f} kWh/(day m2), "
        f"occupied violation {s['comfort_violation_fraction']:.3f}"
    )
    print(f"wrote {result_path} and {trace_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _scenario(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad or len(strategies) < 2:
        raise UsageError(f"--strategies needs two or more of {STRATEGIES}, got {args.strategies!r}")
    forecaster = _forecaster(args, scenario)
    if forecaster is None and any(s != "rc1" for s in strategies):
        forecaster = fit_forecaster(scenario.with_strategy("dfc")).model
    results = [run_experiment(scenario.with_strategy(k), forecaster) for k in strategies]
    summary = compare(results)
    out = Path(args.out)
    for r in results:
        r.write(out)
    write_comparison(summary, results, out)
    print(summary.table())
    return EXIT_OK


def cmd_scenario(args) -> int:
    scenario = Scenario()
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    if args.duration is not None:
        scenario = replace(scenario, duration_days=args.duration)
    scenario.save(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dfclab", description="Heat-pump control laboratory")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weather", help="weather data utilities")
    wsub = w.add_subparsers(dest="weather_command", required=True)
    ws = wsub.add_parser("synth", help="write a synthetic weather CSV")
    ws.add_argument("--seed", type=int, required=True)
    ws.add_argument("--days", type=float, required=True)
    ws.add_argument("--out", required=True)
    ws.add_argument("--dt", type=float, default=600.0, help="sample spacing in seconds")
    ws.add_argument("--start", default="2021-01-01T00:00:00Z", help="first timestamp (ISO-8601 UTC)")
    ws.set_defaults(func=cmd_weather_synth)

    wt = wsub.add_parser("train", help="fit the outdoor-temperature model on a weather CSV")
    wt.add_argument("--in", dest="input", required=True)
    wt.add_argument("--model", required=True, help="output model JSON")
    wt.add_argument("--lags", type=int, default=6)
    wt.add_argument("--dt", type=float, default=600.0, help="resample the CSV to this spacing")
    wt.set_defaults(func=cmd_weather_train)

    r = sub.add_parser("run", help="run one strategy on a scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--strategy", choices=STRATEGIES, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, help="override the synthetic weather seed")
    r.add_argument("--model", help="pre-trained weather model JSON (default: train on the scenario history)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several strategies and tabulate savings")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--strategies", default="rc1,rc2,dfc", help="comma-separated; the first is the baseline")
    c.add_argument("--seed", type=int, help="override the synthetic weather seed")
    c.add_argument("--model", help="pre-trained weather model JSON")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("scenario", help="write the reference scenario document")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float, help="evaluation days")
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ExperimentAborted, SimulationFault, PlannerError) as exc:
        print(f"error: runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, ScenarioError, WeatherFormatError, ComparisonError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
