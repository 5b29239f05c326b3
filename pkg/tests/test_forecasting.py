import numpy as np
import pytest

from dfclab.forecasting import (
    RollingWindowFeatures,
    WeatherForecaster,
    WindowSpec,
    ZeroVarianceError,
    build_rolling_windows,
    calendar_features,
    forecast_step,
    load_weather_model,
    r_squared,
    save_weather_model,
    train_weather_model,
    window_features,
)
from dfclab.weather import WeatherSeries, generate_synthetic_weather


def series_from_temps(temps, dt=600.0, t0=0.0):
    n = len(temps)
    temps = np.asarray(temps, dtype=float)
    return WeatherSeries(
        timestamps=t0 + dt * np.arange(n),
        temp=temps,
        dew=temps - 2.0,
        hum=np.full(n, 70.0),
        pres=np.full(n, 1000.0) + np.arange(n),
        winds=np.full(n, 3.0),
        solar=np.zeros(n),
        interval=dt,
    )


TEMP_ONLY = dict(feature_columns=("temp",), calendar=False)


def test_windows_enumerated_by_hand():
    ds = build_rolling_windows(series_from_temps([1, 2, 3, 4, 5]), WindowSpec(lag_count=2, **TEMP_ONLY))
    assert ds.X.tolist() == [[1, 2], [2, 3], [3, 4]]
    assert ds.y.tolist() == [3, 4, 5]


def test_lag_equal_to_length_minus_one_gives_one_row():
    ds = build_rolling_windows(series_from_temps([1, 2, 3, 4, 5]), WindowSpec(lag_count=4, **TEMP_ONLY))
    assert len(ds) == 1 and ds.y.tolist() == [5]


def test_too_short_series():
    with pytest.raises(ValueError):
        build_rolling_windows(series_from_temps([1, 2]), WindowSpec(lag_count=2, **TEMP_ONLY))


def test_mixed_columns_arity():
    spec = WindowSpec(lag_count=1, feature_columns=("temp", "pres"), calendar=True)
    ds = build_rolling_windows(series_from_temps([5, 6, 7]), spec)
    assert ds.X.shape == (2, 2 * 1 + 4)
    assert ds.X[:, :2].tolist() == [[5, 1000], [6, 1001]]
    assert ds.y.tolist() == [6, 7]


def test_window_bookkeeping_and_no_leakage(winter_weather):
    spec = WindowSpec(lag_count=4, differences=True)
    series = winter_weather[:300]
    ds = build_rolling_windows(series, spec)
    assert len(ds) == len(series) - spec.lag_count
    names = spec.feature_names()
    assert len(names) == ds.X.shape[1]
    for row in (0, 17, len(ds) - 1):
        t = row + spec.lag_count - 1
        for j, col in enumerate(spec.feature_columns):
            block = ds.X[row, j * 4 : (j + 1) * 4]
            assert block.tolist() == series.column(col)[t - 3 : t + 1].tolist()
        assert ds.y[row] == series.temp[t + 1]
    # leakage: perturbing every value after t leaves row t's features untouched
    t = 100
    row = t - spec.lag_count + 1
    tampered = WeatherSeries(
        timestamps=series.timestamps,
        **{c: np.where(np.arange(len(series)) > t, -50.0 if c == "temp" else series.column(c), series.column(c))
           for c in ("temp", "dew", "hum", "pres", "winds", "solar")},
        interval=series.interval,
    )
    assert np.array_equal(build_rolling_windows(tampered, spec).X[row], ds.X[row])


def test_calendar_features_are_periodic():
    ts = np.array([0.0, 86400.0, 3 * 3600.0])
    cal = calendar_features(ts)
    assert cal[0, 0] == pytest.approx(cal[1, 0], abs=1e-12)
    assert cal[2, 0] == pytest.approx(np.sin(2 * np.pi / 8))


@pytest.mark.parametrize(
    "predicted, actual, expected",
    [([1, 2, 3], [1, 2, 3], 1.0), ([2, 2, 2], [1, 2, 3], 0.0), ([1, 2, 4], [1, 2, 3], 0.5)],
)
def test_r_squared(predicted, actual, expected):
    assert r_squared(predicted, actual) == pytest.approx(expected)


def test_r_squared_zero_variance():
    with pytest.raises(ZeroVarianceError):
        r_squared([1.0, 2.0], [3.0, 3.0])


def test_train_requires_thirty_days():
    with pytest.raises(ValueError):
        train_weather_model(generate_synthetic_weather(seed=1, days=10))


def test_chronological_split(winter_weather):
    report = train_weather_model(winter_weather[: 31 * 144], model=WeatherForecaster(n_estimators=5))
    spec = report.model.spec_
    # last training target precedes first test target
    last_train_target = winter_weather.timestamps[spec.lag_count + report.n_train - 1]
    assert last_train_target < report.split_timestamp
    assert report.n_train + report.n_test == 31 * 144 - spec.lag_count


def test_constant_series_flags_undefined_r2():
    series = series_from_temps(np.full(31 * 144, 4.0))
    report = train_weather_model(series, model=WeatherForecaster(n_estimators=3))
    assert not report.r2_defined
    assert report.notes
    assert np.allclose(report.model.predict(build_rolling_windows(series, report.model.spec_).X[:5]), 4.0)


def test_periodic_weather_is_learned():
    n = 35 * 144
    temps = 5 + 4 * np.sin(2 * np.pi * np.arange(n) / 144)
    report = train_weather_model(series_from_temps(temps), model=WeatherForecaster(n_estimators=40))
    assert report.r2 >= 0.99


def test_forecast_step_and_rollout(winter_weather):
    model = WeatherForecaster(n_estimators=20).fit(winter_weather[: 20 * 144])
    window = [winter_weather[i] for i in range(500, 506)]
    assert forecast_step(model, window) == forecast_step(model, window)
    one = model.forecast_step(window)
    path = model.rollout(window, 6)
    assert path[0] == one
    with pytest.raises(ValueError):
        model.forecast_step(window[:5])
    batch = model.rollout_batch(winter_weather, np.array([505, 700]), 6)
    assert np.allclose(batch[0], path, rtol=0, atol=1e-9)


def test_interpolating_model_recovers_training_target():
    spec = WindowSpec(lag_count=2, **TEMP_ONLY)
    series = series_from_temps([1.0, 3.0, 2.0, 7.0, 4.0])
    model = WeatherForecaster(spec=spec, n_estimators=1, learning_rate=1.0, max_leaves=8, min_samples_leaf=1,
                              predict_change=False).fit(series)
    ds = build_rolling_windows(series, spec)
    assert np.allclose(model.predict(ds.X), ds.y, atol=1e-12)
    assert model.forecast_step([series[0], series[1]]) == pytest.approx(2.0)


def test_rollout_error_grows_with_lead(winter_weather):
    model = WeatherForecaster(n_estimators=30).fit(winter_weather[: 25 * 144])
    ends = np.arange(26 * 144, 38 * 144, 7)
    paths = model.rollout_batch(winter_weather, ends, 6)
    truth = np.stack([winter_weather.temp[ends + k] for k in range(1, 7)], axis=1)
    rmse = np.sqrt(np.mean((paths - truth) ** 2, axis=0))
    assert np.all(np.diff(rmse) > 0)


def test_model_file_round_trip(tmp_path, winter_weather):
    model = WeatherForecaster(n_estimators=10).fit(winter_weather[: 10 * 144])
    path = tmp_path / "model.json"
    save_weather_model(model, path, {"note": "x"})
    back = load_weather_model(path)
    X = build_rolling_windows(winter_weather[: 3 * 144], model.spec_).X
    assert np.array_equal(back.predict(X), model.predict(X))
    assert back.get_params()["n_estimators"] == 10


def test_transformer_api(winter_weather):
    spec = WindowSpec(lag_count=3)
    feats = RollingWindowFeatures(spec).fit_transform(winter_weather[:50])
    assert feats.shape == (47, spec.n_features)
    assert np.array_equal(window_features([winter_weather[i] for i in range(3)], spec), feats[0])
