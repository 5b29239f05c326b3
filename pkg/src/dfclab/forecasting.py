"""Rolling-window features and the one-step-ahead outdoor temperature model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .gbdt import BoostingConfig, Dataset, Ensemble, train
from .weather import COLUMNS, WeatherRecord, WeatherSeries

CALENDAR_FEATURES = 4  # hour-of-day and day-of-year as sin/cos pairs
MODEL_FORMAT = "dfclab.weather-model"
MODEL_VERSION = 1


class ZeroVarianceError(ValueError):
    """R-squared is undefined because the reference values have zero variance."""


@dataclass(frozen=True)
class WindowSpec:
    lag_count: int = 6
    feature_columns: tuple[str, ...] = ("temp", "dew", "hum", "pres", "winds")
    target_column: str = "temp"
    calendar: bool = True
    differences: bool = False
    lead: int = 1

    def __post_init__(self):
        if self.lag_count < 1:
            raise ValueError("lag_count must be >= 1")
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if not self.feature_columns:
            raise ValueError("feature_columns must be non-empty")
        for col in self.feature_columns + (self.target_column,):
            if col not in COLUMNS:
                raise ValueError(f"unknown weather column {col!r}")
        if self.lead != 1:
            raise ValueError("only one-step-ahead windows are supported")

    @property
    def n_features(self) -> int:
        per_col = self.lag_count + (self.lag_count - 1 if self.differences else 0)
        return per_col * len(self.feature_columns) + (CALENDAR_FEATURES if self.calendar else 0)

    def feature_names(self) -> list[str]:
        L = self.lag_count
        names = [f"{c}_lag{L - 1 - k}" for c in self.feature_columns for k in range(L)]
        if self.differences:
            names += [f"{c}_diff{k}" for c in self.feature_columns for k in range(L - 1)]
        if self.calendar:
            names += ["hour_sin", "hour_cos", "doy_sin", "doy_cos"]
        return names


def calendar_features(timestamps: np.ndarray) -> np.ndarray:
    hour = (timestamps % 86400.0) / 86400.0
    doy = (timestamps / 86400.0 % 365.25) / 365.25
    return np.column_stack(
        [np.sin(2 * np.pi * hour), np.cos(2 * np.pi * hour), np.sin(2 * np.pi * doy), np.cos(2 * np.pi * doy)]
    )


def _window_matrix(columns: dict[str, np.ndarray], timestamps: np.ndarray, spec: WindowSpec, ends: np.ndarray):
    """Feature rows for windows ending at the indices in ``ends`` (inclusive)."""
    idx = ends[:, None] + np.arange(-spec.lag_count + 1, 1)[None, :]
    return _features_from_buffers({c: columns[c][idx] for c in spec.feature_columns}, timestamps[idx], spec)


def _features_from_buffers(buffers: dict[str, np.ndarray], stamps: np.ndarray, spec: WindowSpec) -> np.ndarray:
    """``buffers[c]`` and ``stamps`` hold one window per row, oldest value first."""
    blocks = [buffers[c] for c in spec.feature_columns]
    if spec.differences:
        blocks += [np.diff(buffers[c], axis=1)[:, ::-1] for c in spec.feature_columns]
    if spec.calendar:
        blocks.append(calendar_features(stamps[:, -1]))
    return np.hstack(blocks)


def build_rolling_windows(series: WeatherSeries, spec: WindowSpec) -> Dataset:
    """One row per forecastable step t: the L values up to and including t, target at t+1.

    Per column the lags run oldest to newest; optional differences follow
    (newest first), then the calendar terms of step t.
    """
    n = len(series)
    L = spec.lag_count
    if n <= L:
        raise ValueError(f"series of length {n} is too short for {L} lags")
    ends = np.arange(L - 1, n - 1)
    columns = {c: series.column(c) for c in set(spec.feature_columns) | {spec.target_column}}
    X = _window_matrix(columns, series.timestamps, spec, ends)
    y = columns[spec.target_column][ends + 1]
    return Dataset(X, y)


def window_features(window: WeatherSeries | Sequence[WeatherRecord], spec: WindowSpec) -> np.ndarray:
    if not isinstance(window, WeatherSeries):
        window = WeatherSeries.from_records(window)
    if len(window) != spec.lag_count:
        raise ValueError(f"window has {len(window)} records, expected {spec.lag_count}")
    columns = {c: window.column(c) for c in spec.feature_columns}
    return _window_matrix(columns, window.timestamps, spec, np.array([spec.lag_count - 1]))[0]


def r_squared(predicted, actual) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or actual.size < 2:
        raise ValueError("need two equal-length sequences of at least 2 values")
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVarianceError("actual values have zero variance")
    return 1.0 - float(np.sum((actual - predicted) ** 2)) / ss_tot


class RollingWindowFeatures(TransformerMixin, BaseEstimator):
    """Stateless transformer: ``WeatherSeries`` -> rolling-window feature matrix."""

    def __init__(self, spec: WindowSpec | None = None):
        self.spec = spec

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: WeatherSeries) -> np.ndarray:
        return build_rolling_windows(X, self.spec or WindowSpec()).X


class WeatherForecaster(RegressorMixin, BaseEstimator):
    """One-step-ahead forecaster of a weather column from a rolling window.

    With ``predict_change=True`` the boosted model learns the step change of
    the target relative to its newest lag, which trees represent far more
    easily than the level itself; predictions add the newest lag back.
    """

    def __init__(
        self,
        spec: WindowSpec | None = None,
        n_estimators: int = 50,
        learning_rate: float = 0.25,
        max_leaves: int = 31,
        min_samples_leaf: int = 20,
        predict_change: bool = True,
    ):
        self.spec = spec
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_leaves = max_leaves
        self.min_samples_leaf = min_samples_leaf
        self.predict_change = predict_change

    @property
    def spec_(self) -> WindowSpec:
        return self.spec or WindowSpec(differences=True)

    def _anchor_index(self) -> int:
        spec = self.spec_
        if spec.target_column not in spec.feature_columns:
            raise ValueError("predict_change needs the target column among the features")
        return spec.feature_columns.index(spec.target_column) * spec.lag_count + spec.lag_count - 1

    def _config(self) -> BoostingConfig:
        return BoostingConfig(
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_leaves=self.max_leaves,
            min_samples_leaf=self.min_samples_leaf,
        )

    def fit(self, X, y=None, eval_set=None):
        """Fit on a ``WeatherSeries`` (windows built internally) or a prepared ``(X, y)``."""
        if isinstance(X, WeatherSeries):
            ds = build_rolling_windows(X, self.spec_)
        else:
            ds = Dataset(X, y)
        target = ds.y - ds.X[:, self._anchor_index()] if self.predict_change else ds.y
        held = None
        if eval_set is not None:
            Xe, ye = eval_set
            Xe = np.asarray(Xe, dtype=float)
            ye = np.asarray(ye, dtype=float)
            held = Dataset(Xe, ye - Xe[:, self._anchor_index()] if self.predict_change else ye)
        self.ensemble_, self.eval_loss_ = train(Dataset(ds.X, target), "squared", self._config(), held)
        self.n_features_in_ = ds.X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "ensemble_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        out = self.ensemble_.predict(X)
        if self.predict_change:
            out = out + X[:, self._anchor_index()]
        return out

    def predict_one(self, x: np.ndarray) -> float:
        check_is_fitted(self, "ensemble_")
        out = self.ensemble_.predict_one(x)
        if self.predict_change:
            out += x[self._anchor_index()]
        return out

    def forecast_step(self, window: WeatherSeries | Sequence[WeatherRecord]) -> float:
        return self.predict_one(window_features(window, self.spec_))

    def rollout(self, window: WeatherSeries | Sequence[WeatherRecord], steps: int) -> np.ndarray:
        """Recursive multi-step forecast of the target column.

        Each prediction becomes the newest lag; the other columns are held at
        their last observed value.
        """
        records = list(window) if not isinstance(window, WeatherSeries) else [window[i] for i in range(len(window))]
        if len(records) != self.spec_.lag_count:
            raise ValueError(f"window has {len(records)} records, expected {self.spec_.lag_count}")
        interval = records[1].timestamp - records[0].timestamp if len(records) > 1 else 600.0
        target = self.spec_.target_column
        out = np.empty(steps)
        for k in range(steps):
            value = self.forecast_step(records)
            out[k] = value
            last = records[-1]
            records = records[1:] + [replace(last, timestamp=last.timestamp + interval, **{target: value})]
        return out

    def rollout_batch(self, series: WeatherSeries, ends: np.ndarray, steps: int) -> np.ndarray:
        """Vectorised :meth:`rollout` for the windows ending at every index in ``ends``.

        Returns an array of shape ``(len(ends), steps)``.
        """
        check_is_fitted(self, "ensemble_")
        spec = self.spec_
        L = spec.lag_count
        ends = np.asarray(ends, dtype=np.int64)
        if np.any(ends < L - 1) or np.any(ends >= len(series)):
            raise ValueError("window end outside the series")
        idx = ends[:, None] + np.arange(-L + 1, 1)[None, :]
        buffers = {c: series.column(c)[idx].copy() for c in spec.feature_columns}
        stamps = series.timestamps[idx].copy()
        out = np.empty((len(ends), steps))
        for k in range(steps):
            X = _features_from_buffers(buffers, stamps, spec)
            pred = self.predict(X)
            out[:, k] = pred
            for c, b in buffers.items():
                newest = pred if c == spec.target_column else b[:, -1]
                buffers[c] = np.column_stack([b[:, 1:], newest])
            stamps = np.column_stack([stamps[:, 1:], stamps[:, -1] + series.interval])
        return out


@dataclass
class WeatherModelReport:
    model: WeatherForecaster
    r2: float | None
    persistence_r2: float | None
    n_train: int
    n_test: int
    split_timestamp: float
    notes: list[str] = field(default_factory=list)

    @property
    def r2_defined(self) -> bool:
        return self.r2 is not None

    @property
    def ensemble(self) -> Ensemble:
        return self.model.ensemble_


def train_weather_model(
    history: WeatherSeries,
    spec: WindowSpec | None = None,
    model: WeatherForecaster | None = None,
    min_days: float = 30.0,
    train_fraction: float = 0.8,
) -> WeatherModelReport:
    """Chronological 80/20 split, fit, and held-out R-squared against persistence."""
    if len(history) * history.interval < min_days * 86400.0 - 1e-6:
        raise ValueError(f"history spans less than {min_days} days")
    model = model if model is not None else WeatherForecaster()
    if spec is not None:
        model.set_params(spec=spec)
    spec = model.spec_
    ds = build_rolling_windows(history, spec)
    n_train = int(math.floor(train_fraction * len(ds)))
    if n_train < 1 or n_train >= len(ds):
        raise ValueError("history too short for a train/test split")
    X_tr, y_tr = ds.X[:n_train], ds.y[:n_train]
    X_te, y_te = ds.X[n_train:], ds.y[n_train:]
    model.fit(X_tr, y_tr)
    newest = spec.feature_columns.index(spec.target_column) * spec.lag_count + spec.lag_count - 1 \
        if spec.target_column in spec.feature_columns else None

    notes: list[str] = []
    r2 = persistence = None
    try:
        r2 = r_squared(model.predict(X_te), y_te)
        if newest is not None:
            persistence = r_squared(X_te[:, newest], y_te)
    except ZeroVarianceError:
        notes.append("held-out target has zero variance; R-squared undefined")
    # Row i targets index L + i, so the first test target sits at L + n_train.
    split_ts = float(history.timestamps[spec.lag_count + n_train])
    return WeatherModelReport(
        model=model,
        r2=r2,
        persistence_r2=persistence,
        n_train=n_train,
        n_test=len(ds) - n_train,
        split_timestamp=split_ts,
        notes=notes,
    )


def forecast_step(model: WeatherForecaster, window: WeatherSeries | Sequence[WeatherRecord]) -> float:
    return model.forecast_step(window)


def weather_model_to_dict(model: WeatherForecaster, metadata: dict | None = None) -> dict:
    check_is_fitted(model, "ensemble_")
    params = model.get_params()
    params.pop("spec")
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": asdict(model.spec_),
        "params": params,
        "ensemble": model.ensemble_.to_dict(),
        "metadata": dict(metadata or {}),
    }


def weather_model_from_dict(doc: dict) -> WeatherForecaster:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported weather-model version {doc.get('version')!r}")
    spec_doc = dict(doc["spec"])
    spec_doc["feature_columns"] = tuple(spec_doc["feature_columns"])
    model = WeatherForecaster(spec=WindowSpec(**spec_doc), **doc["params"])
    model.ensemble_ = Ensemble.from_dict(doc["ensemble"])
    model.n_features_in_ = model.ensemble_.n_features
    if model.n_features_in_ != model.spec_.n_features:
        raise ValueError("ensemble arity does not match the window spec")
    return model


def save_weather_model(model: WeatherForecaster, path: str | Path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(weather_model_to_dict(model, metadata)) + "\n")


def load_weather_model(path: str | Path) -> WeatherForecaster:
    return weather_model_from_dict(json.loads(Path(path).read_text()))
