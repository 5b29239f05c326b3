"""Weather records and series: CSV ingestion, resampling, synthetic generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

COLUMNS = ("temp", "dew", "hum", "pres", "winds", "solar")
REQUIRED_COLUMNS = ("timestamp", "temp", "dew", "hum", "pres", "winds")
DEFAULT_INTERVAL = 600.0

# Aachen-ish latitude for the synthetic solar geometry.
_LATITUDE_DEG = 50.8


class WeatherFormatError(ValueError):
    """Raised for malformed weather input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class WeatherRecord:
    timestamp: float
    temp: float
    dew: float
    hum: float
    pres: float
    winds: float
    solar: float = 0.0

    def validate(self) -> None:
        values = (self.timestamp, self.temp, self.dew, self.hum, self.pres, self.winds, self.solar)
        if not all(math.isfinite(v) for v in values):
            raise WeatherFormatError("non-finite value in weather record")
        if not 0.0 <= self.hum <= 100.0:
            raise WeatherFormatError(f"hum={self.hum} outside [0, 100]")
        if not 800.0 <= self.pres <= 1100.0:
            raise WeatherFormatError(f"pres={self.pres} outside [800, 1100]")
        if self.winds < 0.0:
            raise WeatherFormatError(f"winds={self.winds} is negative")
        if self.solar < 0.0:
            raise WeatherFormatError(f"solar={self.solar} is negative")
        if self.dew > self.temp + 0.5:
            raise WeatherFormatError(f"dew={self.dew} exceeds temp={self.temp} by more than 0.5")


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    """Uniformly spaced weather, stored column-wise.

    Indexing with an int returns a ``WeatherRecord``; slicing returns a
    ``WeatherSeries``.
    """

    timestamps: np.ndarray
    temp: np.ndarray
    dew: np.ndarray
    hum: np.ndarray
    pres: np.ndarray
    winds: np.ndarray
    solar: np.ndarray
    interval: float = DEFAULT_INTERVAL

    def __post_init__(self):
        n = len(self.timestamps)
        for name in ("timestamps",) + COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise WeatherFormatError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if n >= 2:
            steps = np.diff(self.timestamps)
            if np.any(steps <= 0):
                raise WeatherFormatError("timestamps must be strictly increasing")
            if not np.allclose(steps, self.interval, rtol=0, atol=1e-6):
                raise WeatherFormatError(f"series is not uniformly spaced at {self.interval} s")

    @classmethod
    def from_records(cls, records: Sequence[WeatherRecord], interval: float | None = None) -> WeatherSeries:
        records = list(records)
        if interval is None:
            interval = records[1].timestamp - records[0].timestamp if len(records) > 1 else DEFAULT_INTERVAL
        cols = {name: [getattr(r, name) for r in records] for name in ("timestamp",) + COLUMNS}
        return cls(
            timestamps=np.array(cols["timestamp"], dtype=float),
            **{name: np.array(cols[name], dtype=float) for name in COLUMNS},
            interval=float(interval),
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, key):
        if isinstance(key, slice):
            return WeatherSeries(
                timestamps=self.timestamps[key],
                **{name: getattr(self, name)[key] for name in COLUMNS},
                interval=self.interval,
            )
        i = int(key)
        return WeatherRecord(
            timestamp=float(self.timestamps[i]),
            **{name: float(getattr(self, name)[i]) for name in COLUMNS},
        )

    def __iter__(self) -> Iterator[WeatherRecord]:
        for i in range(len(self)):
            yield self[i]

    def column(self, name: str) -> np.ndarray:
        if name == "timestamp":
            return self.timestamps
        if name not in COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    def validate(self) -> None:
        for i, rec in enumerate(self):
            try:
                rec.validate()
            except WeatherFormatError as exc:
                raise WeatherFormatError(f"record {i}: {exc}") from None

    def index_of(self, timestamp: float) -> int:
        """Position of ``timestamp`` on the series grid."""
        pos = (timestamp - self.timestamps[0]) / self.interval
        i = int(round(pos))
        if abs(pos - i) > 1e-6 or not 0 <= i < len(self):
            raise KeyError(f"timestamp {timestamp} is not on the series grid")
        return i


def parse_timestamp(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def resample(series: WeatherSeries, dt: float) -> WeatherSeries:
    """Linear interpolation onto a ``dt`` grid anchored at the first timestamp."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if math.isclose(series.interval, dt):
        return series
    span = series.timestamps[-1] - series.timestamps[0]
    count = int(math.floor(span / dt + 1e-9)) + 1
    grid = series.timestamps[0] + dt * np.arange(count)
    return WeatherSeries(
        timestamps=grid,
        **{name: np.interp(grid, series.timestamps, getattr(series, name)) for name in COLUMNS},
        interval=float(dt),
    )


def load_weather_csv(path: str | Path, dt: float | None = DEFAULT_INTERVAL) -> WeatherSeries:
    """Read a weather CSV with header ``timestamp,temp,dew,hum,pres,winds[,solar]``.

    The file must be uniformly spaced; it is resampled to ``dt`` when the
    source spacing differs (pass ``dt=None`` to keep the native spacing).
    Errors carry the offending line number.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise WeatherFormatError("empty file", line=1) from None
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise WeatherFormatError(f"missing required column {col!r}", line=1)
        unknown = set(header) - set(REQUIRED_COLUMNS) - {"solar"}
        if unknown:
            raise WeatherFormatError(f"unexpected column(s) {sorted(unknown)}", line=1)
        pos = {name: header.index(name) for name in header}

        records: list[WeatherRecord] = []
        prev_ts = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise WeatherFormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                ts = parse_timestamp(row[pos["timestamp"]])
                values = {c: float(row[pos[c]]) for c in REQUIRED_COLUMNS[1:]}
                values["solar"] = float(row[pos["solar"]]) if "solar" in pos else 0.0
            except ValueError as exc:
                raise WeatherFormatError(f"unparsable row: {exc}", line=lineno) from None
            rec = WeatherRecord(timestamp=ts, **values)
            try:
                rec.validate()
            except WeatherFormatError as exc:
                raise WeatherFormatError(str(exc), line=lineno) from None
            if prev_ts is not None and ts <= prev_ts:
                raise WeatherFormatError("timestamps are not strictly increasing", line=lineno)
            if len(records) >= 2:
                expected = records[1].timestamp - records[0].timestamp
                if not math.isclose(ts - prev_ts, expected, abs_tol=1e-6):
                    raise WeatherFormatError(
                        f"non-uniform spacing ({ts - prev_ts} s, expected {expected} s)", line=lineno
                    )
            records.append(rec)
            prev_ts = ts

    if not records:
        raise WeatherFormatError("no data rows", line=2)
    series = WeatherSeries.from_records(records)
    if dt is not None and len(series) > 1:
        series = resample(series, dt)
    return series


def write_weather_csv(series: WeatherSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS + ("solar",))
        for rec in series:
            writer.writerow(
                [format_timestamp(rec.timestamp)]
                + [repr(round(getattr(rec, c), 6)) for c in COLUMNS]
            )


def _ar1(rng: np.random.Generator, n: int, tau: float, dt: float) -> np.ndarray:
    """Unit-variance AR(1) with correlation time ``tau`` seconds."""
    phi = math.exp(-dt / tau)
    scale = math.sqrt(1.0 - phi * phi)
    eps = rng.standard_normal(n)
    out = np.empty(n)
    acc = eps[0]
    out[0] = acc
    for i in range(1, n):
        acc = phi * acc + scale * eps[i]
        out[i] = acc
    return out


def _smooth(x: np.ndarray, tau: float, dt: float) -> np.ndarray:
    """First-order low-pass, rescaled back to unit variance."""
    a = math.exp(-dt / tau)
    out = np.empty_like(x)
    acc = x[0]
    for i, v in enumerate(x):
        acc = a * acc + (1.0 - a) * v
        out[i] = acc
    return (out - out.mean()) / (out.std() + 1e-12)


def _solar_elevation_sin(ts: np.ndarray) -> np.ndarray:
    day = (ts / 86400.0) % 365.25
    hour = (ts % 86400.0) / 3600.0
    decl = math.radians(23.44) * np.sin(2 * np.pi * (day - 80.0) / 365.25)
    lat = math.radians(_LATITUDE_DEG)
    hour_angle = np.radians(15.0 * (hour - 12.0))
    return np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)


def generate_synthetic_weather(
    seed: int,
    days: float,
    dt: float = DEFAULT_INTERVAL,
    start: float | str = "2021-01-01T00:00:00Z",
) -> WeatherSeries:
    """Deterministic Aachen-like weather.

    Temperature is an annual sinusoid plus a diurnal sinusoid plus smooth
    seeded autoregressive noise; the other columns are derived so the record
    invariants hold (dew from a Magnus inversion of temp and humidity).
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    if isinstance(start, str):
        start = parse_timestamp(start)
    n = int(round(days * 86400.0 / dt))
    ts = float(start) + dt * np.arange(n)
    rng = np.random.default_rng(seed)

    doy = (ts / 86400.0) % 365.25  # days since 1 Jan, approximately
    hour = (ts % 86400.0) / 3600.0
    season = -np.cos(2 * np.pi * (doy - 15.0) / 365.25)  # -1 mid January, +1 mid July
    annual = 10.5 + 7.5 * season
    diurnal_amp = 2.5 + 1.5 * (season + 1.0) / 2.0
    diurnal = diurnal_amp * np.cos(2 * np.pi * (hour - 15.0) / 24.0)

    synoptic = _smooth(_ar1(rng, n, tau=1.5 * 86400.0, dt=dt), tau=3 * 3600.0, dt=dt)
    temp = annual + diurnal + 3.0 * synoptic + 0.03 * rng.standard_normal(n)

    hum_noise = _smooth(_ar1(rng, n, tau=86400.0, dt=dt), tau=2 * 3600.0, dt=dt)
    hum = np.clip(78.0 - 12.0 * np.cos(2 * np.pi * (hour - 15.0) / 24.0) + 8.0 * hum_noise, 25.0, 100.0)
    a, b = 17.62, 243.12
    gamma = np.log(hum / 100.0) + a * temp / (b + temp)
    dew = np.minimum(b * gamma / (a - gamma), temp)

    pres = np.clip(1013.0 + 9.0 * _smooth(_ar1(rng, n, tau=2 * 86400.0, dt=dt), 6 * 3600.0, dt), 950.0, 1060.0)
    winds = np.abs(3.5 + 1.8 * _smooth(_ar1(rng, n, tau=0.5 * 86400.0, dt=dt), 3600.0, dt))

    clearness = np.clip(0.42 - 0.25 * hum_noise, 0.1, 0.9)  # overcast central-European winter
    solar = np.maximum(0.0, _solar_elevation_sin(ts)) * 1000.0 * clearness

    return WeatherSeries(
        timestamps=ts, temp=temp, dew=dew, hum=hum, pres=pres, winds=winds, solar=solar, interval=float(dt)
    )


def concat(parts: Iterable[WeatherSeries]) -> WeatherSeries:
    parts = list(parts)
    return WeatherSeries(
        timestamps=np.concatenate([p.timestamps for p in parts]),
        **{name: np.concatenate([getattr(p, name) for p in parts]) for name in COLUMNS},
        interval=parts[0].interval,
    )
