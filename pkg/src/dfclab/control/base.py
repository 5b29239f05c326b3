from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from ..thermal import ThermalState
from ..weather import WeatherRecord


def clamp_unit(x: float) -> float:
    return min(max(float(x), 0.0), 1.0)


@dataclass(frozen=True)
class ControlState:
    """Relative compressor speed."""

    n_set: float

    def __post_init__(self):
        if not 0.0 <= self.n_set <= 1.0:
            raise ValueError(f"n_set={self.n_set} outside [0, 1]")


@dataclass(frozen=True)
class ControlPlan:
    steps: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(float(v) for v in self.steps))
        if any(not 0.0 <= v <= 1.0 for v in self.steps):
            raise ValueError("plan values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def head(self) -> ControlState:
        return ControlState(self.steps[0])


@dataclass(frozen=True)
class Observation:
    """What a controller sees at the start of a control step.

    ``forecast`` covers the next horizon steps; element 0 is the weather
    measured now, later elements are model forecasts.
    """

    step: int
    timestamp: float
    state: ThermalState
    weather: WeatherRecord
    forecast: Sequence[WeatherRecord]
    dt: float


class Controller(Protocol):
    name: str

    def step(self, obs: Observation) -> ControlState: ...
