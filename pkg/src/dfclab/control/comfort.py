from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..thermal import local_hour


@dataclass(frozen=True)
class ComfortSchedule:
    """Day/night setpoints (deg C) with a closed tolerance band around each."""

    day_setpoint: float = 21.0
    night_setpoint: float = 19.0
    day_start: float = 7.0
    day_end: float = 18.0
    band: float = 0.5
    utc_offset_hours: float = 0.0

    def __post_init__(self):
        if not self.band > 0:
            raise ValueError("band must be positive")
        if not (math.isfinite(self.day_setpoint) and math.isfinite(self.night_setpoint)):
            raise ValueError("setpoints must be finite")

    def is_day(self, timestamp: float) -> bool:
        hour = local_hour(timestamp, self.utc_offset_hours)
        return self.day_start <= hour < self.day_end

    def setpoint(self, timestamp: float) -> float:
        return self.day_setpoint if self.is_day(timestamp) else self.night_setpoint

    def in_band(self, temperature: float, timestamp: float) -> bool:
        sp = self.setpoint(timestamp)
        return sp - self.band <= temperature <= sp + self.band


def comfort_violated(temps: Sequence[float], schedule: ComfortSchedule, times: Sequence[float]) -> bool:
    """True iff any temperature lies strictly outside its setpoint band."""
    if len(temps) != len(times):
        raise ValueError("temps and times must be aligned")
    return any(not schedule.in_band(t, ts) for t, ts in zip(temps, times))
