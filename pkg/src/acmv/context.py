"""City-wide contextual features attached to each time interval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from acmv.errors import BoundsError

WEATHER = ("sunny", "cloudy", "rainy")
N_HOURS = 24


@dataclass(frozen=True)
class ContextRecord:
    hour: int
    weather: str
    holiday: bool

    def __post_init__(self):
        if not 0 <= self.hour < N_HOURS:
            raise BoundsError(f"hour {self.hour} outside [0, 24)")
        if self.weather not in WEATHER:
            raise BoundsError(f"unknown weather {self.weather!r}; expected one of {WEATHER}")

    def codes(self):
        """Integer codes (hour, weather, holiday) used by the embedding tables."""
        return (self.hour, WEATHER.index(self.weather), int(bool(self.holiday)))


def context_codes(records):
    """Stack records into an int array of shape (len(records), 3)."""
    return np.array([r.codes() for r in records], dtype=np.int64).reshape(-1, 3)
