"""Accelerated simulation clock.

All device and ledger timestamps derive from this clock; the
acceleration factor only paces wall-clock sleeps, never the simulated
timeline itself (accel <= 0 disables pacing entirely).
"""

from __future__ import annotations

import time
from datetime import datetime, timedelta, timezone
from fractions import Fraction

DEFAULT_START = datetime(2019, 1, 1, tzinfo=timezone.utc)


class SimClock:
    def __init__(self, start: datetime = DEFAULT_START, accel: float = 1000.0):
        if start.tzinfo is None:
            raise ValueError("clock start must be timezone-aware")
        self.start = start
        self.accel = accel
        self.elapsed_s = Fraction(0)
        self._wall_start = time.monotonic()

    def advance(self, dt_s) -> None:
        dt = Fraction(dt_s)
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.elapsed_s += dt

    def now(self) -> datetime:
        return self.start + timedelta(seconds=float(self.elapsed_s))

    def pace(self) -> None:
        """Sleep so that wall time does not run ahead of elapsed/accel."""
        if self.accel <= 0:
            return
        target = float(self.elapsed_s) / self.accel
        behind = target - (time.monotonic() - self._wall_start)
        if behind > 0:
            time.sleep(behind)
