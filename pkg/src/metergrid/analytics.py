"""Batch analytics over pulse history: daily billing rows, weekly
classification, and band-based anomaly flagging.

All functions are pure over their inputs; rerunning on the same ledger
slice yields identical rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta
from decimal import Decimal
from typing import Iterable, Optional, Sequence

from .money import Money
from .tariff import TariffSchedule, prepaid_total_cost
from .units import pulses_to_kwh, round_kwh_billing
from .usage import EmptySeries, WeekClassification, classify_week


class WindowTooShort(Exception):
    pass


@dataclass(frozen=True)
class DailyConsumption:
    day: date
    pulse_count: int
    kwh: Decimal
    vat: Money
    total: Money


@dataclass(frozen=True)
class AnomalyFlag:
    day: date
    kwh: Decimal
    reason: str  # above_band | below_band
    band: tuple[Decimal, Decimal]


def bucket_daily(events: Iterable[tuple[datetime, int]]) -> dict[date, int]:
    """Sum pulse deltas per UTC calendar day of the report timestamp."""
    buckets: dict[date, int] = {}
    for at, delta in events:
        day = at.date()
        buckets[day] = buckets.get(day, 0) + delta
    return buckets


def daily_rows(
    buckets: dict[date, int],
    schedule: TariffSchedule,
    start: Optional[date] = None,
    end: Optional[date] = None,
) -> list[DailyConsumption]:
    """Billing rows per day; days without pulses become zero rows.

    The range defaults to [min bucket day, max bucket day]; pass
    start/end to pin it (end inclusive).
    """
    if not buckets and (start is None or end is None):
        return []
    lo = start if start is not None else min(buckets)
    hi = end if end is not None else max(buckets)
    rows = []
    day = lo
    while day <= hi:
        pulses = buckets.get(day, 0)
        kwh = round_kwh_billing(pulses_to_kwh(pulses))
        bill = prepaid_total_cost(kwh, schedule)
        rows.append(
            DailyConsumption(
                day=day, pulse_count=pulses, kwh=kwh, vat=bill.vat, total=bill.total
            )
        )
        day += timedelta(days=1)
    return rows


def aggregate_daily(
    events: Iterable[tuple[datetime, int]],
    schedule: TariffSchedule,
    start: Optional[date] = None,
    end: Optional[date] = None,
) -> list[DailyConsumption]:
    return daily_rows(bucket_daily(events), schedule, start, end)


def weekly_report(
    rows: Sequence[DailyConsumption],
) -> tuple[WeekClassification, list[tuple[date, Decimal]]]:
    """Classification plus the (day, kWh) chart series in input order."""
    if not rows:
        raise EmptySeries("no daily rows")
    series = [(r.day, r.kwh) for r in rows]
    return classify_week([r.kwh for r in rows]), series


def flag_anomalies(
    rows: Sequence[DailyConsumption],
    trailing_window: int,
    margin_ratio: Decimal = Decimal("0.10"),
) -> list[AnomalyFlag]:
    """Flag days outside the banded range of their trailing window.

    Band = [window min - m, window max + m] with m = margin_ratio of
    the window spread; a zero-spread window yields a point band.
    """
    if trailing_window < 2:
        raise WindowTooShort("trailing window must cover at least 2 days")
    flags = []
    for i in range(trailing_window, len(rows)):
        window = [r.kwh for r in rows[i - trailing_window:i]]
        lo, hi = min(window), max(window)
        margin = margin_ratio * (hi - lo)
        band = (lo - margin, hi + margin)
        day = rows[i]
        if day.kwh > band[1]:
            flags.append(AnomalyFlag(day.day, day.kwh, "above_band", band))
        elif day.kwh < band[0]:
            flags.append(AnomalyFlag(day.day, day.kwh, "below_band", band))
    return flags


def write_report_csv(rows: Sequence[DailyConsumption], path) -> None:
    """Daily table as comma-separated rows: day,pulses,kwh,vat,total."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("day,pulses,kwh,vat,total\n")
        for r in rows:
            fh.write(f"{r.day.isoformat()},{r.pulse_count},{r.kwh},{r.vat},{r.total}\n")
