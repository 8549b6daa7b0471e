"""Weekly usage classification and the prepaid balance alert rule."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Sequence

from .money import Money

ALERT_THRESHOLD = Fraction(4, 5)

_CENT = Decimal("0.01")


class EmptySeries(Exception):
    pass


class NonPositiveBalance(Exception):
    pass


@dataclass(frozen=True)
class WeekClassification:
    """Base (minimum day), maximum day, and rounded mean of a week."""

    base_kwh: Decimal
    max_kwh: Decimal
    average_kwh: Decimal


def classify_week(
    daily_kwh: Sequence, rounding: str = ROUND_HALF_UP
) -> WeekClassification:
    """Classify daily kWh values into base / average / maximum use.

    Average is the 2-decimal arithmetic mean; `rounding` may be set to
    ROUND_DOWN to match sources that truncate instead.
    """
    values = [Decimal(str(v)) for v in daily_kwh]
    if not values:
        raise EmptySeries("need at least one daily value")
    if any(v < 0 for v in values):
        raise ValueError("daily kWh values must be non-negative")
    mean = sum(values) / len(values)
    return WeekClassification(
        base_kwh=min(values),
        max_kwh=max(values),
        average_kwh=mean.quantize(_CENT, rounding=rounding),
    )


def prepaid_alert_due(
    balance: Money, consumed_cost: Money, threshold: Fraction = ALERT_THRESHOLD
) -> bool:
    """True once consumed cost reaches the threshold share of the balance.

    Paisa-exact: compares threshold.den * consumed >= threshold.num * balance,
    no floating point.
    """
    if balance.paisa <= 0:
        raise NonPositiveBalance(f"balance must be positive, got {balance}")
    if consumed_cost.paisa < 0:
        raise ValueError("consumed cost cannot be negative")
    return (
        consumed_cost.paisa * threshold.denominator
        >= balance.paisa * threshold.numerator
    )
