"""Pulse and energy units.

One meter pulse equals 1 Wh, i.e. 1000 pulses per kWh.  Energy is kept
as an exact integer milliwatt-hour count so pulse arithmetic never sees
floating-point error; billing rounds to one decimal kWh half-up.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

PULSES_PER_KWH = 1000
MWH_PER_PULSE = 1000

_TENTH = Decimal("0.1")


@dataclass(frozen=True, order=True)
class EnergyKwh:
    """Exact energy as integer milliwatt-hours (1 pulse = 1000 mWh)."""

    milliwatt_hours: int

    def __post_init__(self):
        if self.milliwatt_hours < 0:
            raise ValueError("energy cannot be negative")

    @property
    def kwh(self) -> Decimal:
        return Decimal(self.milliwatt_hours) / 1_000_000

    def __add__(self, other: "EnergyKwh") -> "EnergyKwh":
        return EnergyKwh(self.milliwatt_hours + other.milliwatt_hours)

    def __str__(self) -> str:
        return f"{round_kwh_billing(self)} kWh"


def pulses_to_kwh(pulses: int) -> EnergyKwh:
    """Convert a pulse count to exact energy (1000 pulses = 1 kWh)."""
    if pulses < 0:
        raise ValueError("pulse count cannot be negative")
    return EnergyKwh(pulses * MWH_PER_PULSE)


def round_kwh_billing(energy: EnergyKwh) -> Decimal:
    """Billing-grade kWh figure: one decimal place, half-up.

    Billing consumes this rounded figure, not the exact value
    (14.208 kWh bills as 14.2).
    """
    return energy.kwh.quantize(_TENTH, rounding=ROUND_HALF_UP)
