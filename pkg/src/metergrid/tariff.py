"""Tiered tariff engine: prepaid bills and postpaid purchasable energy.

A prepaid bill is total = energy_charge + demand_charge + vat, where the
energy charge accumulates tier by tier and VAT is 5 % (configurable) of
energy charge plus demand charge.  Postpaid converts a paid amount into
purchasable energy after VAT, meter rent and demand charge.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Optional

from .money import Money, ZERO, round_paisa

_PULSE_KWH = Decimal("0.001")


class TariffError(Exception):
    pass


class UnitsExceedSchedule(TariffError):
    """Consumption overflows a schedule whose final tier is bounded."""


class InsufficientPayment(TariffError):
    """Paid amount does not cover the fixed charges."""


@dataclass(frozen=True)
class TariffTier:
    """A consumption band: `units` kWh priced at `price_per_unit` per kWh.

    units=None marks an unbounded final tier.
    """

    price_per_unit: Money
    units: Optional[Decimal] = None

    def __post_init__(self):
        if self.units is not None and self.units <= 0:
            raise ValueError("bounded tier must span > 0 units")


@dataclass(frozen=True)
class TariffSchedule:
    tiers: tuple[TariffTier, ...]
    demand_charge_prepaid: Money = Money.from_bdt("150.00")
    demand_charge_postpaid: Money = Money.from_bdt("50.00")
    vat_rate: Decimal = Decimal("0.05")
    meter_rent: Money = Money.from_bdt("40.00")
    rebate_rate: Decimal = Decimal("0.01")

    def __post_init__(self):
        if not self.tiers:
            raise ValueError("schedule needs at least one tier")
        if any(t.units is None for t in self.tiers[:-1]):
            raise ValueError("only the final tier may be unbounded")
        if not (0 <= self.vat_rate <= 1) or not (0 <= self.rebate_rate <= 1):
            raise ValueError("vat_rate and rebate_rate must be in [0, 1]")
        for m in (self.demand_charge_prepaid, self.demand_charge_postpaid,
                  self.meter_rent):
            if m.paisa < 0:
                raise ValueError("money fields must be non-negative")


def flat_demo_schedule() -> TariffSchedule:
    """Single unbounded 4.00 BDT/unit tier, the bundled demo default."""
    return TariffSchedule(tiers=(TariffTier(Money.from_bdt("4.00")),))


@dataclass(frozen=True)
class BillBreakdown:
    """Itemized prepaid bill; total = energy_charge + demand_charge + vat."""

    billed_units: Decimal
    tier_charges: tuple[Money, ...]
    tier_units: tuple[Decimal, ...]
    energy_charge: Money
    demand_charge: Money
    vat: Money
    total: Money


@dataclass(frozen=True)
class PostpaidBreakdown:
    paid_amount: Money
    vat: Money
    meter_rent: Money
    demand_charge: Money
    purchasable: Money
    rebate: Money
    purchasable_units: Decimal


def tiered_energy_charge(
    units: Decimal, schedule: TariffSchedule
) -> tuple[list[Money], list[Decimal]]:
    """Greedy tier walk: charge for `units` kWh, tier by tier.

    Returns per-tier charges (each rounded to paisa half-up) and the
    per-tier unit split, which sums to `units` exactly.
    """
    if units < 0:
        raise ValueError("units cannot be negative")
    charges: list[Money] = []
    splits: list[Decimal] = []
    remaining = units
    for tier in schedule.tiers:
        take = remaining if tier.units is None else min(remaining, tier.units)
        splits.append(take)
        charges.append(round_paisa(take * tier.price_per_unit.bdt))
        remaining -= take
    if remaining > 0:
        raise UnitsExceedSchedule(
            f"{units} kWh exceeds schedule span by {remaining} kWh"
        )
    return charges, splits


def prepaid_total_cost(units: Decimal, schedule: TariffSchedule) -> BillBreakdown:
    """Prepaid bill for `units` kWh: tiered charge + demand charge + VAT."""
    charges, splits = tiered_energy_charge(units, schedule)
    energy_charge = sum(charges, ZERO)
    demand = schedule.demand_charge_prepaid
    vat = round_paisa(schedule.vat_rate * (energy_charge + demand).bdt)
    return BillBreakdown(
        billed_units=units,
        tier_charges=tuple(charges),
        tier_units=tuple(splits),
        energy_charge=energy_charge,
        demand_charge=demand,
        vat=vat,
        total=energy_charge + demand + vat,
    )


def purchasable_units(budget: Money, schedule: TariffSchedule) -> Decimal:
    """Greatest whole-pulse unit count whose tiered charge fits in budget.

    Inverts the greedy tier walk; partial tiers resolve to 0.001 kWh
    (one pulse) granularity, rounding down.
    """
    if budget.paisa <= 0:
        return Decimal("0.000")
    bought = Decimal(0)
    left = Decimal(budget.paisa) / 100
    for tier in schedule.tiers:
        price = tier.price_per_unit.bdt
        if tier.units is not None:
            full_cost = round_paisa(tier.units * price).bdt
            if left >= full_cost:
                bought += tier.units
                left -= full_cost
                continue
        if price == 0:
            if tier.units is None:
                raise ValueError("unbounded free tier: infinite purchasable units")
            bought += tier.units
            continue
        bought += (left / price).quantize(_PULSE_KWH, rounding="ROUND_DOWN")
        left = Decimal(0)
        break
    return bought.quantize(_PULSE_KWH)


def postpaid_purchasable(paid: Money, schedule: TariffSchedule) -> PostpaidBreakdown:
    """Postpaid conversion: purchasable = paid - (vat + meter rent + demand).

    VAT is taken on (paid - meter rent).  The 1 % rebate on
    (paid - vat + demand) is reported informationally and not folded
    into the purchasable amount.
    """
    rent = schedule.meter_rent
    demand = schedule.demand_charge_postpaid
    vat = round_paisa(schedule.vat_rate * (paid - rent).bdt)
    purchasable = paid - (vat + rent + demand)
    if purchasable.paisa < 0:
        raise InsufficientPayment(
            f"paid {paid} does not cover vat {vat} + rent {rent} + demand {demand}"
        )
    rebate = round_paisa(schedule.rebate_rate * (paid - vat + demand).bdt)
    return PostpaidBreakdown(
        paid_amount=paid,
        vat=vat,
        meter_rent=rent,
        demand_charge=demand,
        purchasable=purchasable,
        rebate=rebate,
        purchasable_units=purchasable_units(purchasable, schedule),
    )
