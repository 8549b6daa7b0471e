"""Fixed-point money in BDT paisa (1 BDT = 100 paisa).

All arithmetic is exact integer paisa; fractional results are rounded
half-up only at named quantities (tier charge, VAT, rebate), never on
intermediate products.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

_CENT = Decimal("0.01")


@dataclass(frozen=True, order=True)
class Money:
    """An exact BDT amount stored as signed integer paisa."""

    paisa: int

    @classmethod
    def from_bdt(cls, amount) -> "Money":
        """Parse a BDT amount (str/int/Decimal) with at most 2 decimals."""
        d = Decimal(str(amount))
        paisa = d * 100
        if paisa != paisa.to_integral_value():
            raise ValueError(f"sub-paisa amount: {amount}")
        return cls(int(paisa))

    @property
    def bdt(self) -> Decimal:
        return (Decimal(self.paisa) / 100).quantize(_CENT)

    def __add__(self, other: "Money") -> "Money":
        return Money(self.paisa + other.paisa)

    def __sub__(self, other: "Money") -> "Money":
        return Money(self.paisa - other.paisa)

    def __neg__(self) -> "Money":
        return Money(-self.paisa)

    def __mul__(self, n: int) -> "Money":
        if not isinstance(n, int):
            raise TypeError("Money only multiplies by int; use round_paisa for ratios")
        return Money(self.paisa * n)

    __rmul__ = __mul__

    def __str__(self) -> str:
        sign = "-" if self.paisa < 0 else ""
        return f"{sign}{abs(self.paisa) // 100}.{abs(self.paisa) % 100:02d}"


ZERO = Money(0)


def round_paisa(amount: Decimal) -> Money:
    """Round a Decimal BDT amount half-up to whole paisa."""
    return Money(int((amount * 100).to_integral_value(rounding=ROUND_HALF_UP)))
