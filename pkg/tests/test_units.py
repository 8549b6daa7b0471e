from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from metergrid.units import EnergyKwh, pulses_to_kwh, round_kwh_billing


def test_thousand_pulses_is_one_kwh():
    e = pulses_to_kwh(1000)
    assert e.milliwatt_hours == 1_000_000
    assert e.kwh == Decimal("1")


def test_zero_pulses():
    assert pulses_to_kwh(0).kwh == 0


def test_day1_pulse_count():
    assert pulses_to_kwh(14208).kwh == Decimal("14.208")


@given(st.integers(min_value=0, max_value=10**9))
def test_conversion_is_exact_integer_identity(p):
    assert pulses_to_kwh(p).milliwatt_hours == 1000 * p


def test_negative_pulses_rejected():
    with pytest.raises(ValueError):
        pulses_to_kwh(-1)
    with pytest.raises(ValueError):
        EnergyKwh(-5)


@pytest.mark.parametrize(
    "pulses,billed",
    [
        (14208, "14.2"),
        (14664, "14.7"),
        (15336, "15.3"),
        (50, "0.1"),  # 0.05 kWh rounds half-up
        (49, "0.0"),
        (16440, "16.4"),
    ],
)
def test_billing_rounds_one_decimal_half_up(pulses, billed):
    assert round_kwh_billing(pulses_to_kwh(pulses)) == Decimal(billed)
