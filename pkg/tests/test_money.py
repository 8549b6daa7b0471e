from decimal import Decimal

import pytest

from metergrid.money import Money, ZERO, round_paisa


def test_from_bdt_parses_two_decimals():
    assert Money.from_bdt("10.34").paisa == 1034
    assert Money.from_bdt(150).paisa == 15000
    assert Money.from_bdt("0.01").paisa == 1


def test_from_bdt_rejects_sub_paisa():
    with pytest.raises(ValueError):
        Money.from_bdt("1.005")


def test_arithmetic_is_exact():
    a = Money.from_bdt("217.14")
    b = Money.from_bdt("150.00")
    assert (a - b).paisa == 6714
    assert (a + b).paisa == 36714
    assert (3 * b).paisa == 45000
    assert ZERO + a == a


def test_display_two_decimals():
    assert str(Money.from_bdt("10.34")) == "10.34"
    assert str(Money(5)) == "0.05"
    assert str(Money(-1034)) == "-10.34"
    assert Money(1034).bdt == Decimal("10.34")


def test_round_paisa_half_up():
    assert round_paisa(Decimal("10.335")) == Money(1034)
    assert round_paisa(Decimal("10.334")) == Money(1033)
    assert round_paisa(Decimal("0.005")) == Money(1)


def test_money_times_ratio_rejected():
    with pytest.raises(TypeError):
        Money(100) * 0.5
