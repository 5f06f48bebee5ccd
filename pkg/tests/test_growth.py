import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mudich.errors import GrowthRateError, HorizonError
from mudich.growth import GrowthRate, exponential, geometric, polynomial, table

# shared instances keep the memoised tables warm across hypothesis examples
RATES = {"poly": polynomial(), "exp": exponential(), "geo": geometric(1.3)}


def test_values():
    assert polynomial().value(4) == 5
    assert exponential().value(3) == pytest.approx(20.0855, abs=1e-4)
    for rate in (polynomial(), exponential(), geometric(3.0)):
        assert rate.value(0) == 1.0


def test_values_are_cached_and_identical():
    calls = []

    def gen(n):
        calls.append(n)
        return float(n + 1)

    rate = GrowthRate(gen, 2.0, "counting")
    a = rate.value(10)
    before = len(calls)
    assert rate.value(10) == a
    assert len(calls) == before


@pytest.mark.parametrize("bad, index", [
    ([1.0, 2.0, 2.0], 2),
    ([1.0, 3.0, -1.0], 2),
    ([1.0, float("inf")], 1),
])
def test_invalid_tables_name_the_index(bad, index):
    with pytest.raises(GrowthRateError, match=str(index)):
        table(bad, 10.0)


def test_mu0_must_be_one():
    with pytest.raises(GrowthRateError):
        table([2.0, 3.0], 2.0)


def test_table_horizon():
    rate = table([1, 2, 3], 2.0)
    with pytest.raises(HorizonError):
        rate.value(3)


def test_interp_examples():
    assert polynomial().interp(2.5) == 3.5
    assert exponential().interp(0.5) == pytest.approx((1 + math.e) / 2)
    e = exponential()
    for n in range(6):
        assert e.interp(n) == e.value(n)


def test_interp_inv_examples():
    assert polynomial().interp_inv(3.5) == 2.5
    assert exponential().interp_inv(1.0) == 0.0
    assert exponential().interp_inv(math.exp(2)) == 2.0
    with pytest.raises(ValueError):
        polynomial().interp_inv(0.99)


def test_interp_inv_exact_at_nodes():
    for rate in (polynomial(), exponential(), geometric(1.5)):
        for n in range(40):
            assert rate.interp_inv(rate.value(n)) == n


@settings(max_examples=200, deadline=None)
@given(t=st.floats(min_value=0.0, max_value=500.0), which=st.sampled_from(["poly", "exp", "geo"]))
def test_interp_round_trip(t, which):
    rate = RATES[which]
    assert abs(rate.interp_inv(rate.interp(t)) - t) <= 1e-9 * (1 + t)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(min_value=1.0, max_value=1e6))
def test_interp_inv_is_right_inverse(s):
    rate = RATES["poly"]
    assert rate.interp(rate.interp_inv(s)) == pytest.approx(s, rel=4 * np.finfo(float).eps)


def test_interp_strictly_increasing():
    rate = exponential()
    t = np.linspace(0, 30, 3001)
    v = np.array([rate.interp(x) for x in t])
    assert np.all(np.diff(v) > 0)


def test_validate_examples():
    a = exponential().validate(100)
    assert a.max_ratio == pytest.approx(math.e) and a.ok
    p = polynomial().validate(100)
    assert p.max_ratio == 2.0 and p.argmax_ratio == 0 and p.ok
    # mu_n = 2^(2^n) truncated at horizon 5
    vals = [2.0 ** (2 ** n) for n in range(6)]
    vals[0] = 1.0  # mu_0 = 1 is required; the ratios from n = 1 on are unchanged
    assert table(vals, 2.0 ** 16).validate(5).ok
    bad = table(vals, 2.0 ** 16 - 1).validate(5)
    assert not bad.ratio_ok and bad.max_ratio == 2.0 ** 16


def test_validate_reports_without_raising():
    rate = geometric(3.0, theta=2.0)
    audit = rate.validate(10)
    assert not audit.ok
    assert audit.as_dict()["ok"] is False


def test_log_sum_bound_examples():
    s, b = polynomial().log_sum_bound(1, 4)
    assert s == pytest.approx(float(Fraction(1, 2) + Fraction(1, 3) + Fraction(1, 4)))
    # theta * log(mu_4 / mu_1) = 2 log(5/2)
    assert b == pytest.approx(2 * math.log(2.5))
    assert polynomial().log_sum_bound(3, 3) == (0.0, 0.0)
    s, b = exponential().log_sum_bound(1, 3)
    assert s == pytest.approx(2 * (math.e - 1)) and b == pytest.approx(2 * math.e)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 200), span=st.integers(0, 200), which=st.sampled_from(["poly", "exp", "geo"]))
def test_log_sum_bound_holds(n, span, which):
    rate = {"poly": polynomial(), "exp": exponential(), "geo": geometric(2.5)}[which]
    s, b = rate.log_sum_bound(n, n + span)
    assert s <= b * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(ratios=st.lists(st.floats(1.01, 5.0), min_size=3, max_size=30))
def test_ratio_bound_implies_interp_bound(ratios):
    vals = np.concatenate([[1.0], np.cumprod(ratios)])
    theta = float(max(ratios))
    audit = table(vals, theta).validate(len(ratios))
    assert audit.ratio_ok and audit.interp_ok
    assert audit.max_interp_ratio <= theta ** 2 * (1 + 1e-12)
