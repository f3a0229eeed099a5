import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lendsim.fixedpoint import WAD, to_wad
from lendsim.rates import (DEFAULT_PARAMS, InterestParams, RegimeSchedule, active_params, borrow_rate,
                           supply_rate)

P = InterestParams.from_floats(0.02, 0.20, 2.00, 0.80, 0.10)


def test_borrow_rate_examples():
    assert borrow_rate(P, 0) == to_wad("0.02")
    assert borrow_rate(P, to_wad("0.8")) == to_wad("0.18")
    assert borrow_rate(P, to_wad("0.9")) == to_wad("0.38")


def test_kink_branches_agree():
    u = P.kink
    low = P.base_rate + P.slope_low * u // WAD
    high = P.base_rate + P.slope_low * P.kink // WAD + P.slope_high * (u - P.kink) // WAD
    assert low == high == borrow_rate(P, u)


def test_supply_rate_examples():
    assert supply_rate(P, 0) == 0
    assert supply_rate(P, to_wad("0.5")) == to_wad("0.054")
    full = InterestParams.from_floats(0.02, 0.2, 2.0, 1.0, 0.0)
    assert supply_rate(full, WAD) == borrow_rate(full, WAD)


def test_utilization_outside_unit_interval():
    with pytest.raises(ValueError):
        borrow_rate(P, WAD + 1)
    with pytest.raises(ValueError):
        supply_rate(P, -1)


def test_param_validation():
    with pytest.raises(ValueError):
        InterestParams.from_floats(0.02, 0.3, 0.2, 0.8)
    with pytest.raises(ValueError):
        InterestParams.from_floats(0.02, 0.2, 2.0, 0.0)
    with pytest.raises(ValueError):
        InterestParams.from_floats(0.02, 0.2, 2.0, 0.8, 1.0)


def test_regime_schedule_boundaries():
    p1 = InterestParams.from_floats(0.0, 0.05, 1.0, 0.9)
    s = RegimeSchedule([(0, P), (100, p1)])
    assert active_params(s, 99) is P
    assert active_params(s, 100) is p1
    assert active_params(s, 250) is p1
    with pytest.raises(ValueError):
        RegimeSchedule([(5, P)])
    with pytest.raises(ValueError):
        RegimeSchedule([(0, P), (0, p1)])


def test_round_trip_dict():
    assert InterestParams.from_dict(DEFAULT_PARAMS.to_dict()) == DEFAULT_PARAMS


params = st.builds(
    lambda a, b, extra, k, lam: InterestParams(a, b, b + extra, k, lam),
    st.integers(0, WAD // 5), st.integers(0, WAD), st.integers(0, 5 * WAD),
    st.integers(WAD // 100, WAD), st.integers(0, WAD - 1),
)


@settings(max_examples=300)
@given(params, st.integers(0, WAD), st.integers(0, WAD))
def test_monotone_and_supply_below_borrow(p, u1, u2):
    lo, hi = sorted((u1, u2))
    assert borrow_rate(p, lo) <= borrow_rate(p, hi)
    if p.reserve_factor > 0 and hi < WAD and borrow_rate(p, hi) > 0:
        assert supply_rate(p, hi) < borrow_rate(p, hi)
