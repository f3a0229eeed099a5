from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lendsim import pool as pl
from lendsim.fixedpoint import WAD, to_wad, wad_mul
from lendsim.rates import DEFAULT_PARAMS, InterestParams, RegimeSchedule

BPY = 2_425_846


def make_pool(params=DEFAULT_PARAMS, rate=None, **kw):
    p = pl.PoolState(0, RegimeSchedule.constant(params), BPY, **kw)
    if rate is not None:
        p.initial_exchange_rate = rate
    return p


def test_utilization_examples():
    assert pl.utilization(make_pool(total_cash=to_wad(50), total_borrows=to_wad(50))) == to_wad("0.5")
    assert pl.utilization(make_pool(total_cash=to_wad(50))) == 0
    assert pl.utilization(make_pool(total_cash=to_wad(20), total_borrows=to_wad(80))) == to_wad("0.8")


def test_alternative_utilization_convention():
    p = make_pool(total_cash=to_wad(30), total_borrows=to_wad(80), total_reserves=to_wad(10),
                  utilization_convention=pl.DEPOSITS_PLUS_RESERVES)
    assert pl.utilization(p) == to_wad("0.8")
    with pytest.raises(ValueError):
        make_pool(utilization_convention="bogus")


def test_deposit_at_initial_rate():
    p = make_pool()
    minted = pl.deposit(p, pl.AccountPosition(1, 0), WAD)
    assert abs(minted - to_wad("46.2896")) < 10**6
    with pytest.raises(pl.PoolError):
        pl.deposit(p, pl.AccountPosition(1, 0), 0)


def test_deposit_identity_rate():
    p = make_pool(rate=WAD)
    assert pl.deposit(p, pl.AccountPosition(1, 0), to_wad(100)) == to_wad(100)


def test_withdraw_edge_cases():
    p = make_pool(rate=WAD)
    pos = pl.AccountPosition(1, 0)
    pl.deposit(p, pos, to_wad(10))
    assert pl.withdraw(p, pos, 0) == 0 and p.total_cash == to_wad(10)
    other = pl.AccountPosition(2, 0)
    other.ctoken_balance = to_wad(11)  # inconsistent on purpose
    with pytest.raises(pl.InsufficientCash):
        pl.withdraw(p, other, to_wad(11))
    with pytest.raises(pl.InsufficientBalance):
        pl.withdraw(p, pos, to_wad(11))


def test_redeem_after_rate_moves():
    # rate moves from 46.2896 to 46.2859 cTokens per underlying
    p = make_pool()
    pos = pl.AccountPosition(1, 0)
    minted = pl.deposit(p, pos, WAD)
    p.total_cash = wad_mul(minted, pl.DEFAULT_INITIAL_EXCHANGE_RATE)  # keep supply consistent
    target = Fraction(1) / Fraction("46.2859")
    p.total_cash = int(Fraction(minted) * target)
    got = pl.withdraw(p, pos, minted)
    assert abs(Fraction(got, WAD) - Fraction("46.2896") / Fraction("46.2859")) < Fraction(1, 10**9)


def test_accrual_one_year():
    params = InterestParams.from_floats(0.10, 0.0, 0.0, 0.8, 0.2)
    p = make_pool(params, rate=WAD, total_cash=to_wad(10_000), total_borrows=to_wad(1000), ctoken_supply=to_wad(11_000))
    acc = pl.accrue(p, BPY)
    # per-block rate truncates, so interest lands within one part in 1e11 of 100
    assert abs(acc.interest - to_wad(100)) < to_wad(100) // 10**11
    assert acc.reserves_added == wad_mul(acc.interest, to_wad("0.2"))
    assert p.total_reserves == acc.reserves_added


def test_accrual_zero_blocks_and_no_borrows():
    p = make_pool(total_cash=to_wad(5))
    before = (p.total_borrows, p.total_reserves, p.borrow_index)
    assert pl.accrue(p, 0).blocks == 0
    pl.accrue(p, 100)
    assert (p.total_borrows, p.total_reserves, p.borrow_index) == before
    assert p.last_accrual_block == 100
    with pytest.raises(pl.PoolError):
        pl.accrue(p, 50)


def test_borrow_repay_cycle():
    p = make_pool(rate=WAD)
    lender, b = pl.AccountPosition(1, 0), pl.AccountPosition(2, 0)
    pl.deposit(p, lender, to_wad(1000))
    assert pl.borrow(p, b, to_wad(100)) == to_wad(100)
    assert pl.repay(p, b, to_wad(40)) == to_wad(60)
    assert pl.repay(p, b, to_wad(60)) == 0
    with pytest.raises(pl.PoolError):
        pl.borrow(p, b, 0)
    with pytest.raises(pl.InsufficientCash):
        pl.borrow(p, b, to_wad(5000))


def test_repay_accrued_debt_closes_loan():
    params = InterestParams.from_floats(0.10, 0.0, 0.0, 0.8, 0.0)
    p = make_pool(params, rate=WAD)
    pl.deposit(p, pl.AccountPosition(1, 0), to_wad(1000))
    b = pl.AccountPosition(2, 0)
    pl.borrow(p, b, to_wad(100))
    pl.accrue(p, BPY)
    debt = b.debt(p)
    assert abs(debt - to_wad(110)) < to_wad(110) // 10**10
    with pytest.raises(pl.Overpayment):
        pl.repay(p, b, debt + 1)
    assert pl.repay(p, b, debt) == 0


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from(["dep", "wd", "bor", "rep", "acc"]), st.integers(1, 10**24)),
                max_size=40))
def test_exchange_rate_never_falls_and_borrow_weight_exact(ops):
    p = make_pool()
    a, b = pl.AccountPosition(1, 0), pl.AccountPosition(2, 0)
    block, last_rate = 0, p.exchange_rate
    for op, amt in ops:
        try:
            if op == "dep":
                pl.deposit(p, a, amt)
            elif op == "wd":
                pl.withdraw(p, a, min(amt, a.ctoken_balance))
            elif op == "bor":
                pl.borrow(p, b, min(amt, p.total_cash))
            elif op == "rep":
                pl.repay(p, b, min(amt, b.debt(p)))
            else:
                block += amt % 50_000
                pl.accrue(p, block)
        except pl.PoolError:
            pass
        assert p.borrow_weight == b.borrow_weight()
        if p.ctoken_supply:
            assert p.exchange_rate >= last_rate - 1
            last_rate = p.exchange_rate
