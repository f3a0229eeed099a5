import numpy as np
import pytest

from lendsim.agents import (Agent, AgentError, GasModel, Intent, Strategy, leverage_loop_plan, liquidator_scan,
                            micro_airdrop_wave, sample_capital, step_agent)
from lendsim.fixedpoint import to_wad
from lendsim.ledger import AgentCategory, Token
from world import DAI, ETH, fund_and_supply, make_world, rewards_world

F = to_wad("0.75")
G = to_wad("0.25")


def agent(strategy, params, address=1, cat=AgentCategory.SmallAddress):
    return Agent(address, cat, strategy, params, np.random.default_rng(0))


def totals(plan):
    return sum(d for d, _ in plan), sum(b for _, b in plan)


def test_leverage_plan_small_cases():
    c = to_wad(1000)
    assert leverage_loop_plan(c, DAI, G, F, 0) == [(c, 0)]
    sup, bor = totals(leverage_loop_plan(c, DAI, G, F, 1))
    assert (sup, bor) == (to_wad(1750), to_wad(750))
    with pytest.raises(AgentError):
        leverage_loop_plan(c, DAI, G, to_wad("0.8"), 3)
    with pytest.raises(AgentError):
        leverage_loop_plan(c, DAI, G, F, -1)


def test_leverage_plan_partial_sums():
    c = to_wad(1000)
    for n in (5, 30, 80):
        sup, bor = totals(leverage_loop_plan(c, DAI, G, F, n))
        assert abs(sup / c - (1 - 0.75 ** (n + 1)) / 0.25) < 1e-12
        assert abs(bor / c - 0.75 * (1 - 0.75 ** n) / 0.25) < 1e-12
    sup, bor = totals(leverage_loop_plan(c, DAI, G, F, 200))
    assert abs(sup / c - 4) < 1e-12 and abs(bor / c - 3) < 1e-12


def test_micro_airdrop_wave():
    usdc = Token(2, "USDC", True)
    wave = micro_airdrop_wave(1000, 3, usdc)
    assert len(wave) == 1 and wave[0].count == 1000 and wave[0].category is AgentCategory.MicroAddress
    assert micro_airdrop_wave(0, 3, usdc) == []
    with pytest.raises(AgentError):
        micro_airdrop_wave(10, 5, usdc)
    with pytest.raises(AgentError):
        micro_airdrop_wave(10, 3, Token(0, "ETH"))


def underwater(repay_usd):
    """A borrower at liquidity < 0 whose close-factor repay is worth ``repay_usd``."""
    comp = make_world()
    fund_and_supply(comp, 9, DAI, 1_000_000)
    debt = 2 * repay_usd
    fund_and_supply(comp, 1, ETH, debt / 1500 * 1.001)
    comp.borrow(1, DAI, to_wad(debt))
    comp.prices[ETH] = to_wad(1900)
    return comp


def test_liquidator_profit_threshold():
    gas = GasModel.from_usd(liquidate=20)
    intents = liquidator_scan(underwater(500), gas, liquidator=7)
    assert len(intents) == 1
    it = intents[0]
    assert it.amount == to_wad(500)
    assert 0 <= to_wad(20) - it.expected_profit_usd < 10**6  # seized cTokens round down
    assert liquidator_scan(underwater(100), gas, liquidator=7) == []
    assert liquidator_scan(make_world(), gas, liquidator=7) == []


def test_liquidator_orders_by_profit():
    comp = make_world()
    fund_and_supply(comp, 9, DAI, 1_000_000)
    for addr, debt in ((1, 1000), (2, 5000), (3, 3000)):
        fund_and_supply(comp, addr, ETH, debt / 1500 * 1.001)
        comp.borrow(addr, DAI, to_wad(debt))
    comp.prices[ETH] = to_wad(1900)
    order = [it.borrower for it in liquidator_scan(comp, GasModel(), liquidator=7)]
    assert order == [2, 3, 1]


def test_hold_deposit_first_step():
    comp = make_world()
    comp.mint_to(1, DAI, to_wad(500))
    a = agent(Strategy.HoldDeposit, {"token": DAI})
    assert step_agent(a, comp, 0, GasModel()) == [Intent("deposit", DAI, to_wad(500))]


def test_zero_capital_does_nothing():
    comp = make_world()
    for s, params in ((Strategy.HoldDeposit, {"token": DAI}), (Strategy.LeverageLoop, {"token": DAI}),
                      (Strategy.BorrowAndHold, {"collateral_token": ETH, "borrow_token": DAI})):
        assert step_agent(agent(s, params), comp, 0, GasModel()) == []


def test_claim_deferred_when_gas_exceeds_value():
    comp = rewards_world(speed="0.0001")  # tiny emission
    fund_and_supply(comp, 1, DAI, 1000)
    comp.clock.advance(500)  # 0.025 COMP pending, worth 2.5 USD
    a = agent(Strategy.HoldDeposit, {"token": DAI, "claim_every": 10}, address=1)
    a.state = "holding"
    assert step_agent(a, comp, 500, GasModel.from_usd(claim=20)) == []
    a.next_wake = 0
    assert step_agent(a, comp, 500, GasModel.from_usd(claim=2)) == [Intent("claim")]


def test_hold_deposit_retries_rejected_withdrawal():
    comp = make_world()
    fund_and_supply(comp, 1, DAI, 500)
    a = agent(Strategy.HoldDeposit, {"token": DAI, "hold_blocks": 5, "gap_blocks": 5})
    a.state = "out"
    assert step_agent(a, comp, 10, GasModel()) == [Intent("withdraw", DAI, None)]


def test_sample_capital():
    rng = np.random.default_rng(1)
    assert sample_capital(5, rng) == 5.0
    assert sample_capital({"dist": "fixed", "value": 7}, rng) == 7.0
    assert sample_capital({"dist": "pareto", "alpha": 1.16, "scale": 100}, rng) >= 100
    with pytest.raises(AgentError):
        sample_capital({"dist": "nope"}, rng)
