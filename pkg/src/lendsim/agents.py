"""Agent strategies that generate the event flow.

Agents never mutate protocol state. ``step_agent`` reads the comptroller as
a block-start snapshot and returns intents; the engine validates and applies
them, logging any rejection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .comptroller import Comptroller
from .fixedpoint import WAD, Wad, to_wad, wad_div, wad_mul
from .ledger import AgentCategory, Token


class AgentError(Exception):
    pass


class Strategy(str, enum.Enum):
    HoldDeposit = "HoldDeposit"
    BorrowAndHold = "BorrowAndHold"
    LeverageLoop = "LeverageLoop"
    LiquidatorBot = "LiquidatorBot"
    MicroAirdrop = "MicroAirdrop"
    RateChaser = "RateChaser"


MICRO_DEPOSIT_LIMIT_USD = 3

GAS_ACTIONS = ("deposit", "withdraw", "borrow", "repay", "liquidate", "claim", "swap")


@dataclass(frozen=True)
class GasModel:
    """Flat USD cost per action, whatever the transaction size."""

    deposit: Wad = 0
    withdraw: Wad = 0
    borrow: Wad = 0
    repay: Wad = 0
    liquidate: Wad = 0
    claim: Wad = 0
    swap: Wad = 0

    def __post_init__(self):
        for name in GAS_ACTIONS:
            if getattr(self, name) < 0:
                raise ValueError(f"gas cost for {name} must be non-negative")

    def cost(self, action: str) -> Wad:
        return getattr(self, action, 0)

    @classmethod
    def from_usd(cls, **costs) -> "GasModel":
        return cls(**{k: to_wad(v) for k, v in costs.items()})


@dataclass
class AgentSpec:
    category: AgentCategory
    count: int
    strategy: Strategy
    capital_usd: dict = field(default_factory=lambda: {"dist": "fixed", "value": 1000})
    params: dict = field(default_factory=dict)
    addresses: Optional[list] = None

    def __post_init__(self):
        if self.count < 1:
            raise AgentError("agent count must be at least 1")
        if self.addresses is not None and len(self.addresses) != self.count:
            raise AgentError("addresses must list one id per agent")


@dataclass
class Intent:
    """One requested action. ``amount=None`` means "everything available"."""

    action: str  # deposit | withdraw | borrow | repay | claim | liquidate
    token: Optional[int] = None
    amount: Optional[Wad] = None
    cap_to_limit: bool = False
    limit_fraction: Optional[Wad] = None
    borrower: Optional[int] = None
    seize_token: Optional[int] = None
    expected_profit_usd: Wad = 0


@dataclass
class Agent:
    address: int
    category: AgentCategory
    strategy: Strategy
    params: dict
    rng: np.random.Generator
    capital_usd: Wad = 0
    state: str = "new"
    next_wake: int = 0
    plan: list = field(default_factory=list)
    # bookkeeping for the end-of-run summary
    total_deposited_usd: Wad = 0
    total_borrowed_usd: Wad = 0
    reward_claimed: Wad = 0
    liquidated_count: int = 0
    gas_spent_usd: Wad = 0
    endowment_usd: Wad = 0
    events: int = 0


def sample_capital(spec: dict, rng: np.random.Generator) -> float:
    if not isinstance(spec, dict):
        return float(spec)
    dist = spec.get("dist", "fixed")
    if dist == "fixed":
        return float(spec["value"])
    if dist == "lognormal":
        return float(spec["median"]) * float(np.exp(float(spec.get("sigma", 1.0)) * rng.standard_normal()))
    if dist == "pareto":
        return float(spec["scale"]) * float((1.0 - rng.random()) ** (-1.0 / float(spec["alpha"])))
    if dist == "uniform":
        return float(rng.uniform(float(spec["low"]), float(spec["high"])))
    raise AgentError(f"unknown capital distribution {dist!r}")


def leverage_loop_plan(capital: Wad, token: int, haircut: Wad, fraction: Wad, n_rounds: int,
                       min_amount: Wad = 0) -> list[tuple[Wad, Wad]]:
    """Deposit/borrow amounts for a same-token borrow-redeposit loop.

    Round k deposits ``capital * f**k`` and, except the last, borrows
    ``capital * f**(k+1)``, which is redeposited next round. Rounds whose
    deposit falls below ``min_amount`` are dropped.
    """
    if fraction < 0 or fraction > WAD - haircut:
        raise AgentError("loop fraction exceeds the collateral factor 1 - gamma")
    if n_rounds < 0:
        raise AgentError("n_rounds must be non-negative")
    plan = []
    amount = capital
    for k in range(n_rounds + 1):
        nxt = wad_mul(amount, fraction) if k < n_rounds else 0
        if nxt < min_amount or nxt == 0:
            plan.append((amount, 0))
            break
        plan.append((amount, nxt))
        amount = nxt
    return plan


def micro_airdrop_wave(count: int, deposit_usd, token: Token, start_block: int = 0) -> list[AgentSpec]:
    """A batch of one-shot stablecoin depositors of at most 3 USD each."""
    if not token.is_stablecoin:
        raise AgentError("micro deposits must be in a stablecoin")
    if to_wad(deposit_usd) > to_wad(MICRO_DEPOSIT_LIMIT_USD) or to_wad(deposit_usd) <= 0:
        raise AgentError("micro deposits are positive and at most 3 USD")
    if count == 0:
        return []
    return [AgentSpec(
        category=AgentCategory.MicroAddress, count=count, strategy=Strategy.MicroAirdrop,
        capital_usd={"dist": "fixed", "value": deposit_usd},
        params={"token": token.symbol, "start_block": start_block},
    )]


def liquidator_scan(world: Comptroller, gas_model: GasModel, liquidator: Optional[int] = None,
                    budget: Optional[dict] = None) -> list[Intent]:
    """Profitable close-factor liquidations, most profitable first.

    For each underwater account the largest debt is repaid against the
    largest accepted collateral. The repay is the close-factor maximum,
    trimmed to the liquidator's ``budget`` (token -> amount) and to the
    collateral available for seizure. Intents are kept only when seized
    value minus repaid value minus gas is non-negative.
    """
    gas = gas_model.cost("liquidate")
    intents = []
    for borrower in sorted(world.borrowers()):
        if borrower == liquidator:
            continue
        if world.account_liquidity(borrower) >= 0:
            continue
        acct = world.accounts[borrower]
        debts, colls = [], []
        for token, pos in acct.items():
            pool = world.pools[token]
            p = world.price(token)
            if pos.borrow_principal:
                debts.append((wad_mul(pos.debt(pool), p), token))
            if pos.ctoken_balance and world.collateral[token].accepted:
                colls.append((wad_mul(wad_mul(pos.ctoken_balance, pool.exchange_rate), p), token))
        if not debts or not colls:
            continue
        _, repay_token = max(debts)
        _, seize_token = max(colls)
        repay = world.max_repay(borrower, repay_token)
        if budget is not None:
            repay = min(repay, budget.get(repay_token, 0))
        # trim so the seizure fits the borrower's collateral
        seizable = acct[seize_token].ctoken_balance
        if repay > 0 and world.seize_ctokens(repay_token, repay, seize_token) > seizable:
            p_r, p_s = world.price(repay_token), world.price(seize_token)
            rate = world.pools[seize_token].exchange_rate
            repay = seizable * p_s * rate // (p_r * (WAD + world.liquidation_config.incentive))
            while repay > 0 and world.seize_ctokens(repay_token, repay, seize_token) > seizable:
                repay -= 1
        if repay <= 0:
            continue
        repay_usd = world.usd(repay_token, repay)
        seized = world.seize_ctokens(repay_token, repay, seize_token)
        seized_usd = wad_mul(wad_mul(seized, world.pools[seize_token].exchange_rate), world.price(seize_token))
        profit = seized_usd - repay_usd - gas
        if profit < 0:
            continue
        intents.append(Intent("liquidate", token=repay_token, amount=repay, borrower=borrower,
                              seize_token=seize_token, expected_profit_usd=profit))
    intents.sort(key=lambda it: (-it.expected_profit_usd, it.borrower))
    return intents


def _claim_intent(agent: Agent, world: Comptroller, gas_model: GasModel) -> list[Intent]:
    rt = world.emission.reward_token
    if rt is None:
        return []
    pending = world.pending_rewards(agent.address)
    if pending <= 0:
        return []
    value = wad_mul(pending, world.prices.get(rt, 0))
    threshold = agent.params.get("claim_threshold", WAD)
    if value >= wad_mul(threshold, gas_model.cost("claim")) and value > 0:
        return [Intent("claim")]
    return []


def _wait(agent: Agent, block: int, key: str, default: int) -> None:
    mean = agent.params.get(key, default)
    agent.next_wake = block + 1 + int(agent.rng.exponential(mean)) if mean > 0 else block + 1


def step_agent(agent: Agent, world: Comptroller, block: int, gas_model: GasModel,
               budget: Optional[dict] = None) -> list[Intent]:
    """Intents for ``agent`` at ``block``; an empty list when it has nothing to do."""
    s = agent.strategy
    if s is Strategy.LiquidatorBot:
        return liquidator_scan(world, gas_model, agent.address, budget)
    if block < agent.next_wake or agent.state == "done":
        return []
    p = agent.params
    tok = p.get("token")
    wallet = world.wallets.get((agent.address, tok), 0) if tok is not None else 0

    if s is Strategy.MicroAirdrop:
        agent.state = "done"
        return [Intent("deposit", tok, wallet)] if wallet > 0 else []

    if s is Strategy.HoldDeposit:
        if agent.state == "new":
            if wallet <= 0:
                agent.state = "done"
                return []
            agent.state = "holding"
            if p.get("hold_blocks"):
                _wait(agent, block, "hold_blocks", 0)
            else:
                _wait(agent, block, "claim_every", 2000)
            return [Intent("deposit", tok, wallet)]
        if agent.state == "holding":
            if p.get("hold_blocks"):
                agent.state = "out"
                _wait(agent, block, "gap_blocks", 1000)
                return _claim_intent(agent, world, gas_model) + [Intent("withdraw", tok, None)]
            _wait(agent, block, "claim_every", 2000)
            return _claim_intent(agent, world, gas_model)
        if agent.state == "out":
            pos = world.accounts.get(agent.address, {}).get(tok)
            if pos is not None and pos.ctoken_balance > 0:
                # an earlier withdrawal was rejected (pool short of cash); try again
                _wait(agent, block, "gap_blocks", 1000)
                return [Intent("withdraw", tok, None)]
            if wallet <= 0:
                return []
            agent.state = "holding"
            _wait(agent, block, "hold_blocks", 0)
            return [Intent("deposit", tok, wallet)]
        return []

    if s is Strategy.BorrowAndHold:
        coll, debt_tok = p["collateral_token"], p["borrow_token"]
        if agent.state == "new":
            cw = world.wallets.get((agent.address, coll), 0)
            if cw <= 0:
                agent.state = "done"
                return []
            agent.state = "collateralised"
            agent.next_wake = block + 1
            return [Intent("deposit", coll, cw)]
        if agent.state in ("collateralised", "repaid"):
            agent.state = "borrowed"
            _wait(agent, block, "hold_blocks", 5000)
            return [Intent("borrow", debt_tok, None, limit_fraction=p.get("buffer", to_wad("0.7")))]
        if agent.state == "borrowed":
            agent.state = "repaid"
            _wait(agent, block, "gap_blocks", 2000)
            return _claim_intent(agent, world, gas_model) + [Intent("repay", debt_tok, None)]
        return []

    if s is Strategy.LeverageLoop:
        if agent.state == "new":
            if wallet <= 0:
                agent.state = "done"
                return []
            gamma = world.collateral[tok].haircut
            f = p.get("loop_fraction")
            if f is None:
                f = wad_mul(WAD - gamma, WAD - p.get("safety_buffer", to_wad("0.1")))
            price = world.price(tok)
            per_round_gas = gas_model.cost("deposit") + gas_model.cost("borrow")
            min_amount = wad_div(per_round_gas, price) if per_round_gas else 0
            plan = leverage_loop_plan(wallet, tok, gamma, f, p.get("rounds", 5), min_amount)
            intents = []
            for dep, bor in plan:
                intents.append(Intent("deposit", tok, dep))
                if bor:
                    intents.append(Intent("borrow", tok, bor, cap_to_limit=True))
            agent.state = "looped"
            _wait(agent, block, "claim_every", 2000)
            return intents
        _wait(agent, block, "claim_every", 2000)
        return _claim_intent(agent, world, gas_model)

    if s is Strategy.RateChaser:
        agent.next_wake = block + p.get("check_every", 500)
        if agent.rng.random() > wad_to_float(p.get("reaction", WAD)):
            return []
        rt = world.emission.reward_token
        rprice = world.prices.get(rt, 0) if rt is not None else 0
        net_supply, _ = world.net_rates(tok, rprice)
        inside = world.position(agent.address, tok).ctoken_balance > 0
        threshold = p.get("threshold", to_wad("0.03"))
        if net_supply > threshold and not inside and wallet > 0:
            return [Intent("deposit", tok, wallet)]
        if net_supply < threshold and inside:
            return _claim_intent(agent, world, gas_model) + [Intent("withdraw", tok, None)]
        return []

    raise AgentError(f"unknown strategy {s}")


def wad_to_float(x: Wad) -> float:
    return x / WAD
