"""Cross-pool risk engine and action gateway.

The comptroller owns the pools, per-account positions, token wallets and the
reward ledger. Every user action goes through it: it accrues interest,
settles rewards, enforces the borrow limit, moves wallet balances and
appends the ledger event.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import pool as pl
from .fixedpoint import WAD, Wad, to_wad, wad_div, wad_mul
from .ledger import BlockClock, EventKind, Ledger, Token
from .pool import AccountPosition, PoolState

# reward indices carry 36 decimals so per-block increments on large pools stay non-zero
DOUBLE = 10**36


class ComptrollerError(Exception):
    pass


class MissingPrice(ComptrollerError):
    pass


class BorrowLimitExceeded(ComptrollerError):
    pass


class NotLiquidatable(ComptrollerError):
    pass


class CloseFactorExceeded(ComptrollerError):
    pass


class InsufficientCollateral(ComptrollerError):
    pass


class InsufficientFunds(ComptrollerError):
    pass


class NothingToClaim(ComptrollerError):
    pass


@dataclass(frozen=True)
class CollateralConfig:
    haircut: Wad  # gamma; collateral factor is 1 - gamma
    accepted: bool = True

    def __post_init__(self):
        if not 0 <= self.haircut <= WAD:
            raise ValueError("haircut must lie in [0, 1]")

    @property
    def collateral_factor(self) -> Wad:
        return WAD - self.haircut if self.accepted else 0


@dataclass(frozen=True)
class LiquidationConfig:
    close_factor: Wad = to_wad("0.5")
    incentive: Wad = to_wad("0.08")

    def __post_init__(self):
        if not 0 < self.close_factor <= WAD:
            raise ValueError("close_factor must lie in (0, 1]")
        if self.incentive < 0:
            raise ValueError("incentive must be non-negative")

    def improves_health(self, cfg: CollateralConfig) -> bool:
        return wad_mul(cfg.collateral_factor, WAD + self.incentive) < WAD


@dataclass
class EmissionSchedule:
    reward_token: Optional[int] = None
    speeds: dict = field(default_factory=dict)  # token -> reward Wad per block
    start_block: int = 0

    def speed(self, token: int) -> Wad:
        return self.speeds.get(token, 0)


@dataclass
class RewardLedger:
    accrued: dict = field(default_factory=lambda: defaultdict(int))
    claimed: dict = field(default_factory=lambda: defaultdict(int))
    treasury: Wad = 0
    emitted: Wad = 0
    withheld: Wad = 0
    distributed: Wad = 0  # handed to a side with holders

    @property
    def held(self) -> Wad:
        """Reward tokens sitting in the comptroller (distributed, not yet claimed)."""
        return self.distributed - sum(self.claimed.values())

    @property
    def dust(self) -> Wad:
        return self.distributed - sum(self.accrued.values()) - sum(self.claimed.values())


@dataclass
class _RewardMarket:
    supply_index: int = 0
    borrow_index: int = 0
    last_block: int = 0
    user_supply: dict = field(default_factory=dict)
    user_borrow: dict = field(default_factory=dict)


@dataclass
class LiquidationRecord:
    block: int
    liquidator: int
    borrower: int
    repay_token: int
    seize_token: int
    repay_amount: Wad
    repay_usd: Wad
    debt_before: Wad
    seized_ctokens: Wad
    seized_underlying: Wad
    liquidity_before: Wad
    liquidity_after: Wad
    wave: int = 1


def distribute_rewards(pot: Wad, weights: Mapping[int, int]) -> tuple[dict, Wad]:
    """Split ``pot`` pro-rata by ``weights``; returns (shares, undistributed).

    An empty or zero-weight side gets nothing and the whole pot is returned
    as undistributed. Shares are rounded down.
    """
    total = sum(weights.values())
    if total == 0:
        return {}, pot
    shares = {a: pot * w // total for a, w in weights.items() if w}
    return shares, pot - sum(shares.values())


def accrue_rewards(speed: Wad, blocks: int, supply_weights: Mapping[int, int],
                   borrow_weights: Mapping[int, int]) -> tuple[dict, Wad]:
    """Eager per-address accrual over ``blocks``: half the emission to each side.

    Returns (reward per address, withheld) where withheld counts the pot of a
    side with no participants plus rounding dust.
    """
    if blocks < 0:
        raise ValueError("blocks must be non-negative")
    pot = speed * blocks
    s_pot = pot // 2
    out: dict = defaultdict(int)
    s_shares, s_left = distribute_rewards(s_pot, supply_weights)
    b_shares, b_left = distribute_rewards(pot - s_pot, borrow_weights)
    for shares in (s_shares, b_shares):
        for a, v in shares.items():
            out[a] += v
    return dict(out), s_left + b_left


class Comptroller:
    def __init__(
        self,
        tokens: Mapping[int, Token],
        pools: Mapping[int, PoolState],
        collateral: Mapping[int, CollateralConfig],
        liquidation: LiquidationConfig = LiquidationConfig(),
        emission: Optional[EmissionSchedule] = None,
        clock: Optional[BlockClock] = None,
        ledger: Optional[Ledger] = None,
        reward_treasury: Wad = 0,
    ):
        self.tokens = dict(tokens)
        self.pools = dict(pools)
        self.collateral = dict(collateral)
        self.liquidation_config = liquidation
        self.emission = emission or EmissionSchedule()
        self.clock = clock or BlockClock()
        self.ledger = ledger if ledger is not None else Ledger()
        self.prices: dict[int, Wad] = {}
        self.accounts: dict[int, dict[int, AccountPosition]] = defaultdict(dict)
        self.wallets: dict[tuple[int, int], Wad] = defaultdict(int)
        self.injected: dict[int, Wad] = defaultdict(int)
        self.rewards = RewardLedger(treasury=reward_treasury)
        self._reward_markets = {t: _RewardMarket(last_block=self.clock.block_number) for t in self.pools}
        if self.emission.reward_token is not None:
            self.injected[self.emission.reward_token] += reward_treasury
        for t in self.pools:
            self.collateral.setdefault(t, CollateralConfig(WAD, accepted=False))

    # -- plumbing ---------------------------------------------------------
    @property
    def block(self) -> int:
        return self.clock.block_number

    def position(self, address: int, token: int) -> AccountPosition:
        acct = self.accounts[address]
        pos = acct.get(token)
        if pos is None:
            pos = acct[token] = AccountPosition(address, token)
        return pos

    def price(self, token: int, prices: Optional[Mapping[int, Wad]] = None) -> Wad:
        p = (self.prices if prices is None else prices).get(token)
        if p is None:
            raise MissingPrice(f"no price for token {token} at block {self.block}")
        return p

    def usd(self, token: int, amount: Wad) -> Wad:
        return wad_mul(amount, self.price(token))

    def mint_to(self, address: int, token: int, amount: Wad) -> None:
        """Inject external supply into a wallet (endowments)."""
        if amount < 0:
            raise ValueError("negative injection")
        self.wallets[(address, token)] += amount
        self.injected[token] += amount

    def transfer(self, src: int, dst: int, token: int, amount: Wad) -> None:
        if self.wallets[(src, token)] < amount:
            raise InsufficientFunds(f"address {src} holds {self.wallets[(src, token)]} < {amount}")
        self.wallets[(src, token)] -= amount
        self.wallets[(dst, token)] += amount

    def _take(self, address: int, token: int, amount: Wad) -> None:
        bal = self.wallets[(address, token)]
        if bal < amount:
            raise InsufficientFunds(f"address {address} holds {bal} of token {token}, needs {amount}")
        self.wallets[(address, token)] = bal - amount

    def _record(self, address, kind, token, amount, counterparty=None, debt_after=None):
        return self.ledger.record(
            self.block, address, kind, token, amount, self.usd(token, amount), counterparty, debt_after
        )

    # -- risk ---------------------------------------------------------------
    def account_values(self, address: int, prices: Optional[Mapping[int, Wad]] = None) -> tuple[Wad, Wad, Wad]:
        """(haircut collateral USD, gross collateral USD, debt USD)."""
        limit = gross = debt = 0
        for token, pos in self.accounts.get(address, {}).items():
            pool = self.pools[token]
            if pos.ctoken_balance == 0 and pos.borrow_principal == 0:
                continue
            p = self.price(token, prices)
            if pos.ctoken_balance:
                value = wad_mul(wad_mul(pos.ctoken_balance, pool.exchange_rate), p)
                gross += value
                limit += wad_mul(value, self.collateral[token].collateral_factor)
            if pos.borrow_principal:
                debt += wad_mul(pos.debt(pool), p)
        return limit, gross, debt

    def account_liquidity(self, address: int, prices: Optional[Mapping[int, Wad]] = None) -> Wad:
        limit, _, debt = self.account_values(address, prices)
        return limit - debt

    def check_borrow_allowed(self, address: int, extra_debt_usd: Wad,
                             prices: Optional[Mapping[int, Wad]] = None) -> bool:
        return self.account_liquidity(address, prices) - extra_debt_usd >= 0

    def is_liquidatable(self, address: int) -> bool:
        return self.account_liquidity(address) < 0

    def borrowers(self):
        for addr, acct in self.accounts.items():
            if any(p.borrow_principal for p in acct.values()):
                yield addr

    # -- interest & rewards ---------------------------------------------------
    def accrue_interest(self, token: int) -> pl.Accrual:
        return pl.accrue(self.pools[token], self.block)

    def accrue_all(self) -> list[pl.Accrual]:
        return [self.accrue_interest(t) for t in sorted(self.pools)]

    def update_reward_index(self, token: int) -> None:
        m = self._reward_markets[token]
        block = self.block
        start = max(m.last_block, self.emission.start_block)
        speed = self.emission.speed(token)
        m.last_block = max(m.last_block, block)
        if block <= start or speed == 0 or self.emission.reward_token is None:
            return
        rw = self.rewards
        pot = min(speed * (block - start), rw.treasury)
        if pot == 0:
            return
        rw.treasury -= pot
        rw.emitted += pot
        pool = self.pools[token]
        s_pot = pot // 2
        for side_pot, total, attr in (
            (s_pot, pool.ctoken_supply, "supply_index"),
            (pot - s_pot, pool.borrow_weight, "borrow_index"),
        ):
            if total == 0:
                rw.withheld += side_pot
                rw.treasury += side_pot
            else:
                setattr(m, attr, getattr(m, attr) + side_pot * DOUBLE // total)
                rw.distributed += side_pot

    def accrue_rewards_all(self) -> None:
        for t in sorted(self.pools):
            self.update_reward_index(t)

    def _settle_rewards(self, address: int, token: int, record: bool = True) -> Wad:
        m = self._reward_markets[token]
        pos = self.accounts[address].get(token)
        gained = 0
        si = m.user_supply.get(address, m.supply_index)
        bi = m.user_borrow.get(address, m.borrow_index)
        if pos is not None:
            gained += pos.ctoken_balance * (m.supply_index - si) // DOUBLE
            gained += pos.borrow_weight() * (m.borrow_index - bi) // DOUBLE
        m.user_supply[address] = m.supply_index
        m.user_borrow[address] = m.borrow_index
        if gained:
            self.rewards.accrued[address] += gained
            rt = self.emission.reward_token
            if record and rt is not None:
                usd = wad_mul(gained, self.prices.get(rt, 0))
                self.ledger.record(self.block, address, EventKind.RewardAccrue, rt, gained, usd)
        return gained

    def _touch(self, address: int, token: int) -> None:
        self.accrue_interest(token)
        self.update_reward_index(token)
        self._settle_rewards(address, token)

    def sweep_rewards(self) -> None:
        """Materialise every address's pending rewards without logging events."""
        self.accrue_rewards_all()
        for addr in sorted(self.accounts):
            for token in sorted(self.accounts[addr]):
                self._settle_rewards(addr, token, record=False)

    def pending_rewards(self, address: int) -> Wad:
        """Accrued plus not-yet-settled rewards, with indices brought up to date."""
        total = self.rewards.accrued.get(address, 0)
        for token, pos in self.accounts.get(address, {}).items():
            self.update_reward_index(token)
            m = self._reward_markets[token]
            si = m.user_supply.get(address, m.supply_index)
            bi = m.user_borrow.get(address, m.borrow_index)
            total += pos.ctoken_balance * (m.supply_index - si) // DOUBLE
            total += pos.borrow_weight() * (m.borrow_index - bi) // DOUBLE
        return total

    def claim_rewards(self, address: int) -> Wad:
        for token in sorted(self.accounts.get(address, {})):
            self.update_reward_index(token)
            self._settle_rewards(address, token, record=False)
        amount = self.rewards.accrued.get(address, 0)
        if amount <= 0:
            raise NothingToClaim(f"address {address} has no accrued rewards")
        rt = self.emission.reward_token
        self.rewards.accrued[address] = 0
        self.rewards.claimed[address] += amount
        self.wallets[(address, rt)] += amount
        self.ledger.record(self.block, address, EventKind.ClaimReward, rt, amount,
                           wad_mul(amount, self.prices.get(rt, 0)))
        return amount

    def reward_rates(self, token: int, reward_price: Wad) -> tuple[Optional[Wad], Optional[Wad]]:
        """Annual reward yield for (suppliers, borrowers); None when a side is empty."""
        pool = self.pools[token]
        speed = self.emission.speed(token)
        if self.emission.reward_token is None or self.block < self.emission.start_block:
            speed = 0
        yearly_usd = wad_mul(speed * pool.blocks_per_year // 2, reward_price)
        p = self.price(token)
        supplied_usd = wad_mul(pool.total_supplied, p)
        borrowed_usd = wad_mul(pool.total_borrows, p)
        s = wad_div(yearly_usd, supplied_usd) if supplied_usd > 0 else None
        b = wad_div(yearly_usd, borrowed_usd) if borrowed_usd > 0 else None
        return s, b

    def net_rates(self, token: int, reward_price: Wad) -> tuple[Wad, Wad]:
        """Supply rate plus reward yield, borrow rate minus reward yield."""
        pool = self.pools[token]
        s_rew, b_rew = self.reward_rates(token, reward_price)
        return (
            pl.current_supply_rate(pool, self.block) + (s_rew or 0),
            pl.current_borrow_rate(pool, self.block) - (b_rew or 0),
        )

    # -- actions ------------------------------------------------------------
    def supply(self, address: int, token: int, amount: Wad) -> Wad:
        if amount <= 0:
            raise pl.PoolError("deposit amount must be positive")
        if self.wallets[(address, token)] < amount:
            raise InsufficientFunds(f"address {address} cannot fund deposit of {amount}")
        self._touch(address, token)
        pool, pos = self.pools[token], self.position(address, token)
        minted = pl.deposit(pool, pos, amount)
        self.wallets[(address, token)] -= amount
        self._record(address, EventKind.Deposit, token, amount)
        return minted

    def redeem(self, address: int, token: int, ctokens: Wad) -> Wad:
        self._touch(address, token)
        pool, pos = self.pools[token], self.position(address, token)
        if ctokens == 0:
            return 0
        if ctokens > pos.ctoken_balance:
            raise pl.InsufficientBalance(f"redeem {ctokens} exceeds balance {pos.ctoken_balance}")
        value = pl.redeem_amount(pool, ctokens)
        if value > pool.total_cash:
            raise pl.InsufficientCash(f"pool cash {pool.total_cash} < redemption {value}")
        cf = self.collateral[token].collateral_factor
        if cf and any(p.borrow_principal for p in self.accounts[address].values()):
            lost = wad_mul(wad_mul(value, self.price(token)), cf)
            if not self.check_borrow_allowed(address, lost):
                raise BorrowLimitExceeded(f"withdrawal would leave address {address} undercollateralised")
        returned = pl.withdraw(pool, pos, ctokens)
        self.wallets[(address, token)] += returned
        self._record(address, EventKind.Withdraw, token, returned)
        return returned

    def redeem_all(self, address: int, token: int) -> Wad:
        return self.redeem(address, token, self.position(address, token).ctoken_balance)

    def borrow(self, address: int, token: int, amount: Wad) -> Wad:
        if amount <= 0:
            raise pl.PoolError("borrow amount must be positive")
        self._touch(address, token)
        pool, pos = self.pools[token], self.position(address, token)
        if amount > pool.total_cash:
            raise pl.InsufficientCash(f"pool cash {pool.total_cash} < borrow {amount}")
        if not self.check_borrow_allowed(address, self.usd(token, amount)):
            raise BorrowLimitExceeded(f"borrow of {amount} exceeds limit of address {address}")
        debt = pl.borrow(pool, pos, amount)
        self.wallets[(address, token)] += amount
        self._record(address, EventKind.Borrow, token, amount, debt_after=debt)
        return debt

    def repay(self, address: int, token: int, amount: Wad) -> Wad:
        if amount <= 0:
            raise pl.PoolError("repay amount must be positive")
        self._touch(address, token)
        pool, pos = self.pools[token], self.position(address, token)
        if amount > pos.debt(pool):
            raise pl.Overpayment(f"repay {amount} exceeds debt {pos.debt(pool)}")
        self._take(address, token, amount)
        left = pl.repay(pool, pos, amount)
        self._record(address, EventKind.Repay, token, amount, debt_after=left)
        return left

    def max_repay(self, borrower: int, token: int) -> Wad:
        pool = self.pools[token]
        return wad_mul(self.liquidation_config.close_factor, self.position(borrower, token).debt(pool))

    def seize_ctokens(self, repay_token: int, repay_amount: Wad, seize_token: int) -> Wad:
        p_r, p_s = self.price(repay_token), self.price(seize_token)
        rate = self.pools[seize_token].exchange_rate
        return repay_amount * p_r * (WAD + self.liquidation_config.incentive) // (p_s * rate)

    def liquidate(self, liquidator: int, borrower: int, repay_token: int, repay_amount: Wad,
                  seize_token: int) -> LiquidationRecord:
        if repay_amount <= 0:
            raise pl.PoolError("repay amount must be positive")
        if liquidator == borrower:
            raise ComptrollerError("self-liquidation is not allowed")
        for t in sorted({repay_token, seize_token}):
            self.accrue_interest(t)
        before = self.account_liquidity(borrower)
        if before >= 0:
            raise NotLiquidatable(f"address {borrower} has liquidity {before}")
        rpool = self.pools[repay_token]
        debt_before = self.position(borrower, repay_token).debt(rpool)
        if repay_amount > self.max_repay(borrower, repay_token):
            raise CloseFactorExceeded(f"repay {repay_amount} above close-factor bound")
        if self.wallets[(liquidator, repay_token)] < repay_amount:
            raise InsufficientFunds(f"liquidator {liquidator} cannot fund repay")
        seized = self.seize_ctokens(repay_token, repay_amount, seize_token)
        if seized > self.position(borrower, seize_token).ctoken_balance:
            raise InsufficientCollateral(f"address {borrower} lacks {seized} cTokens to seize")
        for addr in (borrower, liquidator):
            for t in sorted({repay_token, seize_token}):
                self.update_reward_index(t)
                self._settle_rewards(addr, t)
        self._take(liquidator, repay_token, repay_amount)
        left = pl.repay(rpool, self.position(borrower, repay_token), repay_amount)
        self.position(borrower, seize_token).ctoken_balance -= seized
        self.position(liquidator, seize_token).ctoken_balance += seized
        seized_underlying = wad_mul(seized, self.pools[seize_token].exchange_rate)
        self._record(liquidator, EventKind.LiquidateRepay, repay_token, repay_amount,
                     counterparty=borrower, debt_after=left)
        self._record(liquidator, EventKind.LiquidateSeize, seize_token, seized_underlying,
                     counterparty=borrower)
        return LiquidationRecord(
            block=self.block, liquidator=liquidator, borrower=borrower,
            repay_token=repay_token, seize_token=seize_token, repay_amount=repay_amount,
            repay_usd=self.usd(repay_token, repay_amount), debt_before=debt_before,
            seized_ctokens=seized, seized_underlying=seized_underlying,
            liquidity_before=before, liquidity_after=self.account_liquidity(borrower),
        )

    # -- reporting ------------------------------------------------------------
    def risk_row(self, address: int) -> dict:
        limit, gross, debt = self.account_values(address)
        return {
            "block": self.block,
            "address": address,
            "liquidity_usd": limit - debt,
            "total_collateral_usd": gross,
            "total_debt_usd": debt,
        }
