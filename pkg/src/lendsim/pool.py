"""cToken market state machine.

Functions here mutate a ``PoolState``/``AccountPosition`` in place and
validate every precondition before touching state, so a raised error never
leaves a half-applied update. Borrow-limit checks and event logging live in
the comptroller, which is the only caller in a simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .fixedpoint import WAD, Wad, mul_div, to_wad, wad_div, wad_mul
from .rates import RegimeSchedule, active_params, borrow_rate, supply_rate

CASH_PLUS_BORROWS = "cash_plus_borrows"
DEPOSITS_PLUS_RESERVES = "deposits_plus_reserves"
UTILIZATION_CONVENTIONS = (CASH_PLUS_BORROWS, DEPOSITS_PLUS_RESERVES)

# 1 underlying buys 46.2896 cTokens at genesis
DEFAULT_INITIAL_EXCHANGE_RATE = wad_div(WAD, to_wad("46.2896"))


class PoolError(Exception):
    pass


class InsufficientCash(PoolError):
    pass


class InsufficientBalance(PoolError):
    pass


class Overpayment(PoolError):
    pass


@dataclass
class Accrual:
    """What one ``accrue`` call added."""

    block: int
    blocks: int
    rate_per_block: Wad
    interest: Wad
    reserves_added: Wad
    reserve_factor: Wad


@dataclass
class PoolState:
    token: int
    schedule: RegimeSchedule
    blocks_per_year: int
    total_cash: Wad = 0
    total_borrows: Wad = 0
    total_reserves: Wad = 0
    ctoken_supply: Wad = 0
    borrow_index: Wad = WAD
    last_accrual_block: int = 0
    initial_exchange_rate: Wad = DEFAULT_INITIAL_EXCHANGE_RATE
    utilization_convention: str = CASH_PLUS_BORROWS
    # sum over positions of debt normalised to borrow_index == 1; exact reward weights
    borrow_weight: int = 0

    def __post_init__(self):
        if self.utilization_convention not in UTILIZATION_CONVENTIONS:
            raise ValueError(f"unknown utilization convention {self.utilization_convention!r}")

    @property
    def exchange_rate(self) -> Wad:
        """Underlying per cToken; non-decreasing over the life of the pool."""
        if self.ctoken_supply == 0:
            return self.initial_exchange_rate
        return mul_div(self.total_cash + self.total_borrows - self.total_reserves, WAD, self.ctoken_supply)

    @property
    def total_supplied(self) -> Wad:
        """Underlying owed to cToken holders."""
        return self.total_cash + self.total_borrows - self.total_reserves

    def params(self, block: Optional[int] = None):
        return active_params(self.schedule, self.last_accrual_block if block is None else block)


@dataclass
class AccountPosition:
    address: int
    token: int
    ctoken_balance: Wad = 0
    borrow_principal: Wad = 0
    borrow_index_snapshot: Wad = WAD

    def debt(self, pool: PoolState) -> Wad:
        if self.borrow_principal == 0:
            return 0
        return mul_div(self.borrow_principal, pool.borrow_index, self.borrow_index_snapshot)

    def borrow_weight(self) -> int:
        if self.borrow_principal == 0:
            return 0
        return mul_div(self.borrow_principal, WAD, self.borrow_index_snapshot)

    def underlying(self, pool: PoolState) -> Wad:
        return wad_mul(self.ctoken_balance, pool.exchange_rate)


def utilization(pool: PoolState) -> Wad:
    if pool.utilization_convention == CASH_PLUS_BORROWS:
        den = pool.total_cash + pool.total_borrows
    else:
        den = pool.total_cash + pool.total_borrows - pool.total_reserves
    if den <= 0 or pool.total_borrows == 0:
        return 0
    return min(WAD, mul_div(pool.total_borrows, WAD, den))


def current_borrow_rate(pool: PoolState, block: Optional[int] = None) -> Wad:
    return borrow_rate(pool.params(block), utilization(pool))


def current_supply_rate(pool: PoolState, block: Optional[int] = None) -> Wad:
    return supply_rate(pool.params(block), utilization(pool))


def accrue(pool: PoolState, block: int) -> Accrual:
    """Bring interest up to ``block``; the regime active at ``block`` applies."""
    if block < pool.last_accrual_block:
        raise PoolError(f"clock {block} behind last accrual {pool.last_accrual_block}")
    delta = block - pool.last_accrual_block
    params = active_params(pool.schedule, block)
    if delta == 0:
        return Accrual(block, 0, 0, 0, 0, params.reserve_factor)
    if pool.total_borrows == 0:
        pool.last_accrual_block = block
        return Accrual(block, delta, 0, 0, 0, params.reserve_factor)
    r = borrow_rate(params, utilization(pool)) // pool.blocks_per_year
    factor = r * delta
    interest = wad_mul(pool.total_borrows, factor)
    reserves_added = wad_mul(interest, params.reserve_factor)
    pool.total_borrows += interest
    pool.total_reserves += reserves_added
    pool.borrow_index += wad_mul(pool.borrow_index, factor)
    pool.last_accrual_block = block
    return Accrual(block, delta, r, interest, reserves_added, params.reserve_factor)


def deposit(pool: PoolState, position: AccountPosition, amount: Wad) -> Wad:
    """Supply ``amount`` underlying; returns cTokens minted (rounded down)."""
    if amount <= 0:
        raise PoolError("deposit amount must be positive")
    minted = wad_div(amount, pool.exchange_rate)
    if minted == 0:
        raise PoolError("deposit too small to mint any cTokens")
    pool.total_cash += amount
    pool.ctoken_supply += minted
    position.ctoken_balance += minted
    return minted


def redeem_amount(pool: PoolState, ctokens: Wad) -> Wad:
    return wad_mul(ctokens, pool.exchange_rate)


def withdraw(pool: PoolState, position: AccountPosition, ctokens: Wad) -> Wad:
    """Redeem ``ctokens``; returns underlying paid out (rounded down)."""
    if ctokens < 0:
        raise PoolError("negative redemption")
    if ctokens > position.ctoken_balance:
        raise InsufficientBalance(f"redeem {ctokens} exceeds balance {position.ctoken_balance}")
    rate = pool.exchange_rate
    returned = wad_mul(ctokens, rate)
    if returned > pool.total_cash:
        raise InsufficientCash(f"pool cash {pool.total_cash} < redemption {returned}")
    if ctokens == pool.ctoken_supply:
        # an emptied pool re-opens at the last rate, never below it
        pool.initial_exchange_rate = max(pool.initial_exchange_rate, rate)
    pool.total_cash -= returned
    pool.ctoken_supply -= ctokens
    position.ctoken_balance -= ctokens
    return returned


def _rebase_debt(pool: PoolState, position: AccountPosition, new_debt: Wad) -> None:
    old_w = position.borrow_weight()
    position.borrow_principal = new_debt
    position.borrow_index_snapshot = pool.borrow_index
    pool.borrow_weight += position.borrow_weight() - old_w


def borrow(pool: PoolState, position: AccountPosition, amount: Wad) -> Wad:
    """Draw ``amount`` from pool cash; returns the position's new debt."""
    if amount <= 0:
        raise PoolError("borrow amount must be positive")
    if amount > pool.total_cash:
        raise InsufficientCash(f"pool cash {pool.total_cash} < borrow {amount}")
    new_debt = position.debt(pool) + amount
    pool.total_cash -= amount
    pool.total_borrows += amount
    _rebase_debt(pool, position, new_debt)
    return new_debt


def repay(pool: PoolState, position: AccountPosition, amount: Wad) -> Wad:
    """Pay back ``amount``; returns the remaining debt (0 closes the loan)."""
    if amount <= 0:
        raise PoolError("repay amount must be positive")
    debt = position.debt(pool)
    if amount > debt:
        raise Overpayment(f"repay {amount} exceeds debt {debt}")
    pool.total_cash += amount
    # per-account truncation can leave the aggregate a few units short
    pool.total_borrows = max(0, pool.total_borrows - amount)
    _rebase_debt(pool, position, debt - amount)
    return debt - amount


def snapshot_row(pool: PoolState, block: int) -> dict:
    u = utilization(pool)
    params = active_params(pool.schedule, block)
    return {
        "block": block,
        "token": pool.token,
        "cash": pool.total_cash,
        "borrows": pool.total_borrows,
        "reserves": pool.total_reserves,
        "ctoken_supply": pool.ctoken_supply,
        "exchange_rate": pool.exchange_rate,
        "utilization": u,
        "borrow_rate": borrow_rate(params, u),
        "supply_rate": supply_rate(params, u),
    }
