"""Constant-product (x * y = k) market maker."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fixedpoint import WAD, Wad, mul_div, mul_div_up, to_wad, wad_div, wad_mul

DEFAULT_FEE = to_wad("0.003")


class AmmError(Exception):
    pass


@dataclass
class AmmPool:
    token_x: int
    token_y: int
    reserve_x: Wad = 0
    reserve_y: Wad = 0
    fee: Wad = DEFAULT_FEE
    lp_supply: Wad = 0

    def __post_init__(self):
        if self.token_x == self.token_y:
            raise AmmError("pair needs two distinct tokens")
        if not 0 <= self.fee < WAD:
            raise AmmError("fee must lie in [0, 1)")

    @property
    def k(self) -> int:
        return self.reserve_x * self.reserve_y

    def reserves(self, token_in: int) -> tuple[Wad, Wad]:
        if token_in == self.token_x:
            return self.reserve_x, self.reserve_y
        if token_in == self.token_y:
            return self.reserve_y, self.reserve_x
        raise AmmError(f"token {token_in} not in pair")

    def other(self, token: int) -> int:
        self.reserves(token)
        return self.token_y if token == self.token_x else self.token_x


def quote_exact_in(pool: AmmPool, token_in: int, amount_in: Wad) -> Wad:
    r_in, r_out = pool.reserves(token_in)
    if amount_in <= 0:
        raise AmmError("amount_in must be positive")
    if r_in <= 0 or r_out <= 0:
        raise AmmError("pool is empty")
    effective = wad_mul(amount_in, WAD - pool.fee)
    # round the new output reserve up so k never shrinks
    new_out = mul_div_up(r_in, r_out, r_in + effective)
    return r_out - new_out


def swap_exact_in(pool: AmmPool, token_in: int, amount_in: Wad) -> Wad:
    out = quote_exact_in(pool, token_in, amount_in)
    if out <= 0:
        raise AmmError("output rounds to zero")
    if token_in == pool.token_x:
        pool.reserve_x += amount_in
        pool.reserve_y -= out
    else:
        pool.reserve_y += amount_in
        pool.reserve_x -= out
    return out


def spot_price(pool: AmmPool) -> Wad:
    """Units of token_y per token_x."""
    if pool.reserve_x <= 0 or pool.reserve_y <= 0:
        raise AmmError("pool is empty")
    return wad_div(pool.reserve_y, pool.reserve_x)


def divergent_loss(price_ratio: float) -> float:
    """LP value relative to holding after the price moves by ``price_ratio``."""
    if not price_ratio > 0:
        raise ValueError("price ratio must be positive")
    return 2.0 * math.sqrt(price_ratio) / (1.0 + price_ratio) - 1.0


def add_liquidity(pool: AmmPool, amount_x: Wad, amount_y: Wad) -> Wad:
    if amount_x <= 0 or amount_y <= 0:
        raise AmmError("liquidity amounts must be positive")
    if pool.lp_supply == 0:
        minted = math.isqrt(amount_x * amount_y)
    else:
        # proportional to within one raw unit of rounding on either side
        if abs(amount_x * pool.reserve_y - amount_y * pool.reserve_x) > max(pool.reserve_x, pool.reserve_y):
            raise AmmError("deposit is not proportional to reserves")
        minted = min(mul_div(amount_x, pool.lp_supply, pool.reserve_x),
                     mul_div(amount_y, pool.lp_supply, pool.reserve_y))
    if minted <= 0:
        raise AmmError("deposit too small")
    pool.reserve_x += amount_x
    pool.reserve_y += amount_y
    pool.lp_supply += minted
    return minted


def remove_liquidity(pool: AmmPool, lp_tokens: Wad) -> tuple[Wad, Wad]:
    if lp_tokens <= 0:
        raise AmmError("lp amount must be positive")
    if lp_tokens > pool.lp_supply:
        raise AmmError("burn exceeds lp supply")
    out_x = mul_div(lp_tokens, pool.reserve_x, pool.lp_supply)
    out_y = mul_div(lp_tokens, pool.reserve_y, pool.lp_supply)
    pool.reserve_x -= out_x
    pool.reserve_y -= out_y
    pool.lp_supply -= lp_tokens
    return out_x, out_y


def amount_in_for_price(pool: AmmPool, target_price: Wad) -> tuple[int, Wad]:
    """Trade that moves the spot price (y per x) to roughly ``target_price``.

    Returns (token_in, amount_in), amount 0 when already there. Solves the
    fee-free constant-product condition and grosses the input up by the fee.
    """
    if target_price <= 0:
        raise AmmError("target price must be positive")
    k = pool.k
    # x' = sqrt(k / p'), y' = sqrt(k * p')
    new_x = math.isqrt(k * WAD // target_price)
    new_y = math.isqrt(k * target_price // WAD)
    if new_x > pool.reserve_x:
        token_in, need = pool.token_x, new_x - pool.reserve_x
    elif new_y > pool.reserve_y:
        token_in, need = pool.token_y, new_y - pool.reserve_y
    else:
        return pool.token_x, 0
    return token_in, mul_div_up(need, WAD, WAD - pool.fee)
