"""Exogenous per-block USD price feeds."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fixedpoint import WAD, Wad, to_wad, wad_mul
from .ledger import SECONDS_PER_DAY, SECONDS_PER_YEAR


class OracleError(Exception):
    pass


class PriceSource(str, enum.Enum):
    File = "File"
    GBM = "GBM"
    Scripted = "Scripted"
    AmmCoupled = "AmmCoupled"


@dataclass(frozen=True)
class PriceSeries:
    token: int
    prices: tuple  # Wad per block, index = block
    source: PriceSource = PriceSource.Scripted

    def __post_init__(self):
        if not self.prices:
            raise OracleError("empty price series")
        if any(p <= 0 for p in self.prices):
            raise OracleError("prices must be positive")

    def __len__(self):
        return len(self.prices)

    @classmethod
    def constant(cls, token: int, price: Wad, horizon: int, source=PriceSource.Scripted) -> "PriceSeries":
        return cls(token, (price,) * horizon, source)


def price_at(series: PriceSeries, block: int) -> Wad:
    if not 0 <= block < len(series.prices):
        raise OracleError(f"block {block} outside price horizon of {len(series.prices)} blocks")
    return series.prices[block]


def _multipliers_to_prices(p0: Wad, mult: np.ndarray) -> tuple:
    # multiplier 1.0 maps to exactly p0
    return tuple(max(1, p0 * int(round(m * 1e12)) // 10**12) for m in mult)


def gbm_multipliers(rng: np.random.Generator, mu: float, sigma: float, horizon: int, dt: float,
                    shocks: Optional[np.ndarray] = None) -> np.ndarray:
    """exp of the log-Euler path; element 0 is 1."""
    if shocks is None:
        shocks = rng.standard_normal(horizon - 1)
    steps = (mu - 0.5 * sigma * sigma) * dt + sigma * math.sqrt(dt) * shocks
    return np.exp(np.concatenate(([0.0], np.cumsum(steps))))


def generate_gbm(seed: int, p0: Wad, mu_annual: float, sigma_annual: float, horizon_blocks: int,
                 seconds_per_block: int = 13, token: int = 0) -> PriceSeries:
    """Geometric Brownian motion sampled once per block; identical seed, identical path."""
    if p0 <= 0:
        raise OracleError("p0 must be positive")
    if sigma_annual < 0 or not math.isfinite(sigma_annual) or not math.isfinite(mu_annual):
        raise OracleError("invalid drift/volatility")
    if horizon_blocks < 1:
        raise OracleError("horizon must be at least one block")
    dt = seconds_per_block / SECONDS_PER_YEAR
    rng = np.random.default_rng(seed)
    mult = gbm_multipliers(rng, mu_annual, sigma_annual, horizon_blocks, dt)
    return PriceSeries(token, _multipliers_to_prices(p0, mult), PriceSource.GBM)


def generate_correlated_gbm(seed: int, p0s: Sequence[Wad], mus: Sequence[float], sigmas: Sequence[float],
                            corr: np.ndarray, horizon_blocks: int, seconds_per_block: int = 13,
                            tokens: Optional[Sequence[int]] = None) -> list[PriceSeries]:
    n = len(p0s)
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (n, n):
        raise OracleError("correlation matrix shape mismatch")
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise OracleError("correlation matrix is not positive definite") from exc
    dt = seconds_per_block / SECONDS_PER_YEAR
    rng = np.random.default_rng(seed)
    z = chol @ rng.standard_normal((n, horizon_blocks - 1))
    tokens = list(range(n)) if tokens is None else list(tokens)
    out = []
    for i in range(n):
        if p0s[i] <= 0 or sigmas[i] < 0:
            raise OracleError("invalid GBM parameters")
        mult = gbm_multipliers(rng, mus[i], sigmas[i], horizon_blocks, dt, shocks=z[i])
        out.append(PriceSeries(tokens[i], _multipliers_to_prices(p0s[i], mult), PriceSource.GBM))
    return out


def apply_shock(series: PriceSeries, block: int, multiplier) -> PriceSeries:
    """Scale every price from ``block`` onward by ``multiplier``."""
    m = to_wad(multiplier)
    if m <= 0:
        raise OracleError("shock multiplier must be positive")
    if not 0 <= block < len(series.prices):
        raise OracleError(f"shock block {block} outside horizon")
    if m == WAD:
        return series
    head = series.prices[:block]
    tail = tuple(max(1, wad_mul(p, m)) for p in series.prices[block:])
    return replace(series, prices=head + tail)


def load_price_file(path, token: int, horizon_blocks: int, seconds_per_block: int = 13) -> PriceSeries:
    """Read ``block,price`` or daily ``date,price`` CSV into a per-block series.

    Daily rows are held constant across every block of their UTC day; the
    first date is day 0. Blocks past the last row repeat the last price.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise OracleError(f"price file {path} is empty")
    cols = set(rows[0])
    if {"block", "price"} <= cols:
        points = sorted((int(r["block"]), to_wad(r["price"].strip())) for r in rows)
        return _step_expand(points, token, horizon_blocks)
    if {"date", "price"} <= cols:
        dated = sorted((date.fromisoformat(r["date"].strip()), to_wad(r["price"].strip())) for r in rows)
        d0 = dated[0][0]
        blocks_per_day = SECONDS_PER_DAY / seconds_per_block
        points = [(math.ceil((d - d0).days * blocks_per_day), p) for d, p in dated]
        return _step_expand(points, token, horizon_blocks)
    raise OracleError(f"price file {path} needs block,price or date,price columns")


def _step_expand(points, token, horizon) -> PriceSeries:
    if points[0][0] != 0:
        raise OracleError("price file must start at block/day 0")
    prices = []
    j = 0
    for b in range(horizon):
        while j + 1 < len(points) and points[j + 1][0] <= b:
            j += 1
        prices.append(points[j][1])
    return PriceSeries(token, tuple(prices), PriceSource.File)
