"""Daily feature matrices for the net-deposit and loan regressions."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping, Optional

import numpy as np
import pandas as pd

from ..fixedpoint import WAD, format_wad
from ..ledger import SECONDS_PER_DAY, Event, EventKind, Token

VOL_WINDOW = 30
MIN_DAYS = VOL_WINDOW + 1

EQ4_COLUMNS = ["const", "Post", "SupplyRate", "Post_x_SupplyRate", "SupplyReward",
               "LogPoolSize", "Return1d", "Return7d", "Volatility30d"]
EQ5_COLUMNS = ["const", "Post", "BorrowRate", "Post_x_BorrowRate", "BorrowReward",
               "LogPoolSize", "Return1d", "Return7d", "Volatility30d"]


class InsufficientHistory(ValueError):
    pass


def snapshot_frame(rows) -> pd.DataFrame:
    """Snapshot rows (dicts of Wads) as a frame of decimal strings, like snapshots.csv."""
    if isinstance(rows, pd.DataFrame):
        return rows
    out = [{k: (format_wad(v) if isinstance(v, int) and k != "block" else v) for k, v in r.items()}
           for r in rows]
    return pd.DataFrame(out)


def _num(v) -> float:
    """Snapshot cell to float: Wad ints are scaled, decimal strings parsed,
    floats taken as already scaled."""
    if v is None or v == "" or (isinstance(v, float) and np.isnan(v)):
        return 0.0
    if isinstance(v, (int, np.integer)):
        return float(Decimal(int(v)) / WAD)
    return float(v)


@dataclass
class FeatureMatrix:
    """Daily table plus the two regression designs built from it."""

    daily: pd.DataFrame  # one row per day, unlagged
    table: pd.DataFrame  # one row per usable day, regressors and dependents

    def design(self, equation: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
        if equation == "eq4":
            cols, dep = EQ4_COLUMNS, "NetDeposit"
        elif equation == "eq5":
            cols, dep = EQ5_COLUMNS, "LogLoan"
        else:
            raise ValueError(f"unknown equation {equation!r}")
        return self.table[cols].to_numpy(float), self.table[dep].to_numpy(float), list(cols)


def daily_table(snapshots: pd.DataFrame, ledger: Iterable[Event], token: str,
                tokens: Mapping[int, Token], seconds_per_block: int = 13,
                market_token: Optional[str] = "ETH") -> pd.DataFrame:
    """End-of-day pool state and same-day flows, in percent and USD million."""
    snapshots = snapshot_frame(snapshots)
    snap = snapshots[snapshots["token"] == token]
    if snap.empty:
        raise InsufficientHistory(f"no snapshots for {token}")
    day = snap["block"].astype(int) * seconds_per_block // SECONDS_PER_DAY
    last = snap.assign(day=day.to_numpy()).groupby("day").tail(1).set_index("day")
    d = pd.DataFrame(index=last.index)
    d["SupplyRate"] = [_num(v) * 100 for v in last["supply_rate"]]
    d["BorrowRate"] = [_num(v) * 100 for v in last["borrow_rate"]]
    d["SupplyReward"] = [_num(v) * 100 for v in last["supply_reward_rate"]]
    d["BorrowReward"] = [_num(v) * 100 for v in last["borrow_reward_rate"]]
    supplied = [_num(c) + _num(b) - _num(r) for c, b, r in zip(last["cash"], last["borrows"], last["reserves"])]
    d["PoolSizeUSD"] = np.array(supplied) * np.array([_num(p) for p in last["price"]]) / 1e6

    mkt = market_token if market_token is not None else token
    m = snapshots[snapshots["token"] == mkt]
    mday = m["block"].astype(int) * seconds_per_block // SECONDS_PER_DAY
    mlast = m.assign(day=mday.to_numpy()).groupby("day").tail(1).set_index("day")
    d["MarketPrice"] = pd.Series([_num(p) for p in mlast["price"]], index=mlast.index).reindex(d.index)

    tid = {t.symbol: i for i, t in tokens.items()}[token]
    dep = pd.Series(0.0, index=d.index)
    loan = pd.Series(0.0, index=d.index)
    for e in ledger:
        if e.token != tid:
            continue
        k = e.block * seconds_per_block // SECONDS_PER_DAY
        if k not in dep.index:
            continue
        usd = float(Decimal(e.usd_value) / WAD) / 1e6
        if e.kind is EventKind.Deposit:
            dep[k] += usd
        elif e.kind is EventKind.Withdraw:
            dep[k] -= usd
        elif e.kind is EventKind.Borrow:
            loan[k] += usd
    d["NetDepositUSD"] = dep
    d["LoanUSD"] = loan
    return d


def build_features(snapshots: pd.DataFrame, ledger: Iterable[Event], token: str,
                   tokens: Mapping[int, Token], post_block: int, seconds_per_block: int = 13,
                   market_token: Optional[str] = "ETH") -> FeatureMatrix:
    """Lagged rates, Post dummy, rewards, log pool size and market controls per day.

    Rates and rewards enter with a one-day lag. Returns are simple daily
    returns in percent; volatility is the sample standard deviation of the
    trailing 30 daily returns, in percentage points.
    """
    d = daily_table(snapshots, ledger, token, tokens, seconds_per_block, market_token)
    n = len(d)
    if n < MIN_DAYS:
        raise InsufficientHistory(f"{n} days of snapshots, need at least {MIN_DAYS}")
    if list(d.index) != list(range(d.index[0], d.index[0] + n)):
        raise InsufficientHistory("snapshot days are not contiguous")
    post_day = post_block * seconds_per_block // SECONDS_PER_DAY
    post = (d.index >= post_day).astype(float)
    d["Post"] = post
    for col in ("SupplyReward", "BorrowReward"):
        d.loc[post == 0, col] = 0.0
    p = d["MarketPrice"].to_numpy(float)
    ret = np.full(n, np.nan)
    ret[1:] = (p[1:] / p[:-1] - 1) * 100

    rows = []
    for i in range(VOL_WINDOW, n):
        prev = d.iloc[i - 1]
        size = d["PoolSizeUSD"].iloc[i]
        if size <= 0:
            raise InsufficientHistory(f"pool size is zero on day {d.index[i]}")
        rows.append({
            "day": int(d.index[i]),
            "const": 1.0,
            "Post": prev["Post"],
            "SupplyRate": prev["SupplyRate"],
            "Post_x_SupplyRate": prev["Post"] * prev["SupplyRate"],
            "SupplyReward": prev["SupplyReward"],
            "BorrowRate": prev["BorrowRate"],
            "Post_x_BorrowRate": prev["Post"] * prev["BorrowRate"],
            "BorrowReward": prev["BorrowReward"],
            "LogPoolSize": float(np.log(size)),
            "Return1d": ret[i],
            "Return7d": (p[i] / p[i - 7] - 1) * 100,
            "Volatility30d": float(np.std(ret[i - VOL_WINDOW + 1:i + 1], ddof=1)),
            "NetDeposit": d["NetDepositUSD"].iloc[i],
            "LogLoan": float(np.log1p(d["LoanUSD"].iloc[i])),
        })
    table = pd.DataFrame(rows).set_index("day")
    return FeatureMatrix(daily=d, table=table)
