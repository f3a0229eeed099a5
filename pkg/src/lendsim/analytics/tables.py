"""Summary tables and the redeposit logit design."""

from __future__ import annotations

from collections import defaultdict
from decimal import Decimal
from typing import Iterable, Mapping, Optional

import numpy as np
import pandas as pd

from ..fixedpoint import WAD
from ..ledger import SECONDS_PER_DAY, AgentCategory, Event, EventKind, Token
from .loans import LoanDay, detect_redeposits, reconstruct_loans

STAT_COLUMNS = ["n_days", "mean", "sd", "min", "p5", "p50", "p95", "max"]
CATEGORY_ORDER = [c.value for c in AgentCategory]


def _usd(w: int) -> float:
    return float(Decimal(w) / WAD)


def _cat(categories, addr) -> str:
    c = categories.get(addr, "Unknown")
    return c.value if isinstance(c, AgentCategory) else str(c)


def net_deposit_stats(ledger: list, tokens: Mapping[int, Token], seconds_per_block: int = 13,
                      n_days: Optional[int] = None) -> pd.DataFrame:
    """Daily net deposits (deposits minus withdrawals) per token, USD million.

    Days without activity count as zero. ``n_days`` defaults to the span
    up to the last ledger event.
    """
    if n_days is None:
        n_days = (ledger[-1].block * seconds_per_block // SECONDS_PER_DAY + 1) if ledger else 0
    net = {t: np.zeros(n_days) for t in tokens}
    for e in ledger:
        d = e.block * seconds_per_block // SECONDS_PER_DAY
        if d >= n_days:
            continue
        if e.kind is EventKind.Deposit:
            net[e.token][d] += _usd(e.usd_value) / 1e6
        elif e.kind is EventKind.Withdraw:
            net[e.token][d] -= _usd(e.usd_value) / 1e6
    rows = []
    for t in sorted(tokens):
        x = net[t]
        if len(x) == 0:
            rows.append([tokens[t].symbol, 0] + [0.0] * 7)
            continue
        q = np.percentile(x, [5, 50, 95])
        rows.append([tokens[t].symbol, len(x), x.mean(), x.std(ddof=1) if len(x) > 1 else 0.0,
                     x.min(), q[0], q[1], q[2], x.max()])
    return pd.DataFrame(rows, columns=["token"] + STAT_COLUMNS).set_index("token")


def loan_stats(ledger: list, categories: Mapping, seconds_per_block: int = 13) -> pd.DataFrame:
    """Closed loans per borrower category: count, drawn USD, duration in days."""
    acc = {c: [] for c in CATEGORY_ORDER}
    for loan in reconstruct_loans(ledger, seconds_per_block):
        if loan.closed:
            acc.setdefault(_cat(categories, loan.address), []).append(loan)
    rows = []
    for c, loans in acc.items():
        dur = np.array([l.duration_days for l in loans]) if loans else np.zeros(0)
        rows.append([c, len(loans), _usd(sum(l.drawn_usd for l in loans)),
                     float(dur.mean()) if len(dur) else 0.0, float(np.median(dur)) if len(dur) else 0.0])
    return pd.DataFrame(rows, columns=["category", "n_closed_loans", "drawn_usd", "mean_duration_days",
                                       "median_duration_days"]).set_index("category")


def redeposit_stats(ledger: list, categories: Mapping, seconds_per_block: int = 13) -> pd.DataFrame:
    """Share of loan days redeposited, by borrower category."""
    acc = {c: [] for c in CATEGORY_ORDER}
    for ld in detect_redeposits(ledger, seconds_per_block=seconds_per_block):
        acc.setdefault(_cat(categories, ld.address), []).append(ld)
    rows = []
    for c, days in acc.items():
        n = len(days)
        rows.append([c, n, sum(d.redeposited_same_day for d in days) / n if n else 0.0,
                     sum(d.redeposited_within_1d for d in days) / n if n else 0.0])
    return pd.DataFrame(rows, columns=["category", "n_loan_days", "share_same_day",
                                       "share_within_1d"]).set_index("category")


def liquidation_stats(ledger: list, tokens: Mapping[int, Token], seconds_per_block: int = 13) -> pd.DataFrame:
    """Per loan token: loans touched by a liquidation, by count and by drawn USD."""
    rows = []
    loans = reconstruct_loans(ledger, seconds_per_block)
    repaid_usd: dict = defaultdict(int)
    for e in ledger:
        if e.kind is EventKind.LiquidateRepay:
            repaid_usd[e.token] += e.usd_value
    for t in sorted(tokens):
        mine = [l for l in loans if l.token == t]
        liq = [l for l in mine if l.liquidation_events]
        drawn = sum(l.drawn_usd for l in mine)
        rows.append([tokens[t].symbol, len(mine), len(liq),
                     100 * len(liq) / len(mine) if mine else 0.0,
                     _usd(repaid_usd[t]), 100 * repaid_usd[t] / drawn if drawn else 0.0])
    return pd.DataFrame(rows, columns=["token", "n_loans", "n_liquidated", "pct_liquidated_count",
                                       "liquidated_usd", "pct_liquidated_usd"]).set_index("token")


def summary_tables(ledger: Iterable[Event], tokens: Mapping[int, Token], categories: Mapping,
                   seconds_per_block: int = 13, n_days: Optional[int] = None) -> dict[str, pd.DataFrame]:
    ledger = list(ledger)
    return {
        "net_deposits": net_deposit_stats(ledger, tokens, seconds_per_block, n_days),
        "loans": loan_stats(ledger, categories, seconds_per_block),
        "redeposits": redeposit_stats(ledger, categories, seconds_per_block),
        "liquidations": liquidation_stats(ledger, tokens, seconds_per_block),
    }


def redeposit_design(loan_days: list[LoanDay], categories: Mapping, label: str = "within_1d",
                     base_category: Optional[str] = None):
    """Logit inputs: constant, log loan size (USD million) and category dummies.

    Returns (X, y, clusters, names). The first category present (or
    ``base_category``) is the omitted level.
    """
    if not loan_days:
        raise ValueError("no loan days")
    cats = [_cat(categories, d.address) for d in loan_days]
    levels = [c for c in CATEGORY_ORDER if c in set(cats)] + sorted(set(cats) - set(CATEGORY_ORDER))
    base = base_category if base_category is not None else levels[0]
    dummies = [c for c in levels if c != base]
    X = np.column_stack(
        [np.ones(len(loan_days)), [np.log(_usd(d.total_drawn_usd) / 1e6) for d in loan_days]]
        + [[1.0 if c == lvl else 0.0 for c in cats] for lvl in dummies]
    )
    attr = "redeposited_within_1d" if label == "within_1d" else "redeposited_same_day"
    y = np.array([1.0 if getattr(d, attr) else 0.0 for d in loan_days])
    clusters = np.array([d.address for d in loan_days])
    return X, y, clusters, ["const", "LogLoanSize"] + [f"cat_{c}" for c in dummies]
