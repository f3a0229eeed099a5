"""Concentration, micro-address filter, flow network and liquidation matrix."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping

import networkx as nx
import pandas as pd

from ..fixedpoint import Wad, from_wad, to_wad
from ..ledger import AgentCategory, Event, EventKind, Token

LENDING_POOL = "LendingPool"
MICRO_LIMIT_USD = to_wad(3)


class AnalyticsError(Exception):
    pass


def address_volumes(ledger: Iterable[Event], side: str) -> dict[int, Wad]:
    kind = {"deposits": EventKind.Deposit, "loans": EventKind.Borrow}.get(side)
    if kind is None:
        raise AnalyticsError(f"side must be 'deposits' or 'loans', got {side!r}")
    vol: dict = defaultdict(int)
    for e in ledger:
        if e.kind is kind:
            vol[e.address] += e.usd_value
    return dict(vol)


def top_k_share(volumes: Mapping[int, Wad], k: int) -> float:
    if k < 1:
        raise AnalyticsError("k must be at least 1")
    total = sum(volumes.values())
    if total == 0:
        raise AnalyticsError("no volume to rank")
    ranked = sorted(volumes.values(), reverse=True)
    return sum(ranked[:k]) / total


def concentration(ledger: Iterable[Event], side: str, k: int) -> float:
    """Share of cumulative USD volume held by the top ``k`` addresses."""
    return top_k_share(address_volumes(ledger, side), k)


def micro_filter(ledger: Iterable[Event], tokens: Mapping[int, Token]) -> set[int]:
    """Addresses whose whole history is one stablecoin deposit of at most 3 USD."""
    seen: dict = defaultdict(list)
    for e in ledger:
        seen[e.address].append(e)
        if e.counterparty is not None and e.counterparty != e.address:
            seen[e.counterparty].append(e)
    out = set()
    for addr, evs in seen.items():
        if len(evs) != 1:
            continue
        e = evs[0]
        if (e.kind is EventKind.Deposit and e.address == addr and tokens[e.token].is_stablecoin
                and e.usd_value <= MICRO_LIMIT_USD):
            out.add(addr)
    return out


def _cat(categories, addr):
    c = categories.get(addr)
    if c is None:
        raise AnalyticsError(f"address {addr} has no category")
    return c.value if isinstance(c, AgentCategory) else str(c)


def flow_network(ledger: Iterable[Event], categories: Mapping[int, AgentCategory],
                 tokens: Mapping[int, Token]) -> nx.DiGraph:
    """Stablecoin USD flows between address categories and the lending pool.

    Edge attributes: ``usd`` (exact Wad) and ``weight`` (float USD).
    """
    flows: dict = defaultdict(int)
    for e in ledger:
        if not tokens[e.token].is_stablecoin:
            continue
        k = e.kind
        if k in (EventKind.Deposit, EventKind.Repay, EventKind.LiquidateRepay):
            src, dst = _cat(categories, e.address), LENDING_POOL
        elif k in (EventKind.Withdraw, EventKind.Borrow, EventKind.ClaimReward, EventKind.RewardAccrue):
            src, dst = LENDING_POOL, _cat(categories, e.address)
        elif k is EventKind.LiquidateSeize:
            src, dst = _cat(categories, e.counterparty), _cat(categories, e.address)
        elif k is EventKind.Swap:
            src, dst = _cat(categories, e.address), _cat(categories, e.counterparty)
        else:
            continue
        flows[(src, dst)] += e.usd_value
    g = nx.DiGraph()
    for (src, dst), usd in sorted(flows.items()):
        g.add_edge(src, dst, usd=usd, weight=from_wad(usd))
    return g


def network_edges(g: nx.DiGraph) -> list[tuple[str, str, Wad]]:
    return sorted((u, v, d["usd"]) for u, v, d in g.edges(data=True))


def liquidation_matrix(ledger: Iterable[Event], tokens: Mapping[int, Token]) -> pd.DataFrame:
    """USD of debt repaid (rows: loan token) against collateral seized (columns).

    Cells are exact Wads (object dtype); a ``total`` row and column are added.
    """
    events = list(ledger)
    cells: dict = defaultdict(int)
    i = 0
    while i < len(events):
        e = events[i]
        if e.kind is EventKind.LiquidateSeize:
            raise AnalyticsError(f"seize event seq {e.seq} without a preceding repay")
        if e.kind is EventKind.LiquidateRepay:
            nxt = events[i + 1] if i + 1 < len(events) else None
            if (nxt is None or nxt.kind is not EventKind.LiquidateSeize or nxt.block != e.block
                    or nxt.address != e.address or nxt.counterparty != e.counterparty):
                raise AnalyticsError(f"repay event seq {e.seq} has no matching seize")
            cells[(e.token, nxt.token)] += e.usd_value
            i += 2
            continue
        i += 1
    syms = [tokens[t].symbol for t in sorted(tokens)]
    df = pd.DataFrame(0, index=syms, columns=syms, dtype=object)
    for (r, c), v in cells.items():
        df.loc[tokens[r].symbol, tokens[c].symbol] = v
    df["total"] = [sum(df.loc[s, syms]) for s in syms]
    df.loc["total"] = [sum(df[c].iloc[: len(syms)]) for c in df.columns]
    return df
