"""Loan-cycle reconstruction and redeposit detection from an event ledger."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..fixedpoint import Wad, mul_div
from ..ledger import SECONDS_PER_DAY, Event, EventKind

DEBT_KINDS = (EventKind.Borrow, EventKind.Repay, EventKind.LiquidateRepay)


@dataclass
class Loan:
    """One borrow-repayment cycle of an (address, token) pair."""

    address: int
    token: int
    open_block: int
    close_block: Optional[int] = None
    draw_events: list = field(default_factory=list)
    repay_events: list = field(default_factory=list)
    liquidation_events: list = field(default_factory=list)
    peak_debt_usd: Wad = 0
    drawn_usd: Wad = 0
    seconds_per_block: int = 13

    @property
    def closed(self) -> bool:
        return self.close_block is not None

    @property
    def duration_days(self) -> Optional[float]:
        if self.close_block is None:
            return None
        return (self.close_block - self.open_block) * self.seconds_per_block / SECONDS_PER_DAY


ClosedLoan = Loan


def _borrower(e: Event) -> int:
    return e.counterparty if e.kind is EventKind.LiquidateRepay else e.address


def reconstruct_loans(ledger: Iterable[Event], seconds_per_block: int = 13) -> list[Loan]:
    """Every loan cycle, closed or still open at the end of the ledger.

    A cycle opens on the first draw while debt is zero and closes when debt
    returns to exactly zero. Debt comes from each event's ``debt_after``
    when present; otherwise it is replayed from amounts (no interest).
    """
    debt: dict = defaultdict(int)
    current: dict = {}
    loans: list[Loan] = []
    for e in ledger:
        if e.kind not in DEBT_KINDS:
            continue
        key = (_borrower(e), e.token)
        if e.kind is EventKind.Borrow:
            after = e.debt_after if e.debt_after is not None else debt[key] + e.amount
            loan = current.get(key)
            if loan is None:
                loan = Loan(key[0], e.token, e.block, seconds_per_block=seconds_per_block)
                current[key] = loan
                loans.append(loan)
            loan.draw_events.append(e.seq)
            loan.drawn_usd += e.usd_value
        else:
            after = e.debt_after if e.debt_after is not None else max(0, debt[key] - e.amount)
            loan = current.get(key)
            if loan is None:
                continue  # repayment without a known draw
            (loan.liquidation_events if e.kind is EventKind.LiquidateRepay else loan.repay_events).append(e.seq)
        if e.amount:
            loan.peak_debt_usd = max(loan.peak_debt_usd, mul_div(after, e.usd_value, e.amount))
        debt[key] = after
        if after == 0:
            loan.close_block = e.block
            del current[key]
    return loans


def reconstruct_closed_loans(ledger: Iterable[Event], seconds_per_block: int = 13) -> list[Loan]:
    return [l for l in reconstruct_loans(ledger, seconds_per_block) if l.closed]


@dataclass
class LoanDay:
    address: int
    token: int
    day: int
    total_drawn_usd: Wad
    redeposited_same_day: bool
    redeposited_within_1d: bool


def detect_redeposits(ledger: Iterable[Event], window_seconds: int = SECONDS_PER_DAY,
                      seconds_per_block: int = 13) -> list[LoanDay]:
    """Flag loan days on which the borrower deposited the borrowed token back.

    A deposit counts only if it comes after a draw of that day, in ledger
    order. ``redeposited_same_day`` needs the deposit on the same UTC day;
    ``redeposited_within_1d`` needs it within ``window_seconds`` of a draw
    (and also holds whenever the same-day flag does).
    """
    draws: dict = defaultdict(list)
    deposits: dict = defaultdict(list)
    for e in ledger:
        t = e.block * seconds_per_block
        if e.kind is EventKind.Borrow:
            draws[(e.address, e.token, t // SECONDS_PER_DAY)].append((e.block, e.seq, t, e.usd_value))
        elif e.kind is EventKind.Deposit:
            deposits[(e.address, e.token)].append((e.block, e.seq, t))
    out = []
    for (addr, tok, day), ds in sorted(draws.items()):
        deps = deposits.get((addr, tok), [])
        first = min((b, s) for b, s, _, _ in ds)
        same = any((b, s) > first and t // SECONDS_PER_DAY == day for b, s, t in deps)
        within = same or any(
            (b, s) > (db, dsq) and 0 <= t - dt <= window_seconds
            for db, dsq, dt, _ in ds for b, s, t in deps
        )
        out.append(LoanDay(addr, tok, day, sum(u for *_, u in ds), same, within))
    return out
