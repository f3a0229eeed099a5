"""Domain types shared by every module and the append-only event ledger."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .fixedpoint import Wad, format_wad, to_wad

SECONDS_PER_YEAR = 31_536_000
SECONDS_PER_DAY = 86_400

CSV_HEADER = ["block", "seq", "address", "kind", "token", "amount", "usd_value", "counterparty"]


class LedgerError(Exception):
    pass


class AgentCategory(str, enum.Enum):
    LargeAddress = "LargeAddress"
    SmallAddress = "SmallAddress"
    MicroAddress = "MicroAddress"
    YieldAggregator = "YieldAggregator"
    OnRamp = "OnRamp"
    DecentralizedExchange = "DecentralizedExchange"
    AssetManagement = "AssetManagement"
    UnidentifiedContract = "UnidentifiedContract"
    LiquidatorBot = "LiquidatorBot"


class EventKind(str, enum.Enum):
    Deposit = "Deposit"
    Withdraw = "Withdraw"
    Borrow = "Borrow"
    Repay = "Repay"
    LiquidateRepay = "LiquidateRepay"
    LiquidateSeize = "LiquidateSeize"
    Swap = "Swap"
    ClaimReward = "ClaimReward"
    RewardAccrue = "RewardAccrue"


@dataclass(frozen=True)
class Token:
    id: int
    symbol: str
    is_stablecoin: bool = False
    decimals: int = 18


@dataclass
class BlockClock:
    block_number: int = 0
    seconds_per_block: int = 13

    def __post_init__(self):
        if self.seconds_per_block <= 0:
            raise ValueError("seconds_per_block must be positive")
        if self.blocks_per_year <= 0:
            raise ValueError("seconds_per_block longer than a year")

    @property
    def blocks_per_year(self) -> int:
        return SECONDS_PER_YEAR // self.seconds_per_block

    @property
    def blocks_per_day(self) -> float:
        return SECONDS_PER_DAY / self.seconds_per_block

    def timestamp(self, block: Optional[int] = None) -> int:
        b = self.block_number if block is None else block
        return b * self.seconds_per_block

    def day(self, block: int) -> int:
        """UTC day index; block 0 starts at midnight."""
        return (block * self.seconds_per_block) // SECONDS_PER_DAY

    def advance(self, to_block: Optional[int] = None) -> int:
        nxt = self.block_number + 1 if to_block is None else to_block
        if nxt <= self.block_number:
            raise ValueError(f"clock must move forward: {self.block_number} -> {nxt}")
        self.block_number = nxt
        return nxt


@dataclass
class Event:
    """One ledger record.

    Swap events describe one leg each: ``address`` sends ``amount`` of
    ``token`` to ``counterparty``. ``debt_after`` carries the position's
    outstanding debt after Borrow/Repay/LiquidateRepay so that loan cycles
    can be reconstructed without re-running interest accrual.
    """

    block: int
    address: int
    kind: EventKind
    token: int
    amount: Wad
    usd_value: Wad
    counterparty: Optional[int] = None
    debt_after: Optional[Wad] = None
    seq: int = -1

    def __post_init__(self):
        if self.amount < 0 or self.usd_value < 0:
            raise LedgerError("event amounts must be non-negative")
        if not isinstance(self.kind, EventKind):
            self.kind = EventKind(self.kind)

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "seq": self.seq,
            "address": self.address,
            "kind": self.kind.value,
            "token": self.token,
            "amount": format_wad(self.amount),
            "usd_value": format_wad(self.usd_value),
            "counterparty": self.counterparty,
            "debt_after": None if self.debt_after is None else format_wad(self.debt_after),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        debt = d.get("debt_after")
        cp = d.get("counterparty")
        return cls(
            block=int(d["block"]),
            address=int(d["address"]),
            kind=EventKind(d["kind"]),
            token=int(d["token"]),
            amount=to_wad(str(d["amount"])),
            usd_value=to_wad(str(d["usd_value"])),
            counterparty=None if cp in (None, "") else int(cp),
            debt_after=None if debt in (None, "") else to_wad(str(debt)),
            seq=int(d.get("seq", -1)),
        )


class Ledger:
    """Append-only, totally ordered by (block, seq)."""

    def __init__(self, events: Iterable[Event] = ()):
        self.events: list[Event] = []
        for e in events:
            self.append(e)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    @property
    def last_block(self) -> Optional[int]:
        return self.events[-1].block if self.events else None

    def append(self, event: Event) -> int:
        if self.events and event.block < self.events[-1].block:
            raise LedgerError(
                f"out-of-order event: block {event.block} after block {self.events[-1].block}"
            )
        event.seq = len(self.events)
        self.events.append(event)
        return event.seq

    def record(self, block, address, kind, token, amount, usd_value, counterparty=None, debt_after=None) -> int:
        return self.append(Event(block, address, kind, token, amount, usd_value, counterparty, debt_after))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), separators=(",", ":")) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "Ledger":
        led = cls()
        for line in text.splitlines():
            if line.strip():
                e = Event.from_dict(json.loads(line))
                want = e.seq
                led.append(e)
                if want not in (-1, e.seq):
                    raise LedgerError(f"sequence gap at seq {want}")
        return led

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for e in self.events:
            d = e.to_dict()
            w.writerow(["" if d[k] is None else d[k] for k in CSV_HEADER])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "Ledger":
        return cls.from_jsonl(Path(path).read_text())


def append_event(ledger: Ledger, event: Event) -> int:
    return ledger.append(event)
