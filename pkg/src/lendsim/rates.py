"""Kinked utilization interest-rate model with scheduled parameter regimes."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence

from .fixedpoint import WAD, Wad, to_wad, wad_mul


@dataclass(frozen=True)
class InterestParams:
    """Annual rate parameters, all Wads.

    base_rate + slope_low * U below the kink, slope_high beyond it.
    """

    base_rate: Wad
    slope_low: Wad
    slope_high: Wad
    kink: Wad
    reserve_factor: Wad = 0

    def __post_init__(self):
        if self.base_rate < 0 or self.slope_low < 0:
            raise ValueError("base_rate and slope_low must be non-negative")
        if self.slope_high < self.slope_low:
            raise ValueError("slope_high must be >= slope_low")
        if not 0 < self.kink <= WAD:
            raise ValueError("kink must lie in (0, 1]")
        if not 0 <= self.reserve_factor < WAD:
            raise ValueError("reserve_factor must lie in [0, 1)")

    @classmethod
    def from_floats(cls, a, b, c, kink, reserve_factor=0.0) -> "InterestParams":
        return cls(to_wad(a), to_wad(b), to_wad(c), to_wad(kink), to_wad(reserve_factor))

    @classmethod
    def from_dict(cls, d: dict) -> "InterestParams":
        return cls.from_floats(
            d["base_rate"], d["slope_low"], d["slope_high"], d["kink"], d.get("reserve_factor", 0)
        )

    def to_dict(self) -> dict:
        from .fixedpoint import format_wad

        return {
            "base_rate": format_wad(self.base_rate),
            "slope_low": format_wad(self.slope_low),
            "slope_high": format_wad(self.slope_high),
            "kink": format_wad(self.kink),
            "reserve_factor": format_wad(self.reserve_factor),
        }


DEFAULT_PARAMS = InterestParams.from_floats(0.02, 0.20, 2.00, 0.80, 0.10)


class RegimeSchedule:
    """Ordered (activation_block, params) pairs; the first starts at block 0."""

    def __init__(self, entries: Sequence[tuple[int, InterestParams]]):
        entries = list(entries)
        if not entries or entries[0][0] != 0:
            raise ValueError("schedule must start at block 0")
        blocks = [b for b, _ in entries]
        if any(b2 <= b1 for b1, b2 in zip(blocks, blocks[1:])):
            raise ValueError("activation blocks must be strictly increasing")
        self.entries = entries
        self._blocks = blocks

    @classmethod
    def constant(cls, params: InterestParams) -> "RegimeSchedule":
        return cls([(0, params)])

    def __len__(self):
        return len(self.entries)

    def regime_index(self, block: int) -> int:
        if block < 0:
            raise ValueError("block must be non-negative")
        return bisect.bisect_right(self._blocks, block) - 1


def _check_u(u: Wad) -> None:
    if not 0 <= u <= WAD:
        raise ValueError(f"utilization out of [0, 1]: {u}")


def borrow_rate(params: InterestParams, u: Wad) -> Wad:
    _check_u(u)
    if u <= params.kink:
        return params.base_rate + wad_mul(params.slope_low, u)
    return (
        params.base_rate
        + wad_mul(params.slope_low, params.kink)
        + wad_mul(params.slope_high, u - params.kink)
    )


def supply_rate(params: InterestParams, u: Wad) -> Wad:
    _check_u(u)
    return wad_mul(wad_mul(borrow_rate(params, u), WAD - params.reserve_factor), u)


def active_params(schedule: RegimeSchedule, block: int) -> InterestParams:
    return schedule.entries[schedule.regime_index(block)][1]
