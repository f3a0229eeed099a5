"""18-decimal fixed-point helpers.

Amounts, prices and rates are plain Python ints holding ``value * 10**18``.
Multiplication and division truncate toward zero, so every result is within
one raw unit (1e-18) of the exact rational value. Results whose magnitude
reaches 2**256 raise ``OverflowError`` instead of growing silently.
"""

from __future__ import annotations

import numbers
from decimal import Decimal
from fractions import Fraction
from typing import Union

Wad = int

WAD = 10**18
MAX_WAD = 2**256 - 1
_MAX_PRODUCT = MAX_WAD * WAD

Number = Union[int, float, str, Decimal, Fraction]


def _check(x: int) -> int:
    if abs(x) > MAX_WAD:
        raise OverflowError(f"fixed-point value out of range: {x}")
    return x


def _tdiv(num: int, den: int) -> int:
    """Integer division truncating toward zero."""
    if num >= 0 and den > 0:
        return num // den
    if den == 0:
        raise ZeroDivisionError("fixed-point division by zero")
    q = abs(num) // abs(den)
    return q if (num >= 0) == (den > 0) else -q


def wad_mul(a: Wad, b: Wad) -> Wad:
    p = a * b
    if p >= 0:
        if p > _MAX_PRODUCT:
            raise OverflowError("wad_mul overflow")
        return p // WAD
    if -p > _MAX_PRODUCT:
        raise OverflowError("wad_mul overflow")
    return -(-p // WAD)


def wad_div(a: Wad, b: Wad) -> Wad:
    return _check(_tdiv(_check(a * WAD), b))


def mul_div(a: int, b: int, c: int) -> int:
    """``a * b / c`` truncated toward zero, without intermediate rounding."""
    return _check(_tdiv(a * b, c))


def mul_div_up(a: int, b: int, c: int) -> int:
    """``a * b / c`` for non-negative operands, rounded up."""
    if a < 0 or b < 0 or c <= 0:
        raise ValueError("mul_div_up expects non-negative operands")
    return _check(-(-(a * b) // c))


def to_wad(x: Number) -> Wad:
    """Convert a human number to fixed point.

    Floats go through their shortest repr so that ``to_wad(0.1) == 10**17``.
    """
    if isinstance(x, bool):
        raise TypeError("bool is not a number")
    if isinstance(x, numbers.Integral):
        return _check(int(x) * WAD)
    if isinstance(x, Fraction):
        return _check(_tdiv(x.numerator * WAD, x.denominator))
    if isinstance(x, float):
        x = repr(float(x))  # numpy floats repr with a type prefix
    d = Decimal(x) * WAD
    return _check(int(d))


def from_wad(x: Wad) -> float:
    return x / WAD


def wad_to_decimal(x: Wad) -> Decimal:
    return Decimal(x) / Decimal(WAD)


def format_wad(x: Wad) -> str:
    """Exact decimal text of a Wad, trailing zeros stripped."""
    sign = "-" if x < 0 else ""
    q, r = divmod(abs(x), WAD)
    if r == 0:
        return f"{sign}{q}"
    return f"{sign}{q}.{r:018d}".rstrip("0")
