"""Exact rational helpers: decimal parsing, decimal rendering, float64 checks.

All model parameters and formula constants in this package are
`fractions.Fraction` values.  Decimal source literals are parsed exactly
(0.01 is 1/100, never a binary float), and rendering back to text is
exact whenever the denominator divides a power of ten.
"""

from __future__ import annotations

import math
from fractions import Fraction

__all__ = [
    "parse_decimal",
    "exact_decimal",
    "format_rational",
    "is_exact_double",
    "nearest_double_str",
    "mpf_to_fraction",
]


def parse_decimal(text: str) -> Fraction:
    """Parse a decimal literal (optionally signed, optional exponent) exactly."""
    return Fraction(text.strip())


def exact_decimal(r: Fraction) -> str | None:
    """Shortest exact decimal form of `r`, or None if non-terminating.

    A rational p/q in lowest terms terminates iff q = 2^a * 5^b; the
    minimal number of fraction digits is then max(a, b).
    """
    q = r.denominator
    a = 0
    while q % 2 == 0:
        q //= 2
        a += 1
    b = 0
    while q % 5 == 0:
        q //= 5
        b += 1
    if q != 1:
        return None
    digits = max(a, b)
    if digits == 0:
        return str(r.numerator)
    scaled = abs(r.numerator) * 10**digits // r.denominator
    sign = "-" if r.numerator < 0 else ""
    whole, frac = divmod(scaled, 10**digits)
    return f"{sign}{whole}.{str(frac).zfill(digits)}"


def format_rational(r: Fraction) -> str:
    """Exact decimal when possible, else `p/q`."""
    dec = exact_decimal(r)
    if dec is not None:
        return dec
    return f"{r.numerator}/{r.denominator}"


def is_exact_double(r: Fraction) -> bool:
    """True when `r` is exactly representable as an IEEE 754 double."""
    try:
        f = float(r)
    except OverflowError:
        return False
    if math.isinf(f) or math.isnan(f):
        return False
    return Fraction(f) == r


def nearest_double_str(r: Fraction) -> str:
    """Shortest decimal that round-trips through the nearest double."""
    return repr(float(r))


def mpf_to_fraction(x) -> Fraction:
    """Convert an mpmath mpf (or raw mpf tuple) to the exact rational it denotes."""
    sign, man, exp, _ = x if isinstance(x, tuple) else x._mpf_
    if man == 0 and exp != 0:
        raise ValueError(f"non-finite value {x!r}")
    value = Fraction(man, 1)
    if exp >= 0:
        value *= 2**exp
    else:
        value /= 2**-exp
    return -value if sign else value
