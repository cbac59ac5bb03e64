"""Exact frequency arithmetic on an integer micro-hertz grid.

Optical frequencies near 1.27e15 Hz cannot be combined in double precision
without losing the last few hertz, so every frequency here is an integer
count of 1 uHz ticks and every coefficient is an exact rational.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

TICKS_PER_HZ = 1_000_000
TICK_LIMIT = 2**127 - 1

UNIT_EXPONENT = {"Hz": 0, "kHz": 3, "MHz": 6, "GHz": 9, "THz": 12}

Ratio = Fraction
RatioLike = Union[int, Fraction]

_FREQ_RE = re.compile(
    r"^\s*(?P<sign>[+-]?)(?P<int>\d+)(?:\.(?P<frac>\d+))?\s*(?P<unit>[kMGT]?Hz)?\s*$"
)


class FrequencyError(ValueError):
    """Malformed frequency text or a value that does not fit the tick grid."""


class ExactnessError(ArithmeticError):
    """An operation would have to round to land on the 1 uHz grid."""


def _check_range(ticks: int) -> int:
    if abs(ticks) > TICK_LIMIT:
        raise OverflowError(f"{ticks} uHz exceeds the 128-bit tick range")
    return ticks


@dataclass(frozen=True, order=True, slots=True)
class Frequency:
    """A frequency stored as a signed integer number of micro-hertz."""

    ticks: int

    def __post_init__(self):
        if not isinstance(self.ticks, int) or isinstance(self.ticks, bool):
            raise TypeError(f"ticks must be int, got {type(self.ticks).__name__}")
        _check_range(self.ticks)

    @classmethod
    def from_hz(cls, hz: int | Fraction | str) -> "Frequency":
        """Exact construction from an integer or rational number of hertz.

        Strings go through :func:`parse_frequency`. Floats are refused; use
        :meth:`from_float_hz` to round explicitly.
        """
        if isinstance(hz, str):
            return parse_frequency(hz)
        if isinstance(hz, float):
            raise TypeError("use Frequency.from_float_hz for float input")
        value = Fraction(hz) * TICKS_PER_HZ
        if value.denominator != 1:
            raise ExactnessError(f"{hz} Hz is not a whole number of uHz")
        return cls(int(value))

    @classmethod
    def from_float_hz(cls, hz: float) -> "Frequency":
        """Lossy: round a float number of hertz half-up onto the tick grid."""
        return cls(round_half_up(Fraction(hz) * TICKS_PER_HZ))

    @property
    def hz(self) -> Fraction:
        return Fraction(self.ticks, TICKS_PER_HZ)

    def to_float_hz(self) -> float:
        return self.ticks / TICKS_PER_HZ

    def __add__(self, other: "Frequency") -> "Frequency":
        if not isinstance(other, Frequency):
            return NotImplemented
        return Frequency(self.ticks + other.ticks)

    def __sub__(self, other: "Frequency") -> "Frequency":
        if not isinstance(other, Frequency):
            return NotImplemented
        return Frequency(self.ticks - other.ticks)

    def __neg__(self) -> "Frequency":
        return Frequency(-self.ticks)

    def __abs__(self) -> "Frequency":
        return Frequency(abs(self.ticks))

    def __mul__(self, factor: RatioLike) -> "Frequency":
        if isinstance(factor, (int, Fraction)) and not isinstance(factor, bool):
            return scale_exact(self, factor)
        return NotImplemented

    __rmul__ = __mul__

    def __bool__(self) -> bool:
        return self.ticks != 0

    def __str__(self) -> str:
        return format_frequency(self)

    def __repr__(self) -> str:
        return f"Frequency({format_frequency(self)!r})"


ZERO = Frequency(0)


@dataclass(frozen=True, slots=True)
class UncertainFrequency:
    """A value with a one-standard-deviation uncertainty."""

    value: Frequency
    sigma: Frequency = ZERO

    def __post_init__(self):
        if self.sigma.ticks < 0:
            raise ValueError("sigma must be non-negative")

    def __str__(self) -> str:
        return f"{format_frequency(self.value)} ({format_frequency(self.sigma)})"


def round_half_up(x: Fraction) -> int:
    """floor(x + 1/2); commutes with integer shifts, unlike banker's rounding."""
    return math.floor(x + Fraction(1, 2))


def parse_frequency(text: str) -> Frequency:
    """Parse ``"<decimal> [Hz|kHz|MHz|GHz|THz]"`` into an exact Frequency.

    A missing unit means Hz. Digits below 1 uHz are an error unless they
    are zeros.
    """
    m = _FREQ_RE.match(text)
    if m is None:
        raise FrequencyError(f"malformed frequency {text!r}")
    unit = m.group("unit") or "Hz"
    exponent = UNIT_EXPONENT[unit] + 6
    int_part, frac = m.group("int"), m.group("frac") or ""
    if len(frac) > exponent:
        excess = frac[exponent:]
        if excess.strip("0"):
            raise FrequencyError(f"{text!r} is finer than 1 uHz")
        frac = frac[:exponent]
    ticks = int(int_part + frac.ljust(exponent, "0"))
    if m.group("sign") == "-":
        ticks = -ticks
    return Frequency(_check_range(ticks))


def format_frequency(f: Frequency, unit: str = "Hz") -> str:
    """Canonical exact text: no trailing fractional zeros, unit suffix.

    ``parse_frequency(format_frequency(f, u)) == f`` for every unit.
    """
    exponent = UNIT_EXPONENT[unit] + 6
    sign = "-" if f.ticks < 0 else ""
    whole, frac = divmod(abs(f.ticks), 10**exponent)
    frac_text = str(frac).rjust(exponent, "0").rstrip("0") if exponent else ""
    body = f"{whole}.{frac_text}" if frac_text else str(whole)
    return f"{sign}{body} {unit}"


def format_rounded(f: Frequency, unit: str = "kHz", decimals: int = 2) -> str:
    """Presentation format rounded half-up (away from zero) to ``decimals``."""
    exponent = UNIT_EXPONENT[unit] + 6
    step = 10 ** (exponent - decimals) if decimals <= exponent else None
    if step is None:
        return format_frequency(f, unit)
    q = round_half_up(Fraction(abs(f.ticks), step))
    whole, frac = divmod(q, 10**decimals)
    sign = "-" if f.ticks < 0 and q else ""
    body = f"{whole}.{str(frac).rjust(decimals, '0')}" if decimals else str(whole)
    return f"{sign}{body} {unit}"


def as_ratio(r: RatioLike) -> Fraction:
    if isinstance(r, bool) or not isinstance(r, (int, Fraction)):
        raise TypeError(f"coefficient must be int or Fraction, got {type(r).__name__}")
    return Fraction(r)


def scale_exact(f: Frequency, r: RatioLike) -> Frequency:
    """Exact product f * r; refuses results off the tick grid."""
    r = as_ratio(r)
    num = f.ticks * r.numerator
    q, rem = divmod(num, r.denominator)
    if rem:
        raise ExactnessError(f"{f} * {r} is not a whole number of uHz")
    return Frequency(_check_range(q))


def linear_combine(terms: Iterable[tuple[RatioLike, Frequency]]) -> Frequency:
    """Exact sum of coefficient * frequency terms."""
    total = 0
    for r, f in terms:
        total += scale_exact(f, r).ticks
    return Frequency(_check_range(total))


def _isqrt_half_up(square: Fraction) -> int:
    # largest t with (t - 1/2)^2 <= square  <=>  t = floor(sqrt(square) + 1/2)
    u = math.isqrt(math.floor(4 * square))
    return (u + 1) // 2


def quadrature(sigmas: Sequence[Frequency]) -> Frequency:
    """Root-sum-square of standard deviations, rounded half-up to 1 uHz."""
    total = 0
    for s in sigmas:
        if s.ticks < 0:
            raise ValueError(f"negative sigma {s}")
        total += s.ticks * s.ticks
    return Frequency(_check_range(_isqrt_half_up(Fraction(total))))


def quadrature_scaled(items: Iterable[tuple[RatioLike, Frequency]]) -> Frequency:
    """Root-sum-square of |coefficient| * sigma, computed before any rounding."""
    total = Fraction(0)
    for r, s in items:
        if s.ticks < 0:
            raise ValueError(f"negative sigma {s}")
        total += (as_ratio(r) * s.ticks) ** 2
    return Frequency(_check_range(_isqrt_half_up(total)))
