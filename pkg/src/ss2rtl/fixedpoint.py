"""Signed two's-complement Q-format arithmetic.

Datapath math in this package is exact integer arithmetic on raw values;
rounding happens only where a value is narrowed to a destination format.
The rounding mode is round-to-nearest with ties away from zero and the
overflow policy is saturation, applied uniformly so the functional
simulator, the netlist interpreter, and the emitted hardware agree bit
for bit. Conversions from real numbers go through Fraction so that wide
formats (up to 64-bit words) never lose precision to float round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

Real = Union[int, float, Fraction]


def round_half_away(x: Fraction) -> int:
    """Round to nearest integer, ties away from zero."""
    if x >= 0:
        return math.floor(x + Fraction(1, 2))
    return math.ceil(x - Fraction(1, 2))


def round_shift(raw: int, shift: int) -> int:
    """Exact raw / 2**shift rounded to nearest, ties away from zero.

    Negative shift is an exact left shift. This is the only narrowing
    primitive in the package; every requantization funnels through it.
    """
    if shift <= 0:
        return raw << (-shift)
    half = 1 << (shift - 1)
    if raw >= 0:
        return (raw + half) >> shift
    return -((-raw + half) >> shift)


@dataclass(frozen=True)
class FixedPointFormat:
    """Q-format descriptor: word_length total bits, frac_length fraction bits.

    Signed two's complement only. Representable raws span
    [-2**(w-1), 2**(w-1) - 1] and a raw r denotes r * 2**-frac_length.
    """

    word_length: int
    frac_length: int

    def __post_init__(self) -> None:
        if self.word_length < 2:
            raise ValueError(f"word_length must be >= 2, got {self.word_length}")
        if not 0 <= self.frac_length <= self.word_length - 1:
            raise ValueError(
                f"frac_length must be in [0, {self.word_length - 1}], "
                f"got {self.frac_length}"
            )

    @property
    def min_raw(self) -> int:
        return -(1 << (self.word_length - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.word_length - 1)) - 1

    @property
    def ulp(self) -> Fraction:
        return Fraction(1, 1 << self.frac_length)

    @property
    def min_value(self) -> Fraction:
        return self.min_raw * self.ulp

    @property
    def max_value(self) -> Fraction:
        return self.max_raw * self.ulp

    def saturate(self, raw: int) -> int:
        if raw > self.max_raw:
            return self.max_raw
        if raw < self.min_raw:
            return self.min_raw
        return raw

    def __str__(self) -> str:
        return f"Q{self.word_length}.{self.frac_length}"


@dataclass(frozen=True)
class FpValue:
    """A raw integer paired with its format. Construction rejects raws
    outside the format range; arithmetic saturates instead."""

    raw: int
    fmt: FixedPointFormat

    def __post_init__(self) -> None:
        if not self.fmt.min_raw <= self.raw <= self.fmt.max_raw:
            raise ValueError(
                f"raw {self.raw} outside {self.fmt} range "
                f"[{self.fmt.min_raw}, {self.fmt.max_raw}]"
            )

    @property
    def value(self) -> Fraction:
        return self.raw * self.fmt.ulp

    def __float__(self) -> float:
        return float(self.value)


def _to_fraction(value: Real) -> Fraction:
    # Fraction(float) is exact: floats are binary fractions.
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if math.isnan(value):
        raise ValueError("cannot quantize NaN")
    if math.isinf(value):
        # saturation takes care of the sign below
        return Fraction(2) ** 1024 * (1 if value > 0 else -1)
    return Fraction(value)


def quantize(value: Real, fmt: FixedPointFormat) -> FpValue:
    """Nearest representable value in fmt, ties away from zero, saturating."""
    scaled = _to_fraction(value) * (1 << fmt.frac_length)
    return FpValue(fmt.saturate(round_half_away(scaled)), fmt)


def product_format(a: FixedPointFormat, b: FixedPointFormat) -> FixedPointFormat:
    return FixedPointFormat(a.word_length + b.word_length,
                            a.frac_length + b.frac_length)


def fp_mul(a: FpValue, b: FpValue) -> FpValue:
    """Exact widened product. The full-width result always fits: the worst
    case (-2**(wa-1)) * (-2**(wb-1)) equals 2**(wa+wb-2) < 2**(wa+wb-1)."""
    return FpValue(a.raw * b.raw, product_format(a.fmt, b.fmt))


def fp_add(a: FpValue, b: FpValue, out_fmt: FixedPointFormat) -> FpValue:
    """Sum of a and b delivered in out_fmt.

    Operands are aligned exactly to the widest fraction length involved,
    summed exactly, then narrowed to out_fmt (rounding only if out_fmt has
    fewer fraction bits than the operands) and saturated.
    """
    f = max(a.fmt.frac_length, b.fmt.frac_length, out_fmt.frac_length)
    total = (a.raw << (f - a.fmt.frac_length)) + (b.raw << (f - b.fmt.frac_length))
    raw = round_shift(total, f - out_fmt.frac_length)
    return FpValue(out_fmt.saturate(raw), out_fmt)


def requantize(v: FpValue, fmt: FixedPointFormat) -> FpValue:
    """Change format: round to nearest (ties away from zero), saturate.

    Equal to quantize(v.value, fmt) but computed purely on integers.
    """
    raw = round_shift(v.raw, v.fmt.frac_length - fmt.frac_length)
    return FpValue(fmt.saturate(raw), fmt)


@dataclass(frozen=True)
class FormatAssignment:
    """Formats for each edge class of an elaborated design.

    input:        samples entering the design
    weight:       all stored parameters (weights, biases, output matrix)
    state:        the inter-layer state register bank
    accumulator:  the requantization target at each activation input; the
                  MACC-internal width is derived exactly and is not free
    output:       the primary output ports
    tensor_overrides: per-parameter-table format, keyed by table name,
                  taking precedence over the weight class
    """

    input: FixedPointFormat
    weight: FixedPointFormat
    state: FixedPointFormat
    accumulator: FixedPointFormat
    output: FixedPointFormat
    tensor_overrides: Mapping[str, FixedPointFormat] = field(default_factory=dict)

    @classmethod
    def uniform(cls, word_length: int, frac_length: int | None = None,
                **overrides: FixedPointFormat) -> "FormatAssignment":
        """One format everywhere. Default fraction length is word_length - 4,
        which leaves three integer bits plus sign: enough headroom for the
        tanh input range [-4, 4) and for sums of unit-bounded terms."""
        if frac_length is None:
            frac_length = word_length - 4
        f = FixedPointFormat(word_length, frac_length)
        return cls(input=f, weight=f, state=f, accumulator=f, output=f,
                   **overrides)

    def table_format(self, name: str) -> FixedPointFormat:
        return self.tensor_overrides.get(name, self.weight)


def accumulator_guard_bits(terms: int) -> int:
    """Guard bits for an exact sum of `terms` full-scale products plus one
    aligned bias word: ceil(log2(terms + 1)) extra bits never overflow."""
    return max(1, math.ceil(math.log2(terms + 1)))


def macc_format(data: FixedPointFormat, weight: FixedPointFormat,
                terms: int) -> FixedPointFormat:
    """Exact accumulator format for a `terms`-product MACC plus bias."""
    g = accumulator_guard_bits(terms)
    return FixedPointFormat(data.word_length + weight.word_length + g,
                            data.frac_length + weight.frac_length)
