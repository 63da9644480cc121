"""Core FFP8 format model: layout validation, decode, encode, conversion.

A format is the tuple (x, y, z, b, n): x sign bits (0 or 1), y exponent
bits, z fraction bits, bias b, total width n = x + y + z. Codes pack as
[sign | exponent | fraction] from the most significant bit down.

Value semantics, with stored fields (s, e, f):

* e == 0 (denormal region):  (-1)^s * (f / 2^z) * 2^(1 - b)
* e >= 1 (normal region):    (-1)^s * (1 + f / 2^z) * 2^(e - b)

There are no infinity or NaN codes; the all-ones exponent encodes ordinary
values, which buys one extra binade of range. Signed formats therefore
carry 2^n - 1 distinct values (the two zero codes collapse), unsigned
formats 2^n.

Every representable value fits exactly in a python float (z <= 14 fraction
bits, |exponent| < 210), so all arithmetic below is exact.
"""

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    BadBias,
    BadExponent,
    BadSign,
    BadWidth,
    Fp32Overflow,
    NaNInput,
    NegativeToUnsigned,
    WidthMismatch,
)

MIN_WIDTH = 4
MAX_WIDTH = 16
MIN_BIAS = -128
MAX_BIAS = 127


@dataclass(frozen=True)
class FormatSpec:
    """Validated format descriptor. Use make_format for the n-inferring form."""

    x: int
    y: int
    z: int
    b: int
    n: int

    def __post_init__(self):
        if self.x not in (0, 1):
            raise BadSign(f"sign width must be 0 or 1, got {self.x}")
        if self.y < 1:
            raise BadExponent(f"exponent width must be >= 1, got {self.y}")
        if self.z < 0:
            raise BadWidth(f"fraction width must be >= 0, got {self.z}")
        if self.x + self.y + self.z != self.n:
            raise WidthMismatch(
                f"x + y + z = {self.x + self.y + self.z} but n = {self.n}")
        if not MIN_WIDTH <= self.n <= MAX_WIDTH:
            raise BadWidth(f"total width must be in [{MIN_WIDTH}, {MAX_WIDTH}], got {self.n}")
        if not MIN_BIAS <= self.b <= MAX_BIAS:
            raise BadBias(f"bias must be in [{MIN_BIAS}, {MAX_BIAS}], got {self.b}")

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.z, self.b)

    def __str__(self):
        return f"({self.x},{self.y},{self.z},{self.b})"


def make_format(x: int, y: int, z: int, b: int, n: int | None = None) -> FormatSpec:
    """Build a validated FormatSpec; n defaults to x + y + z."""
    if n is None:
        n = x + y + z
    return FormatSpec(x, y, z, b, n)


def default_bias(y: int) -> int:
    """Conventional bias for a y-bit exponent: 2^(y-1) - 1."""
    if y < 1:
        raise BadExponent(f"exponent width must be >= 1, got {y}")
    return (1 << (y - 1)) - 1


@dataclass(frozen=True)
class RangeWindow:
    """Positive representable extremes of a format."""

    min_subnormal: float
    min_normal: float
    max: float


def range_window(fmt: FormatSpec) -> RangeWindow:
    """Analytic window: smallest positive denormal, smallest normal, largest value.

    For z = 0 the denormal region holds only zero, so min_subnormal is
    reported as the smallest normal.
    """
    min_normal = math.ldexp(1.0, 1 - fmt.b)
    if fmt.z == 0:
        min_sub = min_normal
    else:
        min_sub = math.ldexp(1.0, 1 - fmt.b - fmt.z)
    top = (2.0 - math.ldexp(1.0, -fmt.z)) * math.ldexp(1.0, (1 << fmt.y) - 1 - fmt.b)
    return RangeWindow(min_sub, min_normal, top)


class ValueTable:
    """Precomputed decode table and the sorted distinct values of a format."""

    def __init__(self, fmt: FormatSpec):
        codes = np.arange(1 << fmt.n, dtype=np.int64)
        f = codes & ((1 << fmt.z) - 1)
        e = (codes >> fmt.z) & ((1 << fmt.y) - 1)
        mant = np.where(e == 0, f, (1 << fmt.z) + f).astype(np.float64)
        exp2 = np.where(e == 0, 1 - fmt.b - fmt.z, e - fmt.b - fmt.z).astype(np.int64)
        v = np.ldexp(mant, exp2)
        if fmt.x:
            s = (codes >> (fmt.y + fmt.z)) & 1
            v = np.where(s == 1, -v, v)
        v[v == 0.0] = 0.0  # collapse -0.0 to canonical +0.0
        self.fmt = fmt
        self.decode = v
        self.sorted_values, first = np.unique(v, return_index=True)
        self.sorted_codes = codes[first].astype(np.uint16)


@lru_cache(maxsize=256)
def value_table(fmt: FormatSpec) -> ValueTable:
    return ValueTable(fmt)


def enumerate_values(fmt: FormatSpec) -> np.ndarray:
    """All distinct representable values, strictly ascending."""
    return value_table(fmt).sorted_values.copy()


def decode(fmt: FormatSpec, code: int) -> float:
    """Exact real value of one code. Zero codes decode to +0.0."""
    if not 0 <= code < (1 << fmt.n):
        raise ValueError(f"code {code} out of range for {fmt.n}-bit format")
    f = code & ((1 << fmt.z) - 1)
    e = (code >> fmt.z) & ((1 << fmt.y) - 1)
    s = (code >> (fmt.y + fmt.z)) & 1 if fmt.x else 0
    if e == 0:
        v = math.ldexp(f, 1 - fmt.b - fmt.z)
    else:
        v = math.ldexp((1 << fmt.z) + f, e - fmt.b - fmt.z)
    if v == 0.0:
        return 0.0
    return -v if s else v


def encode_array(fmt: FormatSpec, values) -> np.ndarray:
    """Round-to-nearest-even encode of an array; saturating, NaN rejected.

    Magnitudes above the window max saturate to the max code, magnitudes
    at or below half the smallest positive value round to the zero code,
    and -0.0 encodes to the +0 code. For unsigned formats any strictly
    negative input is an error. Returns uint8 codes for n <= 8, else uint16.
    """
    arr = np.asarray(values, dtype=np.float64)
    flat = np.ascontiguousarray(arr.ravel())
    if np.isnan(flat).any():
        raise NaNInput("cannot encode NaN; the format has no NaN code")
    if fmt.x == 0 and flat.size and (flat < 0).any():
        raise NegativeToUnsigned(
            f"negative value presented to unsigned format {fmt}")
    codes = _kernels.encode_codes(flat, fmt.x, fmt.y, fmt.z, fmt.b)
    if fmt.n <= 8:
        codes = codes.astype(np.uint8)
    return codes.reshape(arr.shape)


def encode_rne(fmt: FormatSpec, v: float) -> int:
    """Scalar round-to-nearest-even encode; see encode_array."""
    return int(encode_array(fmt, np.array([v], dtype=np.float64))[0])


def decode_array(fmt: FormatSpec, codes) -> np.ndarray:
    """Decode an array of codes to exact float64 values."""
    arr = np.asarray(codes)
    if arr.size and int(arr.max()) >= (1 << fmt.n):
        raise ValueError(f"code {int(arr.max())} out of range for {fmt.n}-bit format")
    return value_table(fmt).decode[arr.astype(np.int64)]


def to_fp32_bits(fmt: FormatSpec, code: int) -> int:
    """IEEE-754 binary32 bit pattern equal in value to decode(fmt, code).

    Software model of a hardware FFP8-to-FP32 converter: field extraction
    driven by (x, y), then an exponent correction by b - 127. Denormal
    codes are normalized on the way out; values below the binary32 normal
    range come back as exact binary32 subnormal patterns. Values beyond
    the binary32 finite range (possible only for strongly negative biases,
    b < 2^y - 128) raise Fp32Overflow since no exact pattern exists.
    """
    if not 0 <= code < (1 << fmt.n):
        raise ValueError(f"code {code} out of range for {fmt.n}-bit format")
    f = code & ((1 << fmt.z) - 1)
    e = (code >> fmt.z) & ((1 << fmt.y) - 1)
    s = (code >> (fmt.y + fmt.z)) & 1 if fmt.x else 0

    if e == 0 and f == 0:
        return 0  # canonical +0 for both zero codes

    if e == 0:
        t = f.bit_length() - 1                 # normalize the fraction
        exp2 = (1 - fmt.b - fmt.z) + t
        frac = (f - (1 << t)) << (23 - t)
    else:
        exp2 = e - fmt.b
        frac = f << (23 - fmt.z)

    e32 = exp2 + 127
    if e32 >= 255:
        raise Fp32Overflow(
            f"{fmt} code {code} decodes to {decode(fmt, code)!r}, "
            "beyond the binary32 finite range")
    if e32 >= 1:
        return (s << 31) | (e32 << 23) | frac
    # binary32 subnormal: value = k * 2^-149 with k < 2^23
    d = 1 - e32
    full = (1 << 23) | frac
    assert d <= 23 and (full & ((1 << d) - 1)) == 0  # exact by format invariants
    return (s << 31) | (full >> d)


def to_fp32_bits_array(fmt: FormatSpec, codes) -> np.ndarray:
    """Vectorized to_fp32_bits via a per-format lookup table (uint32)."""
    lut = _fp32_bits_table(fmt)
    arr = np.asarray(codes)
    if arr.size and int(arr.max()) >= (1 << fmt.n):
        raise ValueError(f"code {int(arr.max())} out of range for {fmt.n}-bit format")
    return lut[arr.astype(np.int64)]


@lru_cache(maxsize=256)
def _fp32_bits_table(fmt: FormatSpec) -> np.ndarray:
    return np.array([to_fp32_bits(fmt, c) for c in range(1 << fmt.n)],
                    dtype=np.uint32)


def fp32_bits_to_float(bits: int) -> float:
    """Reinterpret a 32-bit pattern as the binary32 value it encodes."""
    return struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0]
