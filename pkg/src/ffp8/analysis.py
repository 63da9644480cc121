"""Tensor statistics, range-window coverage, and quantization error metrics.

The log2 histogram bins nonzero elements by binade: bin k counts elements
with 2^k <= |v| < 2^(k+1). Bins come from exponent extraction (frexp), not
logarithm calls, so boundary elements classify exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput
from .formats import FormatSpec, decode_array, encode_array, range_window


@dataclass
class TensorStats:
    """Summary statistics of one tensor.

    min_nonzero_mag is 0.0 when the tensor has no nonzero element.
    negative_count counts strictly negative values, so -0.0 is a zero.
    """

    max_mag: float
    min_nonzero_mag: float
    zero_count: int
    negative_count: int
    total_count: int
    log2_hist: dict = field(default_factory=dict)


def tensor_stats(values) -> TensorStats:
    """Compute TensorStats over all elements of an array."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size and not np.isfinite(flat).all():
        raise NonFiniteInput("statistics require finite values")
    nonzero = flat[flat != 0.0]
    zero_count = int(flat.size - nonzero.size)
    negative_count = int((flat < 0).sum())
    if nonzero.size == 0:
        return TensorStats(0.0, 0.0, zero_count, negative_count, int(flat.size), {})
    mags = np.abs(nonzero)
    _, exps = np.frexp(mags)            # mag = m * 2^e with m in [0.5, 1)
    bins, counts = np.unique(exps - 1, return_counts=True)
    hist = {int(k): int(c) for k, c in zip(bins, counts)}
    return TensorStats(
        max_mag=float(mags.max()),
        min_nonzero_mag=float(mags.min()),
        zero_count=zero_count,
        negative_count=negative_count,
        total_count=int(flat.size),
        log2_hist=hist,
    )


def merge_stats(a: TensorStats, b: TensorStats) -> TensorStats:
    """Combine statistics of two tensors; associative and commutative."""
    hist = dict(a.log2_hist)
    for k, c in b.log2_hist.items():
        hist[k] = hist.get(k, 0) + c
    nonzero_mins = [s.min_nonzero_mag for s in (a, b) if s.min_nonzero_mag > 0.0]
    return TensorStats(
        max_mag=max(a.max_mag, b.max_mag),
        min_nonzero_mag=min(nonzero_mins) if nonzero_mins else 0.0,
        zero_count=a.zero_count + b.zero_count,
        negative_count=a.negative_count + b.negative_count,
        total_count=a.total_count + b.total_count,
        log2_hist=hist,
    )


@dataclass
class Coverage:
    """How the nonzero elements of a tensor fall against a format's window.

    Counts partition the nonzero elements; zeros are excluded and reported
    separately via zero_count. Fractions are the exact count ratios.
    """

    below_count: int
    denorm_count: int
    norm_count: int
    above_count: int
    nonzero_count: int
    zero_count: int

    def _frac(self, c: int) -> float:
        return c / self.nonzero_count if self.nonzero_count else 0.0

    @property
    def below_window_frac(self) -> float:
        return self._frac(self.below_count)

    @property
    def in_denorm_frac(self) -> float:
        return self._frac(self.denorm_count)

    @property
    def in_norm_frac(self) -> float:
        return self._frac(self.norm_count)

    @property
    def above_window_frac(self) -> float:
        return self._frac(self.above_count)


def coverage(stats: TensorStats, fmt: FormatSpec, values=None) -> Coverage:
    """Classify nonzero magnitudes against the format's range window.

    With raw values supplied, elements compare exactly against the window
    bounds. From the histogram alone, a whole binade counts as below_window
    only when its entire range sits below min_subnormal, and as above_window
    only when it sits entirely above the window max; since the lower window
    bounds are powers of two this is exact everywhere except the top binade,
    which conservatively counts as in_norm.
    """
    w = range_window(fmt)
    if values is not None:
        flat = np.asarray(values, dtype=np.float64).ravel()
        mags = np.abs(flat[flat != 0.0])
        zero_count = int(flat.size - mags.size)
        below = int((mags < w.min_subnormal).sum())
        denorm = int(((mags >= w.min_subnormal) & (mags < w.min_normal)).sum())
        above = int((mags > w.max).sum())
        norm = int(mags.size - below - denorm - above)
        return Coverage(below, denorm, norm, above, int(mags.size), zero_count)

    ws = 1 - fmt.b - fmt.z if fmt.z else 1 - fmt.b   # log2(min_subnormal)
    wn = 1 - fmt.b                                   # log2(min_normal)
    ktop = (1 << fmt.y) - 1 - fmt.b                  # binade holding the window max
    below = denorm = norm = above = 0
    for k, c in stats.log2_hist.items():
        if k < ws:
            below += c
        elif k < wn:
            denorm += c
        elif k <= ktop:
            norm += c
        else:
            above += c
    nonzero = stats.total_count - stats.zero_count
    return Coverage(below, denorm, norm, above, nonzero, stats.zero_count)


@dataclass
class QuantReport:
    """Quantization error metrics for one tensor under one format.

    sqnr_db is 10*log10(sum v^2 / sum (v - q)^2); math.inf marks an exact
    quantization (zero noise). The three window counts sum to total_count.
    """

    fmt: FormatSpec
    total_count: int
    below_window_count: int
    above_window_count: int
    in_window_count: int
    mse: float
    max_abs_err: float
    sqnr_db: float


def error_metrics(values, fmt: FormatSpec) -> QuantReport:
    """Quantize values under fmt (round trip) and measure the damage."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    q = decode_array(fmt, encode_array(fmt, flat))
    return error_metrics_from(flat, q, fmt)


def error_metrics_from(values: np.ndarray, quantized: np.ndarray,
                       fmt: FormatSpec) -> QuantReport:
    """Build a QuantReport from values already paired with their round trip."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    q = np.asarray(quantized, dtype=np.float64).ravel()
    w = range_window(fmt)
    mags = np.abs(flat)
    below = int(((mags > 0) & (mags < w.min_subnormal)).sum())
    above = int((mags > w.max).sum())
    err = flat - q
    noise = float(np.dot(err, err))
    signal = float(np.dot(flat, flat))
    mse = noise / flat.size if flat.size else 0.0
    sqnr = math.inf if noise == 0.0 else 10.0 * math.log10(signal / noise)
    return QuantReport(
        fmt=fmt,
        total_count=int(flat.size),
        below_window_count=below,
        above_window_count=above,
        in_window_count=int(flat.size - below - above),
        mse=mse,
        max_abs_err=float(np.abs(err).max()) if flat.size else 0.0,
        sqnr_db=sqnr,
    )
