"""Hot encode kernels: numba-compiled fast path with a pure-numpy fallback.

Encoding a large FP32/FP64 tensor into FFP8 codes is the one loop in this
package whose runtime matters, so it is implemented twice:

* a numba ``@njit`` elementwise kernel (default when numba imports), and
* a vectorized pure-numpy path.

Set ``FFP8_NO_NUMBA=1`` in the environment to force the numpy path. When
numba is not installed the numpy path is used automatically. Both paths
compute bit-identical codes; the test suite asserts exact agreement.

The algorithm works on the IEEE-754 binary64 bit pattern of each input:
extract sign / exponent / 53-bit significand, rebase the exponent by the
format bias, shift the significand down to the z-bit fraction with a
round-to-nearest-even (guard + sticky via remainder compare), then resolve
fraction carry, denormal promotion and saturation. NaN and negative-to-
unsigned checks happen in the caller; infinities saturate like any other
out-of-window magnitude.
"""

import os

import numpy as np

try:
    from numba import njit, prange
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn
        return wrap


_ENV_FLAG = "FFP8_NO_NUMBA"


def numba_enabled() -> bool:
    """True when the numba path is active for this process."""
    if not NUMBA_AVAILABLE:
        return False
    return os.environ.get(_ENV_FLAG, "").lower() not in ("1", "true", "yes")


def kernel_backend() -> str:
    return "numba" if numba_enabled() else "numpy"


# ---------------------------------------------------------------------------
# Pure-numpy path
# ---------------------------------------------------------------------------

def _encode_bits_numpy(bits: np.ndarray, x: int, y: int, z: int, b: int) -> np.ndarray:
    sign = (bits >> np.uint64(63)).astype(np.int64)
    E = ((bits >> np.uint64(52)) & np.uint64(0x7FF)).astype(np.int64)
    M = (bits & np.uint64((1 << 52) - 1)).astype(np.int64)

    is_sub = E == 0
    a = np.where(is_sub, np.int64(-1022), E - 1023)
    m = np.where(is_sub, M, M | np.int64(1 << 52))

    emax = (1 << y) - 1
    e_f = a + b
    sh = (52 - z) + np.maximum(np.int64(0), 1 - e_f)
    sh = np.minimum(sh, np.int64(62))  # beyond 62 everything rounds to zero anyway

    trunc = m >> sh
    rem = m & ((np.int64(1) << sh) - 1)
    half = np.int64(1) << (sh - 1)
    round_up = (rem > half) | ((rem == half) & ((trunc & 1) == 1))
    q = trunc + round_up

    denorm = e_f < 1
    carry = (~denorm) & (q == (np.int64(1) << (z + 1)))
    q = np.where(carry, q >> 1, q)
    e_out = np.where(denorm, np.int64(0), e_f) + carry
    promote = denorm & (q == (np.int64(1) << z))
    e_out = np.where(promote, np.int64(1), e_out)
    f_out = np.where(denorm, np.where(promote, np.int64(0), q), q - (1 << z))

    sat = e_out > emax
    e_out = np.where(sat, np.int64(emax), e_out)
    f_out = np.where(sat, np.int64((1 << z) - 1), f_out)

    code = (e_out << z) | f_out
    if x:
        nonzero = code != 0
        code = code | np.where(nonzero, sign << (y + z), np.int64(0))
    code = np.where(m == 0, np.int64(0), code)
    return code.astype(np.uint16)


# ---------------------------------------------------------------------------
# Numba path (same algorithm, elementwise)
# ---------------------------------------------------------------------------

@njit(parallel=True, cache=True)
def _encode_bits_numba(bits, x, y, z, b, out):  # pragma: no cover - jitted
    emax = (1 << y) - 1
    for i in prange(bits.size):
        u = bits[i]
        sign = np.int64(u >> np.uint64(63))
        E = np.int64((u >> np.uint64(52)) & np.uint64(0x7FF))
        M = np.int64(u & np.uint64((1 << 52) - 1))

        if E == 0:
            a = np.int64(-1022)
            m = M
        else:
            a = E - 1023
            m = M | (1 << 52)

        if m == 0:
            out[i] = 0
            continue

        e_f = a + b
        sh = 52 - z
        if e_f < 1:
            sh += 1 - e_f
        if sh > 62:
            sh = 62

        trunc = m >> sh
        rem = m & ((np.int64(1) << sh) - 1)
        half = np.int64(1) << (sh - 1)
        q = trunc
        if rem > half or (rem == half and (trunc & 1) == 1):
            q += 1

        if e_f < 1:
            if q == (1 << z):
                e_out = 1
                f_out = 0
            else:
                e_out = 0
                f_out = q
        else:
            e_out = e_f
            if q == (1 << (z + 1)):
                q >>= 1
                e_out += 1
            f_out = q - (1 << z)

        if e_out > emax:
            e_out = emax
            f_out = (1 << z) - 1

        code = (e_out << z) | f_out
        if x and code != 0:
            code |= sign << (y + z)
        out[i] = np.uint16(code)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def encode_codes(values: np.ndarray, x: int, y: int, z: int, b: int) -> np.ndarray:
    """Encode a 1-D float64 array to FFP8 codes (uint16), RNE with saturation."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    bits = values.view(np.uint64)
    if numba_enabled():
        out = np.empty(values.size, dtype=np.uint16)
        _encode_bits_numba(bits, x, y, z, b, out)
        return out
    return _encode_bits_numpy(bits, x, y, z, b)


def warmup_kernels() -> None:
    """Trigger JIT compilation once so later calls run at full speed."""
    if numba_enabled():
        probe = np.array([0.0, 1.0, -1.5], dtype=np.float64)
        _encode_bits_numba(probe.view(np.uint64), 1, 4, 3, 7,
                           np.empty(3, dtype=np.uint16))
