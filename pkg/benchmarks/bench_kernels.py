"""Benchmark the two encode kernel backends against each other.

The encoder has a numba @njit path (default) and a pure-numpy fallback,
selected per call through the FFP8_NO_NUMBA environment flag. This script
times both on identical inputs, checks they agree bit-for-bit, and prints
throughput plus the speedup of the jitted path.

Usage:
    python3 benchmarks/bench_kernels.py [--sizes 10000,100000,1000000] [--repeats 5]
"""

import argparse
import os
import time

import numpy as np

from ffp8._kernels import NUMBA_AVAILABLE, encode_codes, warmup_kernels
from ffp8.formats import make_format, range_window

FORMATS = [make_format(1, 4, 3, 7), make_format(0, 2, 6, 3),
           make_format(1, 6, 9, 40)]


def run_backend(use_numba: bool, values: np.ndarray, fmt, repeats: int):
    os.environ["FFP8_NO_NUMBA"] = "" if use_numba else "1"
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = encode_codes(values, fmt.x, fmt.y, fmt.z, fmt.b)
        best = min(best, time.perf_counter() - t0)
    return out, best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="10000,100000,1000000",
                    help="comma-separated element counts")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats per cell (best is kept)")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if not NUMBA_AVAILABLE:
        print("numba is not importable; only the numpy path will run")
    else:
        warmup_kernels()

    rng = np.random.default_rng(0)
    header = f"{'format':>12} {'n':>9} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for fmt in FORMATS:
        w = range_window(fmt)
        for n in sizes:
            values = rng.normal(0.0, w.max / 3, n)
            if fmt.x == 0:
                values = np.abs(values)
            np_out, np_t = run_backend(False, values, fmt, args.repeats)
            if NUMBA_AVAILABLE:
                nb_out, nb_t = run_backend(True, values, fmt, args.repeats)
                assert np.array_equal(np_out, nb_out), "backends disagree"
                speedup = f"{np_t / nb_t:7.1f}x"
                nb_ms = f"{nb_t * 1e3:10.3f}"
            else:
                speedup, nb_ms = "      --", "        --"
            print(f"{str(fmt):>12} {n:>9} {np_t * 1e3:10.3f} {nb_ms} {speedup}")
    os.environ.pop("FFP8_NO_NUMBA", None)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
