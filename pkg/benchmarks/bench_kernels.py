#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the three hot kernels (Canny NMS, hysteresis flood fill, BSC bit
corruption) plus one full canny() call per lane, on sizes matching a real
512x512 transmission.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ragsemcom._kernels import fallback

try:
    from ragsemcom._kernels import _ext
except ImportError:
    _ext = None


def timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench(repeats: int) -> None:
    rng = np.random.default_rng(0)
    size = 512
    mag = rng.random((size, size)) * 400
    gx = rng.standard_normal((size, size)) * 100
    gy = rng.standard_normal((size, size)) * 100
    strong = mag > 380
    weak = (mag > 300) & ~strong
    payload = rng.integers(0, 256, size * size // 8, dtype=np.uint8).tobytes()
    threshold = int(round(0.01 * 2.0**64))

    cases = {
        "nms 512x512": (
            lambda: fallback.nms(mag, gx, gy),
            (lambda: _ext_nms(mag, gx, gy)) if _ext else None,
        ),
        "hysteresis 512x512": (
            lambda: fallback.hysteresis(strong, weak),
            (lambda: _ext_hyst(strong, weak)) if _ext else None,
        ),
        "bsc 32KiB payload": (
            lambda: fallback.bsc_corrupt(payload, threshold, 7),
            (lambda: _ext.bsc_corrupt(payload, threshold, 7)) if _ext else None,
        ),
    }

    print(f"{'kernel':<22} {'numpy':>12} {'compiled':>12} {'speedup':>9}")
    for name, (py_fn, c_fn) in cases.items():
        py_t = timeit(py_fn, repeats)
        if c_fn is None:
            print(f"{name:<22} {py_t * 1e3:>10.2f}ms {'n/a':>12} {'n/a':>9}")
            continue
        c_t = timeit(c_fn, repeats)
        print(f"{name:<22} {py_t * 1e3:>10.2f}ms {c_t * 1e3:>10.2f}ms {py_t / c_t:>8.1f}x")

    # one realistic full extraction per lane for context
    from ragsemcom.edgemap import canny
    from ragsemcom.image import RasterImage
    import ragsemcom._kernels as lanes

    img = RasterImage((rng.random((size, size)) * 255).astype(np.uint8))
    full_t = timeit(lambda: canny(img), max(1, repeats // 2))
    print(f"\nfull canny() 512x512 on active lane ({lanes.lane()}): {full_t * 1e3:.1f}ms")


def _ext_nms(mag, gx, gy):
    out = np.zeros_like(mag)
    _ext.nms(mag, gx, gy, out)
    return out


def _ext_hyst(strong, weak):
    out = np.zeros(strong.shape, dtype=np.uint8)
    _ext.hysteresis(strong.astype(np.uint8), weak.astype(np.uint8), out)
    return out


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if _ext is None:
        print("compiled extension not built; timing the NumPy lane only\n")
    bench(args.repeats)
