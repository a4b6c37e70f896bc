"""NumPy implementations of the hot kernels.

These are the reference semantics; the compiled extension in ``_ext.pyx``
must produce bit-identical output for every input (see tests/test_kernels.py).
All comparisons and integer arithmetic are exact, so lane equivalence is a
matter of performing the same operations, not of float tolerance.
"""

from __future__ import annotations

import numpy as np

# tan(22.5 deg) and tan(67.5 deg): sector boundaries for direction quantization
_TAN_22_5 = 0.41421356237309503
_TAN_67_5 = 2.414213562373095

SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def splitmix64_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs ``start..start+count-1`` of the splitmix64 stream for ``seed``.

    Output i is ``finalize(seed + (i+1) * GAMMA)`` where finalize is the
    xor-shift/multiply chain of the reference implementation, all mod 2^64.
    """
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + idx * np.uint64(SPLITMIX_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z


def bsc_corrupt(payload: bytes, threshold: int, seed: int) -> bytes:
    """Flip bit i of payload iff splitmix64 output i < threshold.

    Bits are numbered row-major, MSB-first within each byte. threshold is
    the flip probability scaled to 2^64.
    """
    n_bits = len(payload) * 8
    if n_bits == 0 or threshold <= 0:
        return payload
    if threshold > _MASK64:
        flips = np.ones(n_bits, dtype=bool)
    else:
        draws = splitmix64_stream(seed, 0, n_bits)
        flips = draws < np.uint64(threshold)
    mask = np.packbits(flips, bitorder="big")
    data = np.frombuffer(payload, dtype=np.uint8)
    return (data ^ mask).tobytes()


def nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient-direction non-maximum suppression, 4 quantized directions.

    Keeps pixel (i,j) when its magnitude is >= both neighbours along the
    quantized gradient direction. Border pixels (1 px frame) are suppressed.
    Returns the suppressed magnitude array.
    """
    h, w = mag.shape
    out = np.zeros_like(mag)
    if h < 3 or w < 3:
        return out
    ax = np.abs(gx)
    ay = np.abs(gy)
    horiz = ay <= ax * _TAN_22_5
    vert = ay >= ax * _TAN_67_5
    diag_main = (~horiz) & (~vert) & ((gx >= 0) == (gy >= 0))
    diag_anti = (~horiz) & (~vert) & ~diag_main

    c = mag[1:-1, 1:-1]
    east, west = mag[1:-1, 2:], mag[1:-1, :-2]
    south, north = mag[2:, 1:-1], mag[:-2, 1:-1]
    se, nw = mag[2:, 2:], mag[:-2, :-2]
    sw, ne = mag[2:, :-2], mag[:-2, 2:]

    keep = np.zeros(c.shape, dtype=bool)
    hh = horiz[1:-1, 1:-1]
    keep |= hh & (c >= east) & (c >= west)
    vv = vert[1:-1, 1:-1]
    keep |= vv & (c >= south) & (c >= north)
    dm = diag_main[1:-1, 1:-1]
    keep |= dm & (c >= se) & (c >= nw)
    da = diag_anti[1:-1, 1:-1]
    keep |= da & (c >= sw) & (c >= ne)

    out[1:-1, 1:-1] = np.where(keep, c, 0.0)
    return out


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Keep strong pixels plus weak pixels 8-connected to them through weak
    chains. Iterative dilation to the fixed point."""
    edges = strong.copy()
    candidates = strong | weak
    while True:
        grown = edges.copy()
        grown[1:, :] |= edges[:-1, :]
        grown[:-1, :] |= edges[1:, :]
        grown[:, 1:] |= edges[:, :-1]
        grown[:, :-1] |= edges[:, 1:]
        grown[1:, 1:] |= edges[:-1, :-1]
        grown[1:, :-1] |= edges[:-1, 1:]
        grown[:-1, 1:] |= edges[1:, :-1]
        grown[:-1, :-1] |= edges[1:, 1:]
        grown &= candidates
        if np.array_equal(grown, edges):
            return edges
        edges = grown
