# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the fallback kernels.

Must stay bit-identical to fallback.py: same comparisons, same integer
arithmetic, same traversal semantics. Only speed may differ.
"""

from libc.stdint cimport uint8_t, uint64_t
from libc.stdlib cimport free, malloc

cdef double TAN_22_5 = 0.41421356237309503
cdef double TAN_67_5 = 2.414213562373095

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15u
cdef uint64_t M1 = 0xBF58476D1CE4E5B9u
cdef uint64_t M2 = 0x94D049BB133111EBu


cdef inline uint64_t splitmix64_at(uint64_t seed, uint64_t index) nogil:
    cdef uint64_t z = seed + (index + 1u) * GAMMA
    z = (z ^ (z >> 30u)) * M1
    z = (z ^ (z >> 27u)) * M2
    return z ^ (z >> 31u)


def splitmix64_value(seed, index):
    """Single stream output; exposed for the lane-equivalence tests."""
    return splitmix64_at(<uint64_t> (seed & 0xFFFFFFFFFFFFFFFF), <uint64_t> index)


def bsc_corrupt(bytes payload, object threshold, object seed):
    cdef Py_ssize_t n = len(payload)
    if n == 0 or threshold <= 0:
        return payload
    cdef bint flood = threshold > 0xFFFFFFFFFFFFFFFF
    cdef uint64_t thr = 0 if flood else <uint64_t> threshold
    cdef uint64_t s = <uint64_t> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef const uint8_t* src = payload
    cdef uint8_t* dst = <uint8_t*> malloc(n)
    if dst == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    cdef int b
    cdef uint8_t mask
    cdef uint64_t bit_index
    try:
        with nogil:
            for i in range(n):
                mask = 0
                for b in range(8):
                    bit_index = (<uint64_t> i) * 8u + <uint64_t> b
                    if flood or splitmix64_at(s, bit_index) < thr:
                        mask |= <uint8_t> (0x80 >> b)
                dst[i] = src[i] ^ mask
        return bytes(dst[:n])
    finally:
        free(dst)


def nms(double[:, :] mag, double[:, :] gx, double[:, :] gy, double[:, :] out):
    """Fill ``out`` with the suppressed magnitudes; border stays zero."""
    cdef Py_ssize_t h = mag.shape[0]
    cdef Py_ssize_t w = mag.shape[1]
    cdef Py_ssize_t i, j
    cdef double c, ax, ay, a, b
    out[:, :] = 0.0
    if h < 3 or w < 3:
        return
    with nogil:
        for i in range(1, h - 1):
            for j in range(1, w - 1):
                c = mag[i, j]
                ax = gx[i, j]
                ay = gy[i, j]
                if ax < 0:
                    ax = -ax
                if ay < 0:
                    ay = -ay
                if ay <= ax * TAN_22_5:
                    a = mag[i, j + 1]
                    b = mag[i, j - 1]
                elif ay >= ax * TAN_67_5:
                    a = mag[i + 1, j]
                    b = mag[i - 1, j]
                elif (gx[i, j] >= 0) == (gy[i, j] >= 0):
                    a = mag[i + 1, j + 1]
                    b = mag[i - 1, j - 1]
                else:
                    a = mag[i + 1, j - 1]
                    b = mag[i - 1, j + 1]
                if c >= a and c >= b:
                    out[i, j] = c


def hysteresis(uint8_t[:, :] strong, uint8_t[:, :] weak, uint8_t[:, :] out):
    """Stack-based flood fill from strong pixels through weak ones."""
    cdef Py_ssize_t h = strong.shape[0]
    cdef Py_ssize_t w = strong.shape[1]
    cdef Py_ssize_t i, j, cap, top, y, x, ny, nx
    cdef int dy, dx
    cdef Py_ssize_t* stack
    cap = h * w
    stack = <Py_ssize_t*> malloc(cap * 2 * sizeof(Py_ssize_t))
    if stack == NULL:
        raise MemoryError()
    top = 0
    try:
        with nogil:
            for i in range(h):
                for j in range(w):
                    if strong[i, j]:
                        out[i, j] = 1
                        stack[2 * top] = i
                        stack[2 * top + 1] = j
                        top += 1
                    else:
                        out[i, j] = 0
            while top > 0:
                top -= 1
                y = stack[2 * top]
                x = stack[2 * top + 1]
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        if dy == 0 and dx == 0:
                            continue
                        ny = y + dy
                        nx = x + dx
                        if ny < 0 or ny >= h or nx < 0 or nx >= w:
                            continue
                        if out[ny, nx]:
                            continue
                        if weak[ny, nx] or strong[ny, nx]:
                            out[ny, nx] = 1
                            stack[2 * top] = ny
                            stack[2 * top + 1] = nx
                            top += 1
    finally:
        free(stack)
