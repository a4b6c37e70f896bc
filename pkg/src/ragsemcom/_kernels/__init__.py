"""Hot-kernel dispatch: compiled extension when built, NumPy otherwise.

Set RAGSEMCOM_PURE=1 to force the NumPy lane (used by the benchmark and the
lane-equivalence tests). Both lanes are bit-identical by contract.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

from . import fallback

_ext = None
if not os.environ.get("RAGSEMCOM_PURE"):
    try:
        _ext = importlib.import_module(__name__ + "._ext")
    except ImportError:
        _ext = None

LANE = "compiled" if _ext is not None else "python"

splitmix64_stream = fallback.splitmix64_stream
SPLITMIX_GAMMA = fallback.SPLITMIX_GAMMA


def lane() -> str:
    return LANE


def bsc_corrupt(payload: bytes, threshold: int, seed: int) -> bytes:
    if _ext is not None:
        return _ext.bsc_corrupt(payload, threshold, seed)
    return fallback.bsc_corrupt(payload, threshold, seed)


def nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    if _ext is not None:
        out = np.zeros_like(mag)
        _ext.nms(mag, gx, gy, out)
        return out
    return fallback.nms(mag, gx, gy)


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    if _ext is not None:
        out = np.zeros(strong.shape, dtype=np.uint8)
        _ext.hysteresis(
            strong.astype(np.uint8, copy=False), weak.astype(np.uint8, copy=False), out
        )
        return out.astype(bool)
    return fallback.hysteresis(strong, weak)
