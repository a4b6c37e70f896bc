"""PNG and array helpers for the server."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def decode_png_b64(payload: str) -> np.ndarray:
    """Base64 PNG to an (h, w) or (h, w, 3) uint8 array."""
    raw = base64.b64decode(payload, validate=True)
    with Image.open(io.BytesIO(raw)) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def encode_png_b64(arr: np.ndarray) -> str:
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def to_gray(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return arr
    luma = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    return np.floor(luma + 0.5).astype(np.uint8)


def resize_nearest(arr: np.ndarray, width: int, height: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if (w, h) == (width, height):
        return arr
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.int64), w - 1)
    return arr[np.ix_(rows, cols)]
