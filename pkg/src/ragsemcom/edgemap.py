"""Edge-map extraction: the structural visual prompt of a transmission.

Classic four-stage Canny over an 8-bit grayscale image:

1. Gaussian blur, kernel radius ceil(3*sigma), kernel normalized to sum 1,
   borders handled by edge replication.
2. Sobel 3x3 gradients (replicated borders).
3. Non-maximum suppression along one of four quantized gradient directions.
4. Double threshold with 8-connected hysteresis: strong >= high, weak in
   [low, high) kept only when connected to a strong pixel through weak ones.

Everything is deterministic: identical inputs give bit-identical edge maps,
and a constant intensity offset never changes the output (the pipeline
subtracts the image minimum before blurring, which makes the mathematical
shift-invariance of gradients exact in floating point as well).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidThresholds
from .image import EdgeMap, RasterImage

DEFAULT_LOW = 100.0
DEFAULT_HIGH = 200.0
DEFAULT_SIGMA = 1.4


def to_grayscale(img: RasterImage) -> RasterImage:
    """ITU-R 601 luma: round(0.299 R + 0.587 G + 0.114 B), half up."""
    if img.channels == 1:
        return img
    rgb = img.data.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return RasterImage(np.floor(luma + 0.5).astype(np.uint8))


def gaussian_blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with replicated borders; float64 in and out."""
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    blurred = _correlate1d_replicate(gray, kernel, axis=1)
    return _correlate1d_replicate(blurred, kernel, axis=0)


def _correlate1d_replicate(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    padded = np.pad(
        arr, [(radius, radius) if ax == axis else (0, 0) for ax in range(arr.ndim)], mode="edge"
    )
    out = np.zeros_like(arr, dtype=np.float64)
    n = arr.shape[axis]
    for tap in range(len(kernel)):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(tap, tap + n)
        out += kernel[tap] * padded[tuple(sl)]
    return out


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def sobel_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(gray, 1, mode="edge")
    h, w = gray.shape
    gx = np.zeros((h, w), dtype=np.float64)
    gy = np.zeros((h, w), dtype=np.float64)
    for ky in range(3):
        for kx in range(3):
            window = padded[ky : ky + h, kx : kx + w]
            if _SOBEL_X[ky, kx] != 0.0:
                gx += _SOBEL_X[ky, kx] * window
            if _SOBEL_Y[ky, kx] != 0.0:
                gy += _SOBEL_Y[ky, kx] * window
    return gx, gy


def canny(
    gray: RasterImage,
    low: float = DEFAULT_LOW,
    high: float = DEFAULT_HIGH,
    sigma: float = DEFAULT_SIGMA,
) -> EdgeMap:
    """Extract the binary edge map of a grayscale image."""
    if low >= high:
        raise InvalidThresholds(f"low ({low}) must be < high ({high})")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if gray.channels != 1:
        gray = to_grayscale(gray)

    # gradients are offset-free; removing the minimum first makes that exact
    # in float too, so a constant intensity shift cannot flip any comparison
    field = gray.data.astype(np.float64)
    field -= field.min()
    blurred = gaussian_blur(field, sigma)
    gx, gy = sobel_gradients(blurred)
    mag = np.hypot(gx, gy)
    suppressed = _kernels.nms(mag, gx, gy)

    strong = suppressed >= high
    weak = (suppressed >= low) & ~strong
    edges = _kernels.hysteresis(strong, weak)
    return EdgeMap(edges)


def edge_density(edge_map: EdgeMap) -> float:
    """Fraction of set bits, in [0, 1]."""
    return edge_map.set_count / (edge_map.width * edge_map.height)
