"""Fidelity and semantic-consistency metrics.

MS-SSIM follows the canonical construction: per-scale SSIM with an 11x11
Gaussian window (sigma 1.5), C1=(0.01*255)^2, C2=(0.03*255)^2, valid-region
statistics, 2x2 mean-pool dyadic downsampling, scale weights
[0.0448, 0.2856, 0.3001, 0.2363, 0.1333], contrast-structure terms multiplied
across scales with the luminance term applied at the coarsest scale only.
Images smaller than 176x176 use as many scales as fit an 11px window, with
the weights renormalized. Negative contrast-structure means are clamped to 0
so the score stays in [0, 1] for non-negative images.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, LengthMismatch
from .image import RasterImage

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN_SIZE = 11
_WIN_SIGMA = 1.5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


@dataclass
class MetricsReport:
    ms_ssim: float
    clip_similarity: float
    measured_ber: float
    compression_ratio: float
    lpips: Optional[float] = None
    pieapp: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "ms_ssim": self.ms_ssim,
            "clip_similarity": self.clip_similarity,
            "measured_ber": self.measured_ber,
            "compression_ratio": self.compression_ratio,
            "lpips": self.lpips,
            "pieapp": self.pieapp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def _gaussian_window() -> np.ndarray:
    x = np.arange(_WIN_SIZE, dtype=np.float64) - (_WIN_SIZE - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * _WIN_SIGMA * _WIN_SIGMA))
    return g / g.sum()


_WINDOW_1D = _gaussian_window()


def _filter_valid(img: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with the Gaussian window."""
    h, w = img.shape
    out_w = w - _WIN_SIZE + 1
    tmp = np.zeros((h, out_w), dtype=np.float64)
    for tap in range(_WIN_SIZE):
        tmp += _WINDOW_1D[tap] * img[:, tap : tap + out_w]
    out_h = h - _WIN_SIZE + 1
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for tap in range(_WIN_SIZE):
        out += _WINDOW_1D[tap] * tmp[tap : tap + out_h, :]
    return out


def _ssim_and_cs(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    mu1 = _filter_valid(a)
    mu2 = _filter_valid(b)
    s11 = _filter_valid(a * a) - mu1 * mu1
    s22 = _filter_valid(b * b) - mu2 * mu2
    s12 = _filter_valid(a * b) - mu1 * mu2
    cs_map = (2.0 * s12 + _C2) / (s11 + s22 + _C2)
    lum_map = (2.0 * mu1 * mu2 + _C1) / (mu1 * mu1 + mu2 * mu2 + _C1)
    return float(np.mean(lum_map * cs_map)), float(np.mean(cs_map))


def _downsample2(img: np.ndarray) -> np.ndarray:
    pooled = (img[:-1, :-1] + img[1:, :-1] + img[:-1, 1:] + img[1:, 1:]) / 4.0
    return pooled[::2, ::2]


def _as_gray_f64(img: RasterImage) -> np.ndarray:
    from .edgemap import to_grayscale

    return to_grayscale(img).data.astype(np.float64)


def usable_scales(height: int, width: int, max_scales: int = len(MSSSIM_WEIGHTS)) -> int:
    scales = 0
    dim = min(height, width)
    while scales < max_scales and dim >= _WIN_SIZE:
        scales += 1
        dim //= 2
    return scales


def ms_ssim(a: RasterImage, b: RasterImage) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )
    x = _as_gray_f64(a)
    y = _as_gray_f64(b)
    scales = usable_scales(a.height, a.width)
    if scales == 0:
        raise DimensionMismatch("image smaller than the 11x11 SSIM window")
    weights = np.asarray(MSSSIM_WEIGHTS[:scales], dtype=np.float64)
    weights = weights / weights.sum()

    score = 1.0
    for level in range(scales):
        ssim_mean, cs_mean = _ssim_and_cs(x, y)
        if level == scales - 1:
            score *= max(ssim_mean, 0.0) ** weights[level]
        else:
            score *= max(cs_mean, 0.0) ** weights[level]
            x = _downsample2(x)
            y = _downsample2(y)
    return score


def clip_similarity(a, b) -> float:
    """Cosine similarity between two embeddings (Embedding or array-like)."""
    va = np.asarray(getattr(a, "values", a), dtype=np.float64)
    vb = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"{va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


def measured_ber(sent: bytes, received: bytes) -> float:
    """Hamming distance over total bit count."""
    if len(sent) != len(received):
        raise LengthMismatch(f"{len(sent)} vs {len(received)} bytes")
    if not sent:
        return 0.0
    xored = np.frombuffer(sent, dtype=np.uint8) ^ np.frombuffer(received, dtype=np.uint8)
    return float(np.unpackbits(xored).sum()) / (8 * len(sent))


def compression_ratio(source_bytes: int, transmitted_bytes: int) -> float:
    if transmitted_bytes <= 0:
        raise ValueError("transmitted size must be positive")
    return source_bytes / transmitted_bytes
