"""Shared fixtures: deterministic synthetic images and a topical KB."""

from __future__ import annotations

import numpy as np
import pytest

from ragsemcom.image import RasterImage, save_image
from ragsemcom.knowledge import KnowledgeBase, KnowledgeEntry, Modality
from ragsemcom.provider import MockProvider


def synthetic_photo(seed: int, size: int = 192, rgb: bool = True) -> RasterImage:
    """Photo-like test image: smooth gradient, a few shapes, mild noise.

    Intensities stay in [16, 255] (no near-black mass) and every image gets a
    small pure-white patch, which keeps the histogram-embedding experiments
    well conditioned.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = 40 + 120 * (xx / size) + 60 * (yy / size)

    for _ in range(3):
        cy, cx = rng.integers(size // 8, 7 * size // 8, 2)
        r = int(rng.integers(size // 10, size // 4))
        level = float(rng.integers(60, 220))
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        base[mask] = level

    # pure-white patch so bin 63 of the histogram is populated
    wy, wx = rng.integers(0, size - size // 8, 2)
    base[wy : wy + size // 10, wx : wx + size // 10] = 255.0

    base += rng.normal(0.0, 2.0, base.shape)
    gray = np.clip(base, 16, 255).astype(np.uint8)
    if not rgb:
        return RasterImage(gray)
    # mild per-channel tint keeps it photo-like without changing structure
    r = np.clip(gray.astype(np.int16) + 6, 16, 255).astype(np.uint8)
    b = np.clip(gray.astype(np.int16) - 6, 16, 255).astype(np.uint8)
    return RasterImage(np.stack([r, gray, b], axis=-1))


def square_image(size: int = 64, side: int = 32, background: int = 0, fill: int = 255) -> RasterImage:
    img = np.full((size, size), background, dtype=np.uint8)
    lo = (size - side) // 2
    img[lo : lo + side, lo : lo + side] = fill
    return RasterImage(img)


def random_edge_map(rng: np.random.Generator, width: int, height: int, density: float):
    from ragsemcom.image import EdgeMap

    bits = rng.random((height, width)) < density
    return EdgeMap(bits)


@pytest.fixture
def provider():
    return MockProvider()


@pytest.fixture
def photo():
    return synthetic_photo(1)


def build_topical_kb(tmp_path, provider, images: dict[str, RasterImage], docs_per_image: int = 2):
    """KB with one IMAGE entry per source plus documents that share caption
    vocabulary (what topical knowledge about those images looks like)."""
    kb = KnowledgeBase()
    for name, img in images.items():
        path = tmp_path / f"{name}.png"
        save_image(img, path)
        caption = provider.caption(img)
        kb.insert(
            KnowledgeEntry(
                id=f"img-{name}",
                modality=Modality.IMAGE,
                text=caption,
                image_path=str(path),
                text_embedding=provider.embed_text(caption),
                image_embedding=provider.embed_image(img),
                tags=["fixture"],
            )
        )
        words = [w for w in caption.split() if not w.startswith("sig")][:4]
        for d in range(docs_per_image):
            text = (
                f"notes on the {' '.join(words)} composition, take {d}: "
                f"lighting and structure references for reconstruction"
            )
            kb.insert(
                KnowledgeEntry(
                    id=f"doc-{name}-{d}",
                    modality=Modality.DOCUMENT,
                    text=text,
                    text_embedding=provider.embed_text(text),
                    tags=["fixture"],
                )
            )
    return kb
