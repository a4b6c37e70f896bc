"""Raster image and edge map containers plus PNG/PPM/PGM file I/O.

Images are 8-bit, 1 channel (grayscale) or 3 channels (RGB), stored as
row-major numpy arrays: shape (h, w) for grayscale, (h, w, 3) for RGB.
Edge maps are boolean arrays of shape (h, w); bit order for any packed
representation is row-major, MSB-first within each byte.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RasterImage:
    """8-bit image with 1 or 3 interleaved channels."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ValueError(f"expected (h,w) or (h,w,3) array, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def byte_size(self) -> int:
        return self.width * self.height * self.channels

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class EdgeMap:
    """Binary edge map; True marks an edge pixel."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"expected (h,w) bool array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("edge map must be at least 1x1")
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def set_count(self) -> int:
        return int(self.bits.sum())

    def packed(self) -> bytes:
        """Row-major bits packed MSB-first."""
        return np.packbits(self.bits.ravel(), bitorder="big").tobytes()

    @classmethod
    def from_packed(cls, body: bytes, width: int, height: int) -> "EdgeMap":
        n = width * height
        if len(body) < (n + 7) // 8:
            raise ValueError("packed body too short for declared dimensions")
        flat = np.unpackbits(
            np.frombuffer(body, dtype=np.uint8), count=n, bitorder="big"
        )
        return cls(flat.astype(bool).reshape(height, width))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeMap):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(
            np.array_equal(self.bits, other.bits)
        )


def load_image(path: str | Path) -> RasterImage:
    """Read a PNG, PPM (P6) or PGM (P5) file."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] in (b"P5", b"P6"):
        return _read_pnm(raw)
    return _read_png(raw)


def save_image(img: RasterImage, path: str | Path) -> None:
    """Write PNG, PPM or PGM depending on the file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        path.write_bytes(_encode_pnm(img))
    else:
        path.write_bytes(encode_png(img))


def encode_png(img: RasterImage) -> bytes:
    from PIL import Image

    mode = "L" if img.channels == 1 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(img.data, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> RasterImage:
    return _read_png(data)


def _read_png(data: bytes) -> RasterImage:
    from PIL import Image

    with Image.open(io.BytesIO(data)) as im:
        if im.mode == "L":
            return RasterImage(np.asarray(im, dtype=np.uint8))
        rgb = im.convert("RGB")
        return RasterImage(np.asarray(rgb, dtype=np.uint8))


def _read_pnm(raw: bytes) -> RasterImage:
    magic = raw[:2]
    fields: list[int] = []
    pos = 2
    # header = magic, width, height, maxval separated by whitespace/comments
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"only 8-bit PNM supported, maxval={maxval}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = raw[pos : pos + need]
    if len(body) != need:
        raise ValueError("PNM body shorter than declared dimensions")
    arr = np.frombuffer(body, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return RasterImage(arr.reshape(shape))


def _encode_pnm(img: RasterImage) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.data.tobytes()


def resize_nearest(img: RasterImage, width: int, height: int) -> RasterImage:
    """Nearest-neighbour resize; the identity when sizes already match."""
    if width == img.width and height == img.height:
        return img
    src_h, src_w = img.height, img.width
    rows = np.minimum(((np.arange(height) + 0.5) * src_h / height).astype(np.int64), src_h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * src_w / width).astype(np.int64), src_w - 1)
    return RasterImage(img.data[np.ix_(rows, cols)])
