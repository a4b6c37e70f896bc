"""Framing and the seeded binary symmetric channel.

PRNG
----
Bit flips come from a counter-based splitmix64 stream so that any
implementation, in any language, reproduces the same corruption:

    out(seed, i) = finalize(seed + (i + 1) * 0x9E3779B97F4A7C15)  mod 2^64

where finalize is the reference splitmix64 mixing chain
(z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB;
z ^= z>>31). Bit i of a payload is flipped iff out(seed, i) < round(p * 2^64).
Bits are numbered row-major, MSB-first within each byte. Test vectors live in
tests/fixtures/prng_vectors.json and docs/wire_format.md.

Frame layout (all integers little-endian)
-----------------------------------------
    offset 0   magic       4 bytes  "RSEM"
    offset 4   version     u8       1
    offset 5   kind        u8       0 = TEXT, 1 = EDGE
    offset 6   payload_len u32
    offset 10  header meta          TEXT: codec_id u8, original_len u32
                                    EDGE: width u32, height u32, scheme u8
    then       crc32       u32      CRC-32 (IEEE, reflected) of the payload
    then       payload     payload_len bytes

The channel corrupts payload bytes only; header and CRC ride clean.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _kernels
from .errors import LengthNotMultipleOf3, MalformedStream, TruncatedFrame

MAGIC = b"RSEM"
VERSION = 1

_MASK64 = (1 << 64) - 1
_GAMMA = _kernels.SPLITMIX_GAMMA


class FrameKind(IntEnum):
    TEXT = 0
    EDGE = 1


class FecScheme(IntEnum):
    NONE = 0
    REPETITION3 = 1


@dataclass(frozen=True)
class ChannelConfig:
    ber: float = 0.0
    seed: int = 0
    protect_text: bool = True
    fec: FecScheme = FecScheme.NONE

    def __post_init__(self):
        if not 0.0 <= self.ber <= 0.5:
            raise ValueError(f"ber must be in [0, 0.5], got {self.ber}")


def splitmix64(seed: int, index: int) -> int:
    """Scalar stream output; the vectorized twin lives in _kernels."""
    z = (seed + (index + 1) * _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*components: int) -> int:
    """Fold run coordinates (seed, ber index, config index, ...) into one
    64-bit stream seed; order-sensitive by construction."""
    state = 0
    for c in components:
        state = splitmix64(state ^ (c & _MASK64), 0)
    return state


def apply_bsc(data: bytes, p: float, seed: int) -> bytes:
    """Flip each payload bit independently with probability p."""
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"p must be in [0, 0.5], got {p}")
    threshold = int(round(p * 2.0**64))
    return _kernels.bsc_corrupt(data, threshold, seed & _MASK64)


def crc32(payload: bytes) -> int:
    return zlib.crc32(payload) & 0xFFFFFFFF


def frame_encode(kind: FrameKind, meta: tuple, payload: bytes) -> bytes:
    """Serialize one frame. meta is (codec_id, original_len) for TEXT and
    (width, height, scheme) for EDGE."""
    if len(payload) >= 1 << 32:
        raise ValueError("payload too large for u32 length")
    head = MAGIC + struct.pack("<BBI", VERSION, int(kind), len(payload))
    if kind == FrameKind.TEXT:
        codec_id, original_len = meta
        head += struct.pack("<BI", int(codec_id), original_len)
    elif kind == FrameKind.EDGE:
        width, height, scheme = meta
        head += struct.pack("<IIB", width, height, int(scheme))
    else:
        raise ValueError(f"unknown frame kind {kind}")
    return head + struct.pack("<I", crc32(payload)) + payload


@dataclass(frozen=True)
class DecodedFrame:
    kind: FrameKind
    meta: tuple
    payload: bytes
    integrity: bool


def frame_decode(data: bytes) -> DecodedFrame:
    """Parse a frame; corrupt payloads come back with integrity=False so the
    receiver can still attempt a best-effort decode."""
    if len(data) < 10:
        raise TruncatedFrame(f"{len(data)} bytes is shorter than any frame header")
    magic = data[:4]
    version, kind_byte, payload_len = struct.unpack_from("<BBI", data, 4)
    if kind_byte not in (0, 1):
        raise MalformedStream(f"unknown frame kind byte {kind_byte}")
    kind = FrameKind(kind_byte)
    pos = 10
    if kind == FrameKind.TEXT:
        if len(data) < pos + 5:
            raise TruncatedFrame("text header meta truncated")
        codec_id, original_len = struct.unpack_from("<BI", data, pos)
        meta: tuple = (codec_id, original_len)
        pos += 5
    else:
        if len(data) < pos + 9:
            raise TruncatedFrame("edge header meta truncated")
        width, height, scheme = struct.unpack_from("<IIB", data, pos)
        meta = (width, height, scheme)
        pos += 9
    if len(data) < pos + 4 + payload_len:
        raise TruncatedFrame("payload shorter than declared length")
    (stored_crc,) = struct.unpack_from("<I", data, pos)
    payload = data[pos + 4 : pos + 4 + payload_len]
    integrity = magic == MAGIC and version == VERSION and crc32(payload) == stored_crc
    return DecodedFrame(kind, meta, payload, integrity)


def corrupt_frame(frame: bytes, p: float, seed: int) -> bytes:
    """Apply the BSC to the payload bytes of a serialized frame."""
    decoded = frame_decode(frame)
    head_len = len(frame) - len(decoded.payload)
    return frame[:head_len] + apply_bsc(decoded.payload, p, seed)


def repetition3_encode_bits(bits: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(bits, dtype=bool), 3)


def repetition3_decode_bits(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=bool)
    if bits.size % 3:
        raise LengthNotMultipleOf3(f"{bits.size} bits is not a whole number of triples")
    return bits.reshape(-1, 3).sum(axis=1) >= 2


def repetition3_encode(data: bytes) -> bytes:
    """Byte convenience wrapper; n bytes become exactly 3n bytes."""
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="big")
    return np.packbits(repetition3_encode_bits(bits), bitorder="big").tobytes()


def repetition3_decode(data: bytes) -> bytes:
    if len(data) % 3:
        raise LengthNotMultipleOf3(f"{len(data)} bytes is not a whole number of triples")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="big")
    return np.packbits(repetition3_decode_bits(bits), bitorder="big").tobytes()
