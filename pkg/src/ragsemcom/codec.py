"""Lossless source coding for the semantic payload.

Edge maps get one of three byte-level schemes, picked per map by body size:

* RLE    -- alternating run lengths starting with a zero-run (the first run
            may be length 0), each length an unsigned LEB128 varint.
* SPARSE -- LEB128 count of set bits, then the sorted linear indices of the
            set bits, first absolute and the rest as gaps (gap >= 1).
* RAW    -- row-major bits packed MSB-first.

Captions are compressed with Brotli (RFC 7932) when the system library is
present, falling back to identity storage whenever compression would not
shrink the payload, so the coded text is never larger than the original.
"""

from __future__ import annotations

import ctypes
import ctypes.util
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import CodecUnavailable, IndexOutOfRange, LengthMismatch, MalformedStream
from .image import EdgeMap

_MAX_VARINT_BYTES = 10  # enough for any u64


def leb128_encode(value: int) -> bytes:
    if value < 0:
        raise ValueError("varints are unsigned")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def leb128_decode(buf: bytes, pos: int) -> tuple[int, int]:
    """Returns (value, next position). Raises MalformedStream on truncation."""
    result = 0
    shift = 0
    for i in range(_MAX_VARINT_BYTES):
        if pos + i >= len(buf):
            raise MalformedStream("varint truncated")
        byte = buf[pos + i]
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos + i + 1
        shift += 7
    raise MalformedStream("varint longer than 10 bytes")


class EdgeScheme(IntEnum):
    RLE = 0
    SPARSE = 1
    RAW = 2


@dataclass(frozen=True)
class EncodedEdgeMap:
    scheme: EdgeScheme
    width: int
    height: int
    body: bytes


def rle_encode(edge_map: EdgeMap) -> bytes:
    flat = edge_map.bits.ravel()
    n = flat.size
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [n]))
    runs = (ends - starts).tolist()
    if flat[0]:
        runs.insert(0, 0)  # leading zero-run is empty
    return b"".join(leb128_encode(r) for r in runs)


def rle_decode(body: bytes, width: int, height: int) -> EdgeMap:
    n = width * height
    runs: list[int] = []
    pos = 0
    while pos < len(body):
        value, pos = leb128_decode(body, pos)
        if value == 0 and runs:
            raise MalformedStream("zero-length run after the first")
        runs.append(value)
    total = sum(runs)
    if total != n:
        raise LengthMismatch(f"runs cover {total} bits, map has {n}")
    values = np.arange(len(runs), dtype=np.uint8) & 1  # 0-run, 1-run, ...
    flat = np.repeat(values, runs).astype(bool)
    return EdgeMap(flat.reshape(height, width))


def sparse_encode(edge_map: EdgeMap) -> bytes:
    idx = np.flatnonzero(edge_map.bits.ravel())
    parts = [leb128_encode(len(idx))]
    if len(idx):
        parts.append(leb128_encode(int(idx[0])))
        parts.extend(leb128_encode(int(g)) for g in np.diff(idx))
    return b"".join(parts)


def sparse_decode(body: bytes, width: int, height: int) -> EdgeMap:
    n = width * height
    count, pos = leb128_decode(body, 0)
    flat = np.zeros(n, dtype=bool)
    index = -1
    for i in range(count):
        value, pos = leb128_decode(body, pos)
        if i == 0:
            index = value
        else:
            if value == 0:
                raise MalformedStream("zero gap between indices")
            index += value
        if index >= n:
            raise IndexOutOfRange(f"index {index} outside {width}x{height} map")
        flat[index] = True
    if pos != len(body):
        raise MalformedStream(f"{len(body) - pos} trailing bytes")
    return EdgeMap(flat.reshape(height, width))


def raw_encode(edge_map: EdgeMap) -> bytes:
    return edge_map.packed()


def raw_decode(body: bytes, width: int, height: int) -> EdgeMap:
    n = width * height
    if len(body) != (n + 7) // 8:
        raise LengthMismatch(f"raw body is {len(body)} bytes, expected {(n + 7) // 8}")
    return EdgeMap.from_packed(body, width, height)


_ENCODERS = {
    EdgeScheme.RLE: rle_encode,
    EdgeScheme.SPARSE: sparse_encode,
    EdgeScheme.RAW: raw_encode,
}

_DECODERS = {
    EdgeScheme.RLE: rle_decode,
    EdgeScheme.SPARSE: sparse_decode,
    EdgeScheme.RAW: raw_decode,
}


def select_encoding(edge_map: EdgeMap) -> EncodedEdgeMap:
    """Encode with every scheme, keep the shortest body.

    Ties break in enum order (RLE, then SPARSE, then RAW), which keeps
    experiment outputs reproducible.
    """
    best_scheme = None
    best_body = None
    for scheme in (EdgeScheme.RLE, EdgeScheme.SPARSE, EdgeScheme.RAW):
        body = _ENCODERS[scheme](edge_map)
        if best_body is None or len(body) < len(best_body):
            best_scheme, best_body = scheme, body
    return EncodedEdgeMap(best_scheme, edge_map.width, edge_map.height, best_body)


def decode_edges(enc: EncodedEdgeMap) -> EdgeMap:
    return _DECODERS[EdgeScheme(enc.scheme)](enc.body, enc.width, enc.height)


class TextCodec(IntEnum):
    IDENTITY = 0
    GENERAL = 1


@dataclass(frozen=True)
class CompressedText:
    codec_id: TextCodec
    original_len: int
    body: bytes


def compress_text(data: bytes) -> CompressedText:
    if data and brotli_available():
        body = _brotli_compress(data)
        if len(body) <= len(data):
            return CompressedText(TextCodec.GENERAL, len(data), body)
    return CompressedText(TextCodec.IDENTITY, len(data), data)


def decompress_text(comp: CompressedText) -> bytes:
    if comp.codec_id == TextCodec.IDENTITY:
        if len(comp.body) != comp.original_len:
            raise MalformedStream("identity body length disagrees with header")
        return comp.body
    if not brotli_available():
        raise CodecUnavailable("no RFC 7932 decoder on this system")
    out = _brotli_decompress(comp.body, comp.original_len)
    if len(out) != comp.original_len:
        raise MalformedStream("decompressed length disagrees with header")
    return out


# --- Brotli via the system shared library -----------------------------------

_BROTLI_QUALITY = 11
_BROTLI_LGWIN = 22

_brotli_libs: tuple | None = None


def _load_brotli():
    global _brotli_libs
    if _brotli_libs is not None:
        return _brotli_libs
    try:
        enc_name = ctypes.util.find_library("brotlienc") or "libbrotlienc.so.1"
        dec_name = ctypes.util.find_library("brotlidec") or "libbrotlidec.so.1"
        enc = ctypes.CDLL(enc_name)
        dec = ctypes.CDLL(dec_name)
        enc.BrotliEncoderCompress.restype = ctypes.c_int
        enc.BrotliEncoderCompress.argtypes = [
            ctypes.c_int,
            ctypes.c_int,
            ctypes.c_int,
            ctypes.c_size_t,
            ctypes.c_char_p,
            ctypes.POINTER(ctypes.c_size_t),
            ctypes.c_char_p,
        ]
        enc.BrotliEncoderMaxCompressedSize.restype = ctypes.c_size_t
        enc.BrotliEncoderMaxCompressedSize.argtypes = [ctypes.c_size_t]
        dec.BrotliDecoderDecompress.restype = ctypes.c_int
        dec.BrotliDecoderDecompress.argtypes = [
            ctypes.c_size_t,
            ctypes.c_char_p,
            ctypes.POINTER(ctypes.c_size_t),
            ctypes.c_char_p,
        ]
        _brotli_libs = (enc, dec)
    except OSError:
        _brotli_libs = ()
    return _brotli_libs


def brotli_available() -> bool:
    return bool(_load_brotli())


def _brotli_compress(data: bytes) -> bytes:
    enc, _ = _load_brotli()
    bound = enc.BrotliEncoderMaxCompressedSize(len(data)) or len(data) + 1024
    buf = ctypes.create_string_buffer(bound)
    out_len = ctypes.c_size_t(bound)
    ok = enc.BrotliEncoderCompress(
        _BROTLI_QUALITY, _BROTLI_LGWIN, 0, len(data), data, ctypes.byref(out_len), buf
    )
    if not ok:
        raise CodecUnavailable("brotli encoder failed")
    return buf.raw[: out_len.value]


def _brotli_decompress(body: bytes, expected_len: int) -> bytes:
    _, dec = _load_brotli()
    buf = ctypes.create_string_buffer(max(expected_len, 1))
    out_len = ctypes.c_size_t(expected_len)
    result = dec.BrotliDecoderDecompress(len(body), body, ctypes.byref(out_len), buf)
    if result != 1:  # BROTLI_DECODER_RESULT_SUCCESS
        raise MalformedStream("brotli stream does not decode")
    return buf.raw[: out_len.value]
