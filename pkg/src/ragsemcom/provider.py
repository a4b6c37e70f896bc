"""Caption and embedding providers.

The mock provider keeps the whole pipeline runnable offline and
deterministic. Its joint text-image space is a 64-bin grayscale histogram:
images embed as their normalized histogram, and the captions it produces
carry a hex-encoded quantized copy of that histogram ("sig" token), which
embed_text decodes back into the same space. That mirrors, at desk scale,
what a contrastively trained text-image encoder provides: captions land next
to their images. Arbitrary text (documents) embeds as a hashed bag of words.

The HTTP provider defers all three operations to the model server.
"""

from __future__ import annotations

import base64
import hashlib
import json
from typing import Optional, Protocol

import numpy as np

from .edgemap import to_grayscale
from .errors import MalformedResponse, ReviewerUnavailable
from .genclient import TransportFn, _urllib_transport
from .image import RasterImage, encode_png
from .knowledge import Embedding, KnowledgeBase, unit
from .retriever import ReviewerFn, ScoredHit, tokenize

MOCK_DIM = 64
_SIG_PREFIX = "sig"


class MultimodalProvider(Protocol):
    provider_id: str
    embedding_dim: int

    def caption(self, image: RasterImage) -> str: ...

    def embed_text(self, text: str) -> Embedding: ...

    def embed_image(self, image: RasterImage) -> Embedding: ...


def grayscale_histogram(image: RasterImage, bins: int = MOCK_DIM) -> np.ndarray:
    gray = to_grayscale(image).data
    hist = np.bincount((gray.ravel() // (256 // bins)), minlength=bins).astype(np.float64)
    return hist / hist.sum()


class MockProvider:
    """Deterministic histogram-space provider; no models, no I/O."""

    provider_id = "mock-histogram-v1"
    embedding_dim = MOCK_DIM

    def embed_image(self, image: RasterImage) -> Embedding:
        return unit(grayscale_histogram(image))

    def caption(self, image: RasterImage) -> str:
        hist = grayscale_histogram(image)
        mean = float(to_grayscale(image).data.mean())
        brightness = ("dark", "dim", "bright", "light")[min(int(mean // 64), 3)]
        octave = int(np.argmax(hist.reshape(8, 8).sum(axis=1)))
        quantized = np.minimum(np.round(hist * 255).astype(np.uint8), 255)
        signature = quantized.tobytes().hex()
        return f"a {brightness} scene tone{octave} {_SIG_PREFIX} {signature}"

    def embed_text(self, text: str) -> Embedding:
        tokens = tokenize(text)
        sig = self._decode_signature(tokens)
        if sig is not None:
            return sig
        vec = np.zeros(MOCK_DIM, dtype=np.float64)
        for tok in tokens:
            digest = hashlib.sha256(tok.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:8], "big") % MOCK_DIM] += 1.0
        if not vec.any():
            vec[0] = 1.0
        return unit(vec)

    @staticmethod
    def _decode_signature(tokens: list[str]) -> Optional[Embedding]:
        for i, tok in enumerate(tokens):
            if tok == _SIG_PREFIX and i + 1 < len(tokens):
                candidate = tokens[i + 1]
                if len(candidate) == 2 * MOCK_DIM:
                    try:
                        raw = bytes.fromhex(candidate)
                    except ValueError:
                        return None
                    vec = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
                    if vec.any():
                        return unit(vec)
        return None


class HttpProvider:
    """Caption/embedding calls against the model server wire protocol."""

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 60.0,
        transport: Optional[TransportFn] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.transport = transport or _urllib_transport
        self.provider_id = f"http:{self.base_url}"
        info = self._get_json("/info")
        self.embedding_dim = int(info["embedding_dim"])

    def _get_json(self, path: str) -> dict:
        import urllib.request

        with urllib.request.urlopen(self.base_url + path, timeout=self.timeout_s) as resp:
            if resp.status != 200:
                raise MalformedResponse(f"{path} answered {resp.status}")
            return json.loads(resp.read())

    def _post_json(self, path: str, payload: dict) -> dict:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        status, raw = self.transport(self.base_url + path, body, self.timeout_s)
        if status != 200:
            raise MalformedResponse(f"{path} answered {status}: {raw[:200]!r}")
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"{path} returned invalid JSON") from exc

    def caption(self, image: RasterImage) -> str:
        png = base64.b64encode(encode_png(image)).decode("ascii")
        doc = self._post_json("/caption", {"image_png_b64": png})
        caption = doc.get("caption")
        if not caption:
            raise MalformedResponse("empty caption from service")
        return caption

    def embed_text(self, text: str) -> Embedding:
        doc = self._post_json("/embed_text", {"text": text})
        return Embedding(np.asarray(doc["embedding"], dtype=np.float32), normalized=True)

    def embed_image(self, image: RasterImage) -> Embedding:
        png = base64.b64encode(encode_png(image)).decode("ascii")
        doc = self._post_json("/embed_image", {"image_png_b64": png})
        return Embedding(np.asarray(doc["embedding"], dtype=np.float32), normalized=True)


def http_reviewer(
    base_url: str,
    timeout_s: float = 30.0,
    transport: Optional[TransportFn] = None,
) -> ReviewerFn:
    """Reviewer that asks the model server which hits to keep."""
    base = base_url.rstrip("/")
    transport = transport or _urllib_transport

    def review(query_text: Optional[str], hits: list[ScoredHit], kb: KnowledgeBase) -> list[str]:
        candidates = []
        for hit in hits:
            entry = kb.maybe_get(hit.entry_id)
            candidates.append(
                {
                    "id": hit.entry_id,
                    "score": hit.score,
                    "text": (entry.text if entry else None) or "",
                }
            )
        body = json.dumps(
            {"query": query_text or "", "candidates": candidates}, sort_keys=True
        ).encode("utf-8")
        try:
            status, raw = transport(base + "/review", body, timeout_s)
            if status != 200:
                raise ReviewerUnavailable(f"/review answered {status}")
            return [str(i) for i in json.loads(raw)["keep"]]
        except ReviewerUnavailable:
            raise
        except Exception as exc:
            raise ReviewerUnavailable(str(exc)) from exc

    return review
