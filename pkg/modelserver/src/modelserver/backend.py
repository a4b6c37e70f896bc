"""Deterministic procedural backend.

Stands in for the real captioner / joint embedder / conditioned generator
stack. The joint text-image space is a 64-bin grayscale histogram; captions
carry a hex-encoded copy of the histogram so that embedding a caption lands
next to embedding its image, which is the property the pipeline needs from
a contrastively trained encoder. Generation composites the top reference
(or renders the edge map), applies edge-guided shading, and adds seeded
texture noise, honoring the request seed exactly.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .imaging import resize_nearest, to_gray

EMBED_DIM = 64
_SIG_RE = re.compile(r"\bsig\s+([0-9a-f]{128})\b")

_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class ProceduralBackend:
    generator_id = "procedural-compositor-v1"
    caption_model_id = "histogram-captioner-v1"
    embedding_dim = EMBED_DIM
    deterministic = True

    # --- embeddings -----------------------------------------------------

    def _histogram(self, image: np.ndarray) -> np.ndarray:
        gray = to_gray(image)
        hist = np.bincount(gray.ravel() // 4, minlength=EMBED_DIM).astype(np.float64)
        return hist / hist.sum()

    def embed_image(self, image: np.ndarray) -> list[float]:
        hist = self._histogram(image)
        return (hist / np.linalg.norm(hist)).tolist()

    def embed_text(self, text: str) -> list[float]:
        match = _SIG_RE.search(text.lower())
        if match:
            vec = np.frombuffer(bytes.fromhex(match.group(1)), dtype=np.uint8)
            vec = vec.astype(np.float64)
            if vec.any():
                return (vec / np.linalg.norm(vec)).tolist()
        vec = np.zeros(EMBED_DIM, dtype=np.float64)
        for token in re.findall(r"[a-z0-9]+", text.lower()):
            digest = hashlib.sha256(token.encode()).digest()
            vec[int.from_bytes(digest[:8], "big") % EMBED_DIM] += 1.0
        if not vec.any():
            vec[0] = 1.0
        return (vec / np.linalg.norm(vec)).tolist()

    # --- caption ----------------------------------------------------------

    def caption(self, image: np.ndarray) -> str:
        hist = self._histogram(image)
        mean = float(to_gray(image).mean())
        mood = ("a dark", "a dim", "a bright", "a light")[min(int(mean // 64), 3)]
        octave = int(np.argmax(hist.reshape(8, 8).sum(axis=1)))
        signature = np.minimum(np.round(hist * 255), 255).astype(np.uint8).tobytes().hex()
        return f"{mood} scene with tone{octave} emphasis, sig {signature}"

    # --- prompt tooling ---------------------------------------------------

    def rewrite(self, prompt: str, documents: list[str], budget: int) -> str:
        merged = prompt
        for doc in documents:
            addition = f" Drawing on: {doc.strip()}."
            if len(merged) + len(addition) > budget:
                break
            merged += addition
        return merged[:budget] if merged else prompt[:budget]

    def review(self, query: str, candidates: list[dict]) -> list[str]:
        """Keep hits scoring at least a tenth of the best; drop exact
        duplicate texts (first occurrence wins)."""
        if not candidates:
            return []
        best = max(c.get("score", 0.0) for c in candidates)
        keep: list[str] = []
        seen_texts: set[str] = set()
        for cand in candidates:
            text = (cand.get("text") or "").strip()
            if cand.get("score", 0.0) < 0.1 * best:
                continue
            if text and text in seen_texts:
                continue
            seen_texts.add(text)
            keep.append(str(cand["id"]))
        return keep

    # --- generation ---------------------------------------------------------

    def generate(
        self,
        prompt: str,
        edge_map: np.ndarray,
        references: list[np.ndarray],
        width: int,
        height: int,
        seed: int,
        steps: int,
    ) -> np.ndarray:
        if references:
            base = resize_nearest(references[0], width, height).astype(np.float64)
            if base.ndim == 2:
                base = np.stack([base] * 3, axis=-1)
        else:
            base = np.full((height, width, 3), 44.0)

        edges = resize_nearest(to_gray(edge_map), width, height) > 127
        if references:
            base[edges] -= 36.0  # structural accent along the conditioning edges
        else:
            base[edges] = 228.0  # sketch the structure onto the empty canvas

        noise = self._texture(width, height, seed)
        out = base + noise[:, :, None]
        return np.clip(out, 0, 255).astype(np.uint8)

    def _texture(self, width: int, height: int, seed: int) -> np.ndarray:
        n = width * height
        idx = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(seed & _MASK64) + idx * np.uint64(0x9E3779B97F4A7C15)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        # uniform in [-3, 3): visible generative texture, mild histogram shift
        u = (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)
        return (u * 6.0 - 3.0).reshape(height, width)
