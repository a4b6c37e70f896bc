"""Knowledge base: documents, reference images, embeddings, and the cache of
past transmissions.

On-disk store layout (see docs/kb_store.md for the field-by-field schema):

    store/
      manifest.jsonl    header line, then one JSON object per entry
      embeddings.bin    little-endian float32, row-major, rows referenced
                        by index from the manifest
      images/           copies of referenced image files
      cache/            one JSON per cached transmission + reconstructions
      checksum.txt      sha256 of manifest.jsonl and embeddings.bin

Single-writer, multi-reader: mutate only from one thread, search freely.
"""

from __future__ import annotations

import base64
import hashlib
import json
import shutil
import struct
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorruptStore, DimensionMismatch
from .image import EdgeMap, RasterImage, load_image, save_image
from .metrics import MetricsReport

NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty vector")
        if self.normalized:
            norm = float(np.linalg.norm(arr.astype(np.float64)))
            if abs(norm - 1.0) >= NORM_TOLERANCE:
                raise ValueError(f"normalized embedding has norm {norm}")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.normalized == other.normalized and bool(
            np.array_equal(self.values, other.values)
        )


def unit(values) -> Embedding:
    """L2-normalize and wrap."""
    arr = np.asarray(values, dtype=np.float64)
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return Embedding((arr / norm).astype(np.float32), normalized=True)


class Modality(str, Enum):
    DOCUMENT = "document"
    IMAGE = "image"


@dataclass
class KnowledgeEntry:
    id: str
    modality: Modality
    text: Optional[str] = None
    image_path: Optional[str] = None
    text_embedding: Optional[Embedding] = None
    image_embedding: Optional[Embedding] = None
    tags: list[str] = field(default_factory=list)
    inserted_at: float = 0.0

    def content_equal(self, other: "KnowledgeEntry") -> bool:
        """Equality up to image file location: compares referenced image bytes
        rather than path strings (persist relocates files into the store)."""
        if (
            self.id != other.id
            or self.modality != other.modality
            or self.text != other.text
            or self.text_embedding != other.text_embedding
            or self.image_embedding != other.image_embedding
            or self.tags != other.tags
            or self.inserted_at != other.inserted_at
        ):
            return False
        if (self.image_path is None) != (other.image_path is None):
            return False
        if self.image_path is not None:
            return Path(self.image_path).read_bytes() == Path(other.image_path).read_bytes()
        return True


@dataclass
class CacheRecord:
    content_hash: bytes
    frames: list[bytes]
    reconstruction: Optional[RasterImage] = None
    reconstruction_path: Optional[str] = None
    metrics: Optional[MetricsReport] = None

    def load_reconstruction(self) -> Optional[RasterImage]:
        if self.reconstruction is not None:
            return self.reconstruction
        if self.reconstruction_path is not None:
            return load_image(self.reconstruction_path)
        return None


def semantic_content_hash(caption: str, edge_map: EdgeMap) -> bytes:
    """Identity of the semantic payload: caption bytes + raw edge bits."""
    h = hashlib.sha256()
    h.update(caption.encode("utf-8"))
    h.update(b"\x00")
    h.update(struct.pack("<II", edge_map.width, edge_map.height))
    h.update(edge_map.packed())
    return h.digest()


class KnowledgeBase:
    def __init__(self, embedding_dim: Optional[int] = None):
        self.embedding_dim = embedding_dim
        self._entries: dict[str, KnowledgeEntry] = {}
        self._cache: dict[bytes, CacheRecord] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def insert(self, entry: KnowledgeEntry) -> str:
        if entry.modality == Modality.DOCUMENT and not entry.text:
            raise ValueError(f"document entry {entry.id!r} has no text")
        if entry.modality == Modality.IMAGE and not entry.image_path:
            raise ValueError(f"image entry {entry.id!r} has no image path")
        for emb in (entry.text_embedding, entry.image_embedding):
            if emb is None:
                continue
            if self.embedding_dim is None:
                self.embedding_dim = emb.dim
            elif emb.dim != self.embedding_dim:
                raise DimensionMismatch(
                    f"entry {entry.id!r} embedding dim {emb.dim}, KB declares {self.embedding_dim}"
                )
        if not entry.inserted_at:
            entry.inserted_at = time.time()
        self._entries[entry.id] = entry
        return entry.id

    def get(self, entry_id: str) -> KnowledgeEntry:
        return self._entries[entry_id]

    def maybe_get(self, entry_id: str) -> Optional[KnowledgeEntry]:
        return self._entries.get(entry_id)

    def entries(self, modality: Optional[Modality] = None) -> list[KnowledgeEntry]:
        out = [
            e
            for e in self._entries.values()
            if modality is None or e.modality == modality
        ]
        out.sort(key=lambda e: e.id)
        return out

    def cache_put(self, record: CacheRecord) -> None:
        self._cache[record.content_hash] = record

    def cache_lookup(self, content_hash: bytes) -> Optional[CacheRecord]:
        return self._cache.get(content_hash)

    def cache_records(self) -> list[CacheRecord]:
        return sorted(self._cache.values(), key=lambda r: r.content_hash)

    # --- persistence ---------------------------------------------------------

    def persist(self, path: str | Path) -> None:
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        images_dir = root / "images"
        cache_dir = root / "cache"
        images_dir.mkdir(exist_ok=True)
        cache_dir.mkdir(exist_ok=True)

        rows: list[np.ndarray] = []
        lines = [
            json.dumps(
                {
                    "version": 1,
                    "embedding_dim": self.embedding_dim,
                    "entry_count": len(self._entries),
                },
                sort_keys=True,
            )
        ]

        def embedding_row(emb: Optional[Embedding]):
            if emb is None:
                return None, None
            rows.append(emb.values)
            return len(rows) - 1, emb.normalized

        for entry in self.entries():
            text_row, text_norm = embedding_row(entry.text_embedding)
            image_row, image_norm = embedding_row(entry.image_embedding)
            image_rel = None
            if entry.image_path is not None:
                src = Path(entry.image_path)
                image_rel = f"images/{entry.id}{src.suffix or '.png'}"
                dst = root / image_rel
                if src.resolve() != dst.resolve():
                    shutil.copyfile(src, dst)
            lines.append(
                json.dumps(
                    {
                        "id": entry.id,
                        "modality": entry.modality.value,
                        "text": entry.text,
                        "image_path": image_rel,
                        "text_embedding_row": text_row,
                        "text_embedding_normalized": text_norm,
                        "image_embedding_row": image_row,
                        "image_embedding_normalized": image_norm,
                        "tags": entry.tags,
                        "inserted_at": entry.inserted_at,
                    },
                    sort_keys=True,
                )
            )

        manifest = ("\n".join(lines) + "\n").encode("utf-8")
        if rows:
            emb_blob = np.concatenate([r.astype("<f4") for r in rows]).tobytes()
        else:
            emb_blob = b""
        (root / "manifest.jsonl").write_bytes(manifest)
        (root / "embeddings.bin").write_bytes(emb_blob)

        for rec in self.cache_records():
            hex_hash = rec.content_hash.hex()
            recon_rel = None
            recon = rec.load_reconstruction()
            if recon is not None:
                recon_rel = f"cache/recon_{hex_hash}.png"
                save_image(recon, root / recon_rel)
            (cache_dir / f"{hex_hash}.json").write_text(
                json.dumps(
                    {
                        "content_hash": hex_hash,
                        "frames": [base64.b64encode(f).decode("ascii") for f in rec.frames],
                        "reconstruction_path": recon_rel,
                        "metrics": rec.metrics.to_dict() if rec.metrics else None,
                    },
                    sort_keys=True,
                ),
                encoding="utf-8",
            )

        digest = hashlib.sha256(manifest + emb_blob).hexdigest()
        (root / "checksum.txt").write_text(digest + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        root = Path(path)
        try:
            manifest = (root / "manifest.jsonl").read_bytes()
            emb_blob = (root / "embeddings.bin").read_bytes()
            stored = (root / "checksum.txt").read_text(encoding="utf-8").strip()
        except OSError as exc:
            raise CorruptStore(f"store at {root} is unreadable: {exc}") from exc
        if hashlib.sha256(manifest + emb_blob).hexdigest() != stored:
            raise CorruptStore(f"checksum mismatch in {root}")

        lines = manifest.decode("utf-8").splitlines()
        try:
            header = json.loads(lines[0])
            dim = header["embedding_dim"]
        except (IndexError, KeyError, json.JSONDecodeError) as exc:
            raise CorruptStore(f"bad manifest header: {exc}") from exc

        kb = cls(embedding_dim=dim)
        if dim:
            vectors = np.frombuffer(emb_blob, dtype="<f4").reshape(-1, dim)
        else:
            vectors = np.zeros((0, 0), dtype=np.float32)

        def row_embedding(row, normalized):
            if row is None:
                return None
            return Embedding(vectors[row].copy(), normalized=bool(normalized))

        for line in lines[1:]:
            rec = json.loads(line)
            entry = KnowledgeEntry(
                id=rec["id"],
                modality=Modality(rec["modality"]),
                text=rec["text"],
                image_path=str(root / rec["image_path"]) if rec["image_path"] else None,
                text_embedding=row_embedding(
                    rec["text_embedding_row"], rec["text_embedding_normalized"]
                ),
                image_embedding=row_embedding(
                    rec["image_embedding_row"], rec["image_embedding_normalized"]
                ),
                tags=list(rec["tags"]),
                inserted_at=rec["inserted_at"],
            )
            kb._entries[entry.id] = entry

        cache_dir = root / "cache"
        if cache_dir.is_dir():
            for cache_file in sorted(cache_dir.glob("*.json")):
                rec = json.loads(cache_file.read_text(encoding="utf-8"))
                record = CacheRecord(
                    content_hash=bytes.fromhex(rec["content_hash"]),
                    frames=[base64.b64decode(f) for f in rec["frames"]],
                    reconstruction_path=(
                        str(root / rec["reconstruction_path"])
                        if rec["reconstruction_path"]
                        else None
                    ),
                    metrics=MetricsReport.from_dict(rec["metrics"]) if rec["metrics"] else None,
                )
                kb._cache[record.content_hash] = record
        return kb
