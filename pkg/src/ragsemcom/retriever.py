"""Sparse, dense, and cross-modal retrieval with reviewer filtering and an
iterative stop-exploration loop.

All searches are exact (no ANN): results come back sorted by descending
score with ties broken by ascending entry id, so rankings are reproducible
and oracle-checkable against brute force.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, ReviewerUnavailable
from .knowledge import Embedding, KnowledgeBase, KnowledgeEntry, Modality

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DUP_COSINE_THRESHOLD = 0.95


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop empties. No stemming."""
    return _TOKEN_RE.findall(text.lower())


class ScoreKind(str, Enum):
    TFIDF_COSINE = "tfidf_cosine"
    BM25 = "bm25"
    COSINE = "cosine"


@dataclass(frozen=True)
class ScoredHit:
    entry_id: str
    score: float
    score_kind: ScoreKind


class QueryMode(str, Enum):
    SPARSE = "sparse"
    DENSE_TEXT = "dense_text"
    CROSS_MODAL = "cross_modal"


@dataclass
class Query:
    mode: QueryMode
    k: int = 10
    text: Optional[str] = None
    text_embedding: Optional[Embedding] = None
    image_embedding: Optional[Embedding] = None

    def __post_init__(self):
        if self.mode == QueryMode.SPARSE and self.text is None:
            raise ValueError("sparse query needs text")
        if self.mode == QueryMode.DENSE_TEXT and self.text_embedding is None:
            raise ValueError("dense text query needs a text embedding")
        if self.mode == QueryMode.CROSS_MODAL and (
            self.text_embedding is None and self.image_embedding is None
        ):
            raise ValueError("cross-modal query needs an embedding")


@dataclass
class RetrievalBundle:
    documents: list[ScoredHit] = field(default_factory=list)
    images: list[ScoredHit] = field(default_factory=list)
    rounds_used: int = 1
    stopped_early: bool = False


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)


def build_inverted_index(corpus: dict[str, str]) -> InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc_id in sorted(corpus):
        tokens = tokenize(corpus[doc_id])
        doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc_id, tf))
    for plist in postings.values():
        plist.sort(key=lambda p: p[0])
    return InvertedIndex(postings, doc_lengths)


def _ranked(scores: dict[str, float], k: int, kind: ScoreKind) -> list[ScoredHit]:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [ScoredHit(doc_id, score, kind) for doc_id, score in ordered[:k]]


def _tfidf_idf(index: InvertedIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    return math.log((index.doc_count + 1) / (df + 1)) + 1.0


def tfidf_search(index: InvertedIndex, query_text: str, k: int) -> list[ScoredHit]:
    """Cosine between L2-normalized tf-idf vectors; idf = ln((N+1)/(df+1)) + 1."""
    q_tokens = tokenize(query_text)
    if not q_tokens or not index.doc_count:
        return []
    q_counts: dict[str, int] = {}
    for tok in q_tokens:
        q_counts[tok] = q_counts.get(tok, 0) + 1
    q_vec = {t: tf * _tfidf_idf(index, t) for t, tf in q_counts.items()}
    q_norm = math.sqrt(sum(v * v for v in q_vec.values()))

    doc_weights: dict[str, dict[str, float]] = {}
    for term, plist in index.postings.items():
        idf = _tfidf_idf(index, term)
        for doc_id, tf in plist:
            doc_weights.setdefault(doc_id, {})[term] = tf * idf

    scores: dict[str, float] = {}
    for doc_id, weights in doc_weights.items():
        dot = sum(q_vec[t] * w for t, w in weights.items() if t in q_vec)
        if dot <= 0.0:
            continue
        d_norm = math.sqrt(sum(w * w for w in weights.values()))
        scores[doc_id] = dot / (q_norm * d_norm)
    return _ranked(scores, k, ScoreKind.TFIDF_COSINE)


def bm25_idf(index: InvertedIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    n = index.doc_count
    return max(0.0, math.log(1.0 + (n - df + 0.5) / (df + 0.5)))


def bm25_search(
    index: InvertedIndex,
    query_text: str,
    k: int,
    k1: float = 1.2,
    b: float = 0.75,
) -> list[ScoredHit]:
    q_tokens = tokenize(query_text)
    if not q_tokens or not index.doc_count:
        return []
    avgdl = index.avgdl
    scores: dict[str, float] = {}
    for term in q_tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(index, term)
        for doc_id, tf in plist:
            dl = index.doc_lengths[doc_id]
            gain = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
            scores[doc_id] = scores.get(doc_id, 0.0) + gain
    return _ranked(scores, k, ScoreKind.BM25)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def dense_search(
    kb: KnowledgeBase,
    query_embedding: Embedding,
    k: int,
    modality: Optional[Modality] = None,
    embedding_field: str = "text_embedding",
) -> list[ScoredHit]:
    """Exact cosine top-k over every entry carrying the requested embedding."""
    if kb.embedding_dim is not None and query_embedding.dim != kb.embedding_dim:
        raise DimensionMismatch(
            f"query dim {query_embedding.dim}, KB declares {kb.embedding_dim}"
        )
    q = query_embedding.values.astype(np.float64)
    scores: dict[str, float] = {}
    for entry in kb.entries(modality):
        emb: Optional[Embedding] = getattr(entry, embedding_field)
        if emb is None:
            continue
        scores[entry.id] = _cosine(q, emb.values.astype(np.float64))
    return _ranked(scores, k, ScoreKind.COSINE)


def cross_modal_search(kb: KnowledgeBase, text_embedding: Embedding, k: int) -> list[ScoredHit]:
    """Text query against image embeddings (joint space assumed)."""
    return dense_search(
        kb, text_embedding, k, modality=Modality.IMAGE, embedding_field="image_embedding"
    )


def _entry_embedding(entry: KnowledgeEntry) -> Optional[np.ndarray]:
    emb = entry.image_embedding or entry.text_embedding
    return None if emb is None else emb.values.astype(np.float64)


ReviewerFn = Callable[[Optional[str], list[ScoredHit], KnowledgeBase], list[str]]


def review_filter(
    hits: list[ScoredHit],
    query_text: Optional[str],
    kb: KnowledgeBase,
    max_keep: int,
    min_score: float = 0.0,
    dup_threshold: float = DUP_COSINE_THRESHOLD,
    reviewer: Optional[ReviewerFn] = None,
) -> list[ScoredHit]:
    """Drop weak hits, collapse near-duplicates (keep the higher-scored), cap
    the list, then let an optional external reviewer veto survivors.

    A failing reviewer degrades to the heuristic result instead of raising.
    """
    kept: list[ScoredHit] = []
    kept_vecs: list[np.ndarray] = []
    for hit in hits:
        if hit.score < min_score:
            continue
        entry = kb.maybe_get(hit.entry_id)
        vec = _entry_embedding(entry) if entry else None
        if vec is not None and any(
            _cosine(vec, seen) > dup_threshold for seen in kept_vecs
        ):
            continue
        kept.append(hit)
        if vec is not None:
            kept_vecs.append(vec)
        if len(kept) == max_keep:
            break
    if reviewer is not None:
        try:
            keep_ids = set(reviewer(query_text, kept, kb))
        except ReviewerUnavailable:
            return kept
        kept = [h for h in kept if h.entry_id in keep_ids]
    return kept


def retrieve_with_stop_exploration(
    kb: KnowledgeBase,
    query: Query,
    rounds_max: int,
    epsilon: float,
    k_per_round: int,
    index: Optional[InvertedIndex] = None,
    min_score: float = 0.0,
    max_keep: Optional[int] = None,
    reviewer: Optional[ReviewerFn] = None,
    bm25_k1: float = 1.2,
    bm25_b: float = 0.75,
) -> RetrievalBundle:
    """Widen the search round by round until the marginal reviewed score mass
    falls below epsilon or the round budget runs out.

    Round r searches with k = r * k_per_round; the round's gain is the summed
    score of the top k_per_round hits that survived review and were not
    already admitted.
    """
    if rounds_max < 1:
        raise ValueError("rounds_max must be >= 1")

    def search(k: int) -> list[ScoredHit]:
        if query.mode == QueryMode.SPARSE:
            if index is None:
                raise ValueError("sparse retrieval needs an inverted index")
            return bm25_search(index, query.text, k, k1=bm25_k1, b=bm25_b)
        if query.mode == QueryMode.DENSE_TEXT:
            return dense_search(
                kb, query.text_embedding, k,
                modality=Modality.DOCUMENT, embedding_field="text_embedding",
            )
        emb = query.text_embedding or query.image_embedding
        return cross_modal_search(kb, emb, k)

    admitted: dict[str, ScoredHit] = {}
    cap = max_keep if max_keep is not None else rounds_max * k_per_round
    rounds_used = 0
    stopped_early = False
    for r in range(1, rounds_max + 1):
        rounds_used = r
        survivors = review_filter(
            search(r * k_per_round), query.text, kb, cap,
            min_score=min_score, reviewer=reviewer,
        )
        new_hits = [h for h in survivors if h.entry_id not in admitted]
        for hit in survivors:
            admitted.setdefault(hit.entry_id, hit)
        gain = sum(h.score for h in new_hits[:k_per_round])
        if gain < epsilon:
            stopped_early = r < rounds_max
            break

    hits = sorted(admitted.values(), key=lambda h: (-h.score, h.entry_id))[:cap]
    bundle = RetrievalBundle(rounds_used=rounds_used, stopped_early=stopped_early)
    if query.mode == QueryMode.CROSS_MODAL:
        bundle.images = hits
    else:
        bundle.documents = hits
    return bundle
