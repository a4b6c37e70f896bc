"""End-to-end orchestration: transmit -> corrupt -> receive -> retrieve ->
reconstruct -> measure, plus the BER-sweep / RAG-ablation experiment driver.

Runs are deterministic under the stub backend: every run derives its own
channel seed from (experiment seed, ber index, config index, image index),
so run order never changes results and identical configs produce
byte-identical CSV files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import channel as chan
from . import codec
from .edgemap import canny, to_grayscale
from .errors import (
    IndexOutOfRange,
    LengthMismatch,
    LengthNotMultipleOf3,
    MalformedStream,
    RagSemComError,
)
from .genclient import Backend, GenerationRequest, ReconstructionResult, generate
from .image import EdgeMap, RasterImage, load_image
from .knowledge import (
    CacheRecord,
    KnowledgeBase,
    Modality,
    semantic_content_hash,
)
from .metrics import MetricsReport, clip_similarity, compression_ratio, measured_ber, ms_ssim
from .prompter import PromptBundle, enhance_prompt
from .provider import HttpProvider, MockProvider, MultimodalProvider, http_reviewer
from .retriever import (
    InvertedIndex,
    Query,
    QueryMode,
    RetrievalBundle,
    build_inverted_index,
    retrieve_with_stop_exploration,
)

CSV_COLUMNS = [
    "config_id",
    "ber",
    "seed",
    "rag_text",
    "rag_image",
    "ms_ssim",
    "clip_similarity",
    "measured_ber",
    "compression_ratio",
    "lpips",
    "pieapp",
    "degraded",
    "error",
]

CONFIG_NAMES = {
    (False, False): "no_rag",
    (True, False): "text_rag",
    (False, True): "image_rag",
    (True, True): "full_rag",
}

ABLATION_GRID = [(False, False), (True, False), (False, True), (True, True)]


@dataclass
class ExperimentConfig:
    inputs: list[str] = field(default_factory=list)
    kb_path: Optional[str] = None
    output_csv: str = "results.csv"
    ber_sweep: list[float] = field(default_factory=lambda: [0.0])
    seeds: list[int] = field(default_factory=lambda: [1])
    protect_text: bool = True
    fec: str = "none"
    rag_text: bool = True
    rag_image: bool = True
    ablation: bool = False
    k_per_round: int = 4
    rounds_max: int = 3
    epsilon: float = 0.05
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    min_score: float = 0.0
    max_keep: int = 8
    char_budget: int = 4000
    max_reference_images: int = 1
    backend: Backend = Backend.STUB
    service_url: Optional[str] = None
    provider: str = "mock"
    use_reviewer: bool = False
    timeout_s: float = 120.0
    fallback_to_stub: bool = False
    use_cache: bool = False
    canny_low: float = 100.0
    canny_high: float = 200.0
    canny_sigma: float = 1.4
    steps: int = 30

    def __post_init__(self):
        for p in self.ber_sweep:
            if not 0.0 <= p <= 0.5:
                raise ValueError(f"ber {p} outside [0, 0.5]")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if isinstance(self.backend, str):
            self.backend = Backend(self.backend)
        _fec_scheme(self)  # validate the name early

    def channel_config(self, ber: float, seed: int) -> chan.ChannelConfig:
        return chan.ChannelConfig(
            ber=ber, seed=seed, protect_text=self.protect_text, fec=_fec_scheme(self)
        )


# --- config file (documented key = value form) -------------------------------

_LIST_FIELDS = {"inputs", "ber_sweep", "seeds"}
_BOOL_FIELDS = {
    "protect_text", "rag_text", "rag_image", "ablation",
    "use_reviewer", "fallback_to_stub", "use_cache",
}
_INT_FIELDS = {"k_per_round", "rounds_max", "max_keep", "char_budget",
               "max_reference_images", "steps"}
_FLOAT_FIELDS = {"epsilon", "bm25_k1", "bm25_b", "min_score", "timeout_s",
                 "canny_low", "canny_high", "canny_sigma"}


def parse_config_file(path: str | Path) -> dict:
    """Parse the UTF-8 `key = value` config form; lists are comma-separated,
    booleans are true/false, # starts a comment line."""
    values: dict = {}
    for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw_line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _LIST_FIELDS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if key == "ber_sweep":
                values[key] = [float(v) for v in items]
            elif key == "seeds":
                values[key] = [int(v) for v in items]
            else:
                values[key] = items
        elif key in _BOOL_FIELDS:
            values[key] = value.lower() in ("true", "1", "yes")
        elif key in _INT_FIELDS:
            values[key] = int(value)
        elif key in _FLOAT_FIELDS:
            values[key] = float(value)
        elif key == "backend":
            values[key] = Backend(value)
        else:
            values[key] = value
    return values


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    values = parse_config_file(path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def make_provider(cfg: ExperimentConfig) -> MultimodalProvider:
    if cfg.provider == "mock":
        return MockProvider()
    if cfg.provider == "service":
        if not cfg.service_url:
            raise ValueError("provider=service needs service_url")
        return HttpProvider(cfg.service_url, timeout_s=cfg.timeout_s)
    raise ValueError(f"unknown provider {cfg.provider!r}")


# --- transmit ----------------------------------------------------------------


@dataclass
class TransmissionRecord:
    content_hash: bytes
    caption: str
    edge_map: EdgeMap
    frames: dict[str, bytes]            # clean, as encoded at the transmitter
    corrupted_frames: dict[str, bytes]  # after the channel
    encoded_sizes: dict[str, int]
    source_bytes: int
    cache_hit: bool = False


def transmit(
    image: RasterImage,
    cfg: ExperimentConfig,
    kb: KnowledgeBase,
    provider: MultimodalProvider,
    ber: float,
    seed: int,
) -> TransmissionRecord:
    caption = provider.caption(image)
    edge_map = canny(to_grayscale(image), cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
    content_hash = semantic_content_hash(caption, edge_map)

    cached = kb.cache_lookup(content_hash) if cfg.use_cache else None
    if cached is not None:
        frames = {"text": cached.frames[0], "edge": cached.frames[1]}
        return TransmissionRecord(
            content_hash=content_hash,
            caption=caption,
            edge_map=edge_map,
            frames=frames,
            corrupted_frames=dict(frames),
            encoded_sizes={k: len(v) for k, v in frames.items()},
            source_bytes=image.byte_size,
            cache_hit=True,
        )

    fec = _fec_scheme(cfg)
    compressed = codec.compress_text(caption.encode("utf-8"))
    text_body = _fec_encode(compressed.body, fec)
    text_frame = chan.frame_encode(
        chan.FrameKind.TEXT, (compressed.codec_id, compressed.original_len), text_body
    )
    encoded = codec.select_encoding(edge_map)
    edge_body = _fec_encode(encoded.body, fec)
    edge_frame = chan.frame_encode(
        chan.FrameKind.EDGE, (encoded.width, encoded.height, encoded.scheme), edge_body
    )

    # per-frame seed: seed XOR frame index (text=0, edge=1)
    corrupted_text = (
        text_frame if cfg.protect_text else chan.corrupt_frame(text_frame, ber, seed ^ 0)
    )
    corrupted_edge = chan.corrupt_frame(edge_frame, ber, seed ^ 1)

    return TransmissionRecord(
        content_hash=content_hash,
        caption=caption,
        edge_map=edge_map,
        frames={"text": text_frame, "edge": edge_frame},
        corrupted_frames={"text": corrupted_text, "edge": corrupted_edge},
        encoded_sizes={"text": len(text_frame), "edge": len(edge_frame)},
        source_bytes=image.byte_size,
    )


def _fec_scheme(cfg: ExperimentConfig) -> chan.FecScheme:
    name = cfg.fec.lower()
    if name in ("none", ""):
        return chan.FecScheme.NONE
    if name == "repetition3":
        return chan.FecScheme.REPETITION3
    raise ValueError(f"unknown fec scheme {cfg.fec!r}")


def _fec_encode(body: bytes, fec: chan.FecScheme) -> bytes:
    if fec == chan.FecScheme.REPETITION3:
        return chan.repetition3_encode(body)
    return body


def _fec_decode(body: bytes, fec: chan.FecScheme) -> bytes:
    if fec == chan.FecScheme.REPETITION3:
        return chan.repetition3_decode(body)
    return body


# --- receive -----------------------------------------------------------------


@dataclass
class ReceiveOutcome:
    result: ReconstructionResult
    report: Optional[MetricsReport]
    caption: str
    edge_map: EdgeMap
    edge_decode_failed: bool
    bundle: RetrievalBundle
    prompt: Optional[PromptBundle]


def _decode_caption(frame: chan.DecodedFrame, fec: chan.FecScheme) -> str:
    codec_id, original_len = frame.meta
    body = _fec_decode(frame.payload, fec)
    compressed = codec.CompressedText(codec.TextCodec(codec_id), original_len, body)
    # an undecodable text body (possible only with protect_text=false) is
    # fatal by contract; garbled-but-decodable text degrades gracefully
    raw = codec.decompress_text(compressed)
    return raw.decode("utf-8", errors="replace")


def _decode_edge(frame: chan.DecodedFrame, fec: chan.FecScheme) -> tuple[EdgeMap, bool]:
    width, height, scheme = frame.meta
    try:
        body = _fec_decode(frame.payload, fec)
        enc = codec.EncodedEdgeMap(codec.EdgeScheme(scheme), width, height, body)
        return codec.decode_edges(enc), False
    except (MalformedStream, LengthMismatch, IndexOutOfRange, LengthNotMultipleOf3):
        # corrupted beyond parsing: carry on with an empty visual prompt
        return EdgeMap(np.zeros((height, width), dtype=bool)), True


def receive(
    frames: dict[str, bytes],
    cfg: ExperimentConfig,
    kb: KnowledgeBase,
    provider: MultimodalProvider,
    doc_index: Optional[InvertedIndex] = None,
    seed: int = 0,
) -> ReceiveOutcome:
    fec = _fec_scheme(cfg)
    text_frame = chan.frame_decode(frames["text"])
    edge_frame = chan.frame_decode(frames["edge"])
    caption = _decode_caption(text_frame, fec)
    edge_map, edge_failed = _decode_edge(edge_frame, fec)

    reviewer = None
    if cfg.use_reviewer and cfg.service_url:
        reviewer = http_reviewer(cfg.service_url, timeout_s=cfg.timeout_s)

    bundle = RetrievalBundle()
    if cfg.rag_text and len(kb.entries(Modality.DOCUMENT)):
        if doc_index is None:
            doc_index = build_document_index(kb)
        docs = retrieve_with_stop_exploration(
            kb,
            Query(QueryMode.SPARSE, text=caption, k=cfg.max_keep),
            cfg.rounds_max,
            cfg.epsilon,
            cfg.k_per_round,
            index=doc_index,
            min_score=cfg.min_score,
            max_keep=cfg.max_keep,
            reviewer=reviewer,
            bm25_k1=cfg.bm25_k1,
            bm25_b=cfg.bm25_b,
        )
        bundle.documents = docs.documents
        bundle.rounds_used = docs.rounds_used
        bundle.stopped_early = docs.stopped_early
    if cfg.rag_image and len(kb.entries(Modality.IMAGE)):
        images = retrieve_with_stop_exploration(
            kb,
            Query(
                QueryMode.CROSS_MODAL,
                text=caption,
                text_embedding=provider.embed_text(caption),
                k=cfg.max_keep,
            ),
            cfg.rounds_max,
            cfg.epsilon,
            cfg.k_per_round,
            min_score=cfg.min_score,
            max_keep=cfg.max_keep,
            reviewer=reviewer,
        )
        bundle.images = images.images
        bundle.rounds_used = max(bundle.rounds_used, images.rounds_used)
        bundle.stopped_early = bundle.stopped_early or images.stopped_early

    prompt = enhance_prompt(
        caption, bundle, kb, cfg.char_budget, cfg.max_reference_images
    )
    reference_paths = []
    for entry_id in prompt.reference_image_ids:
        entry = kb.maybe_get(entry_id)
        if entry is not None and entry.image_path:
            reference_paths.append(entry.image_path)

    request = GenerationRequest(
        text_prompt=prompt.text_prompt,
        edge_map=edge_map,
        reference_images=reference_paths,
        seed=seed,
        steps=cfg.steps,
    )
    result = generate(
        request,
        backend=cfg.backend,
        service_url=cfg.service_url,
        timeout_s=cfg.timeout_s,
        fallback_to_stub=cfg.fallback_to_stub,
    )
    return ReceiveOutcome(
        result=result,
        report=None,
        caption=caption,
        edge_map=edge_map,
        edge_decode_failed=edge_failed,
        bundle=bundle,
        prompt=prompt,
    )


def build_document_index(kb: KnowledgeBase) -> InvertedIndex:
    corpus = {e.id: e.text for e in kb.entries(Modality.DOCUMENT) if e.text}
    return build_inverted_index(corpus)


def evaluate(
    source: RasterImage,
    record: TransmissionRecord,
    result: ReconstructionResult,
    provider: MultimodalProvider,
) -> MetricsReport:
    clean_edge = chan.frame_decode(record.frames["edge"]).payload
    received_edge = chan.frame_decode(record.corrupted_frames["edge"]).payload
    transmitted = sum(len(f) for f in record.frames.values())
    return MetricsReport(
        ms_ssim=ms_ssim(result.image, source),
        clip_similarity=clip_similarity(
            provider.embed_image(result.image), provider.embed_image(source)
        ),
        measured_ber=measured_ber(clean_edge, received_edge),
        compression_ratio=compression_ratio(record.source_bytes, transmitted),
    )


# --- experiment driver -------------------------------------------------------


@dataclass
class RunResult:
    row: dict
    record: Optional[TransmissionRecord] = None
    outcome: Optional[ReceiveOutcome] = None


def run_single(
    source: RasterImage,
    cfg: ExperimentConfig,
    kb: KnowledgeBase,
    provider: MultimodalProvider,
    ber: float,
    seed: int,
    config_id: str,
    doc_index: Optional[InvertedIndex] = None,
    channel_seed: Optional[int] = None,
) -> RunResult:
    # the CSV reports the operator-visible seed; corruption uses the derived
    # per-run stream seed so parallel run order cannot change results
    stream_seed = seed if channel_seed is None else channel_seed
    record = transmit(source, cfg, kb, provider, ber, stream_seed)

    if record.cache_hit:
        cached = kb.cache_lookup(record.content_hash)
        report = cached.metrics
        row = _row(config_id, ber, seed, cfg, report, degraded=False, error="")
        return RunResult(row, record, None)

    outcome = receive(record.corrupted_frames, cfg, kb, provider, doc_index, stream_seed)
    report = evaluate(source, record, outcome.result, provider)
    outcome.report = report

    if cfg.use_cache:
        kb.cache_put(
            CacheRecord(
                content_hash=record.content_hash,
                frames=[record.frames["text"], record.frames["edge"]],
                reconstruction=outcome.result.image,
                metrics=report,
            )
        )

    degraded = outcome.edge_decode_failed or outcome.result.degraded
    row = _row(config_id, ber, seed, cfg, report, degraded, error="")
    return RunResult(row, record, outcome)


def _row(config_id, ber, seed, cfg, report, degraded, error) -> dict:
    def fmt(x):
        return "" if x is None else str(x)

    return {
        "config_id": config_id,
        "ber": str(ber),
        "seed": str(seed),
        "rag_text": str(int(cfg.rag_text)),
        "rag_image": str(int(cfg.rag_image)),
        "ms_ssim": fmt(report.ms_ssim if report else None),
        "clip_similarity": fmt(report.clip_similarity if report else None),
        "measured_ber": fmt(report.measured_ber if report else None),
        "compression_ratio": fmt(report.compression_ratio if report else None),
        "lpips": fmt(report.lpips if report else None),
        "pieapp": fmt(report.pieapp if report else None),
        "degraded": str(int(degraded)),
        "error": error,
    }


def run_experiment(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """Execute the sweep; returns (data rows, summary rows) and writes the CSV."""
    provider = make_provider(cfg)
    kb = KnowledgeBase.load(cfg.kb_path) if cfg.kb_path else KnowledgeBase()
    doc_index = build_document_index(kb)
    sources = [(path, load_image(path)) for path in cfg.inputs]

    grid = ABLATION_GRID if cfg.ablation else [(cfg.rag_text, cfg.rag_image)]
    rows: list[dict] = []
    for image_idx, (path, source) in enumerate(sources):
        for config_idx, (rag_text, rag_image) in enumerate(grid):
            run_cfg = replace(cfg, rag_text=rag_text, rag_image=rag_image, ablation=False)
            config_id = CONFIG_NAMES[(rag_text, rag_image)]
            for ber_idx, ber in enumerate(cfg.ber_sweep):
                for seed in cfg.seeds:
                    channel_seed = chan.derive_seed(seed, ber_idx, config_idx, image_idx)
                    try:
                        result = run_single(
                            source, run_cfg, kb, provider, ber, seed, config_id,
                            doc_index, channel_seed=channel_seed,
                        )
                        rows.append(result.row)
                    except RagSemComError as exc:
                        rows.append(
                            _row(config_id, ber, seed, run_cfg, None, False,
                                 f"{type(exc).__name__}: {exc}")
                        )
    summary = summarize(rows)
    if cfg.output_csv:
        write_csv(cfg.output_csv, rows, summary)
    return rows, summary


SUMMARY_COLUMNS = [
    "config_id", "ber", "rag_text", "rag_image", "n",
    "ms_ssim_mean", "ms_ssim_std",
    "clip_similarity_mean", "clip_similarity_std",
    "measured_ber_mean", "measured_ber_std",
    "compression_ratio_mean", "compression_ratio_std",
    "degraded_rate",
]


def summarize(rows: list[dict]) -> list[dict]:
    cells: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for row in rows:
        if row["error"]:
            continue
        key = (row["config_id"], row["ber"], row["rag_text"], row["rag_image"])
        if key not in cells:
            cells[key] = []
            order.append(key)
        cells[key].append(row)

    out = []
    for key in order:
        group = cells[key]

        def stats(column):
            vals = np.array([float(r[column]) for r in group if r[column] != ""])
            if not len(vals):
                return "", ""
            return str(float(vals.mean())), str(float(vals.std()))

        entry = {
            "config_id": key[0],
            "ber": key[1],
            "rag_text": key[2],
            "rag_image": key[3],
            "n": str(len(group)),
        }
        for col in ("ms_ssim", "clip_similarity", "measured_ber", "compression_ratio"):
            mean, std = stats(col)
            entry[f"{col}_mean"] = mean
            entry[f"{col}_std"] = std
        entry["degraded_rate"] = str(
            sum(int(r["degraded"]) for r in group) / len(group)
        )
        out.append(entry)
    return out


def render_csv(rows: list[dict], summary: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    buf.write("# summary\n")
    sw = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    sw.writeheader()
    sw.writerows(summary)
    return buf.getvalue()


def write_csv(path: str | Path, rows: list[dict], summary: list[dict]) -> None:
    Path(path).write_text(render_csv(rows, summary), encoding="utf-8")
