"""Command-line interface: transmit, receive, experiment, kb."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import _kernels
from .genclient import Backend
from .image import load_image, save_image
from .knowledge import KnowledgeBase, KnowledgeEntry, Modality
from .pipeline import (
    ExperimentConfig,
    build_document_index,
    evaluate,
    load_config,
    make_provider,
    receive,
    run_experiment,
    transmit,
)


@click.group()
@click.version_option(package_name="ragsemcom")
def main():
    """Retrieval-augmented semantic communication simulator."""


def _load_kb(path: str | None) -> KnowledgeBase:
    if path and Path(path).exists():
        return KnowledgeBase.load(path)
    return KnowledgeBase()


@main.command("transmit")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ber", default=0.0, type=float, show_default=True)
@click.option("--seed", default=1, type=int, show_default=True)
@click.option("--kb", "kb_path", default=None, type=click.Path())
@click.option("--protect-text/--no-protect-text", default=True, show_default=True)
@click.option("--use-cache/--no-use-cache", default=True, show_default=True)
@click.option("--canny-low", default=100.0, type=float, show_default=True)
@click.option("--canny-high", default=200.0, type=float, show_default=True)
@click.option("--canny-sigma", default=1.4, type=float, show_default=True)
def transmit_cmd(input_path, out_dir, ber, seed, kb_path, protect_text, use_cache,
                 canny_low, canny_high, canny_sigma):
    """Encode an image into TEXT+EDGE frames and push them through the channel."""
    cfg = ExperimentConfig(
        inputs=[input_path],
        protect_text=protect_text,
        use_cache=use_cache,
        canny_low=canny_low,
        canny_high=canny_high,
        canny_sigma=canny_sigma,
    )
    kb = _load_kb(kb_path)
    provider = make_provider(cfg)
    image = load_image(input_path)
    record = transmit(image, cfg, kb, provider, ber, seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "text.frame").write_bytes(record.corrupted_frames["text"])
    (out / "edge.frame").write_bytes(record.corrupted_frames["edge"])
    (out / "text.sent.frame").write_bytes(record.frames["text"])
    (out / "edge.sent.frame").write_bytes(record.frames["edge"])
    click.echo(
        json.dumps(
            {
                "content_hash": record.content_hash.hex(),
                "caption": record.caption,
                "encoded_sizes": record.encoded_sizes,
                "source_bytes": record.source_bytes,
                "cache_hit": record.cache_hit,
                "kernel_lane": _kernels.lane(),
            },
            indent=2,
        )
    )


@main.command("receive")
@click.option("--frames", "frames_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default="reconstruction.png", type=click.Path())
@click.option("--kb", "kb_path", default=None, type=click.Path())
@click.option("--source", "source_path", default=None, type=click.Path(exists=True))
@click.option("--backend", default="stub", type=click.Choice(["stub", "service"]))
@click.option("--service-url", default=None)
@click.option("--provider", default="mock", type=click.Choice(["mock", "service"]))
@click.option("--rag-text/--no-rag-text", default=True, show_default=True)
@click.option("--rag-image/--no-rag-image", default=True, show_default=True)
@click.option("--seed", default=1, type=int, show_default=True)
@click.option("--char-budget", default=4000, type=int, show_default=True)
def receive_cmd(frames_dir, out_path, kb_path, source_path, backend, service_url,
                provider, rag_text, rag_image, seed, char_budget):
    """Decode received frames, retrieve, reconstruct, and optionally score."""
    cfg = ExperimentConfig(
        backend=Backend(backend),
        service_url=service_url,
        provider=provider,
        rag_text=rag_text,
        rag_image=rag_image,
        char_budget=char_budget,
    )
    kb = _load_kb(kb_path)
    prov = make_provider(cfg)
    frames_path = Path(frames_dir)
    frames = {
        "text": (frames_path / "text.frame").read_bytes(),
        "edge": (frames_path / "edge.frame").read_bytes(),
    }
    outcome = receive(frames, cfg, kb, prov, seed=seed)
    save_image(outcome.result.image, out_path)

    summary = {
        "reconstruction": str(out_path),
        "caption": outcome.caption,
        "prompt": outcome.prompt.text_prompt if outcome.prompt else None,
        "edge_decode_failed": outcome.edge_decode_failed,
        "generator_id": outcome.result.generator_id,
        "rounds_used": outcome.bundle.rounds_used,
    }
    if source_path:
        sent = {
            "text": (frames_path / "text.sent.frame").read_bytes(),
            "edge": (frames_path / "edge.sent.frame").read_bytes(),
        }
        from .pipeline import TransmissionRecord

        source = load_image(source_path)
        record = TransmissionRecord(
            content_hash=b"\x00" * 32,
            caption=outcome.caption,
            edge_map=outcome.edge_map,
            frames=sent,
            corrupted_frames=frames,
            encoded_sizes={k: len(v) for k, v in sent.items()},
            source_bytes=source.byte_size,
        )
        report = evaluate(source, record, outcome.result, prov)
        summary["metrics"] = report.to_dict()
    click.echo(json.dumps(summary, indent=2))


@main.command("experiment")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--input", "inputs", multiple=True, type=click.Path(exists=True))
@click.option("--kb", "kb_path", default=None, type=click.Path())
@click.option("--output-csv", default=None, type=click.Path())
@click.option("--ber-sweep", default=None, help="comma-separated BER list")
@click.option("--seeds", default=None, help="comma-separated seed list")
@click.option("--ablation/--no-ablation", default=None)
@click.option("--rag-text/--no-rag-text", default=None)
@click.option("--rag-image/--no-rag-image", default=None)
@click.option("--backend", default=None, type=click.Choice(["stub", "service"]))
@click.option("--service-url", default=None)
@click.option("--provider", default=None, type=click.Choice(["mock", "service"]))
def experiment_cmd(config_path, inputs, kb_path, output_csv, ber_sweep, seeds,
                   ablation, rag_text, rag_image, backend, service_url, provider):
    """Run a BER sweep / RAG ablation and write one CSV."""
    overrides = {
        "kb_path": kb_path,
        "output_csv": output_csv,
        "ablation": ablation,
        "rag_text": rag_text,
        "rag_image": rag_image,
        "backend": Backend(backend) if backend else None,
        "service_url": service_url,
        "provider": provider,
    }
    if inputs:
        overrides["inputs"] = list(inputs)
    if ber_sweep:
        overrides["ber_sweep"] = [float(v) for v in ber_sweep.split(",")]
    if seeds:
        overrides["seeds"] = [int(v) for v in seeds.split(",")]

    if config_path:
        cfg = load_config(config_path, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    if not cfg.inputs:
        click.echo("no input images configured", err=True)
        sys.exit(2)
    rows, summary = run_experiment(cfg)
    errors = sum(1 for r in rows if r["error"])
    click.echo(
        json.dumps(
            {
                "output_csv": cfg.output_csv,
                "rows": len(rows),
                "summary_cells": len(summary),
                "errors": errors,
                "kernel_lane": _kernels.lane(),
            },
            indent=2,
        )
    )


@main.group("kb")
def kb_group():
    """Knowledge base maintenance."""


@kb_group.command("insert")
@click.option("--store", required=True, type=click.Path())
@click.option("--id", "entry_id", required=True)
@click.option("--document", "document_text", default=None)
@click.option("--image", "image_path", default=None, type=click.Path(exists=True))
@click.option("--caption", default=None, help="caption text stored with an image entry")
@click.option("--tags", default="", help="comma-separated tags")
@click.option("--provider", default="mock", type=click.Choice(["mock", "service"]))
@click.option("--service-url", default=None)
def kb_insert_cmd(store, entry_id, document_text, image_path, caption, tags,
                  provider, service_url):
    """Insert a document or image entry (embeddings computed by the provider)."""
    if bool(document_text) == bool(image_path):
        click.echo("provide exactly one of --document or --image", err=True)
        sys.exit(2)
    cfg = ExperimentConfig(provider=provider, service_url=service_url)
    prov = make_provider(cfg)
    kb = _load_kb(store)
    tag_list = [t for t in tags.split(",") if t]
    if document_text:
        entry = KnowledgeEntry(
            id=entry_id,
            modality=Modality.DOCUMENT,
            text=document_text,
            text_embedding=prov.embed_text(document_text),
            tags=tag_list,
        )
    else:
        image = load_image(image_path)
        text = caption if caption is not None else prov.caption(image)
        entry = KnowledgeEntry(
            id=entry_id,
            modality=Modality.IMAGE,
            text=text,
            image_path=image_path,
            text_embedding=prov.embed_text(text),
            image_embedding=prov.embed_image(image),
            tags=tag_list,
        )
    kb.insert(entry)
    kb.persist(store)
    click.echo(f"inserted {entry_id} ({entry.modality.value}); store now has {len(kb)} entries")


@kb_group.command("list")
@click.option("--store", required=True, type=click.Path(exists=True))
def kb_list_cmd(store):
    """Print every entry as one JSON line."""
    kb = KnowledgeBase.load(store)
    for entry in kb.entries():
        click.echo(
            json.dumps(
                {
                    "id": entry.id,
                    "modality": entry.modality.value,
                    "text": (entry.text[:80] if entry.text else None),
                    "image_path": entry.image_path,
                    "tags": entry.tags,
                }
            )
        )


@kb_group.command("persist")
@click.option("--store", required=True, type=click.Path(exists=True))
@click.option("--to", "target", required=True, type=click.Path())
def kb_persist_cmd(store, target):
    """Re-persist a store to a new location (validates the checksum)."""
    kb = KnowledgeBase.load(store)
    kb.persist(target)
    click.echo(f"persisted {len(kb)} entries to {target}")


if __name__ == "__main__":
    main()
