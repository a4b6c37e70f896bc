"""End-to-end pipeline: transmit/receive behaviour, cache, experiment CSV."""

import numpy as np
import pytest

import ragsemcom.pipeline as pl
from ragsemcom.channel import FrameKind, frame_decode
from ragsemcom.genclient import Backend
from ragsemcom.image import save_image
from ragsemcom.knowledge import KnowledgeBase
from ragsemcom.metrics import ms_ssim
from ragsemcom.pipeline import (
    ExperimentConfig,
    evaluate,
    load_config,
    parse_config_file,
    receive,
    run_experiment,
    run_single,
    transmit,
)
from ragsemcom.provider import MockProvider

from conftest import build_topical_kb, synthetic_photo


@pytest.fixture
def provider():
    return MockProvider()


@pytest.fixture
def source():
    return synthetic_photo(1, size=192)


@pytest.fixture
def kb(tmp_path, provider, source):
    images = {"src": source, "other1": synthetic_photo(2, 192), "other2": synthetic_photo(3, 192)}
    return build_topical_kb(tmp_path, provider, images)


class TestTransmit:
    def test_produces_two_frames(self, source, provider):
        cfg = ExperimentConfig()
        record = transmit(source, cfg, KnowledgeBase(), provider, 0.0, 1)
        text = frame_decode(record.frames["text"])
        edge = frame_decode(record.frames["edge"])
        assert text.kind == FrameKind.TEXT
        assert edge.kind == FrameKind.EDGE
        assert edge.meta[:2] == (192, 192)

    def test_frame_sizes_bookkeeping(self, source, provider):
        cfg = ExperimentConfig()
        record = transmit(source, cfg, KnowledgeBase(), provider, 0.0, 1)
        assert record.encoded_sizes["text"] == len(record.frames["text"])
        assert record.encoded_sizes["edge"] == len(record.frames["edge"])
        assert record.source_bytes == 192 * 192 * 3

    def test_protected_text_keeps_integrity(self, source, provider):
        cfg = ExperimentConfig(protect_text=True)
        record = transmit(source, cfg, KnowledgeBase(), provider, 0.1, 3)
        assert frame_decode(record.corrupted_frames["text"]).integrity
        assert not frame_decode(record.corrupted_frames["edge"]).integrity

    def test_unprotected_text_gets_hit(self, source, provider):
        cfg = ExperimentConfig(protect_text=False)
        record = transmit(source, cfg, KnowledgeBase(), provider, 0.1, 3)
        assert not frame_decode(record.corrupted_frames["text"]).integrity

    def test_corruption_deterministic_in_seed(self, source, provider):
        cfg = ExperimentConfig()
        a = transmit(source, cfg, KnowledgeBase(), provider, 0.01, 7)
        b = transmit(source, cfg, KnowledgeBase(), provider, 0.01, 7)
        c = transmit(source, cfg, KnowledgeBase(), provider, 0.01, 8)
        assert a.corrupted_frames == b.corrupted_frames
        assert a.corrupted_frames != c.corrupted_frames


class TestReceive:
    def test_perfect_channel_with_source_in_kb(self, source, provider, kb):
        cfg = ExperimentConfig(rag_text=True, rag_image=True)
        record = transmit(source, cfg, kb, provider, 0.0, 1)
        outcome = receive(record.corrupted_frames, cfg, kb, provider, seed=1)
        report = evaluate(source, record, outcome.result, provider)
        assert report.ms_ssim == pytest.approx(1.0, abs=1e-9)
        assert report.clip_similarity == pytest.approx(1.0, abs=1e-6)
        assert report.measured_ber == 0.0

    def test_rag_off_prompt_is_caption(self, source, provider, kb):
        cfg = ExperimentConfig(rag_text=False, rag_image=False)
        record = transmit(source, cfg, kb, provider, 0.0, 1)
        outcome = receive(record.corrupted_frames, cfg, kb, provider, seed=1)
        assert outcome.prompt.text_prompt == record.caption
        assert outcome.bundle.documents == []
        assert outcome.bundle.images == []

    def test_rag_text_enriches_prompt(self, source, provider, kb):
        cfg = ExperimentConfig(rag_text=True, rag_image=False)
        record = transmit(source, cfg, kb, provider, 0.0, 1)
        outcome = receive(record.corrupted_frames, cfg, kb, provider, seed=1)
        assert " Context: " in outcome.prompt.text_prompt
        assert outcome.prompt.text_prompt.startswith(record.caption)

    def test_high_ber_degrades_edge_for_every_realization(self, provider):
        # 512x512 edge payload at p=0.1: decode failure is statistically
        # certain for every seed (thousands of expected bit flips)
        import ragsemcom.channel as chan

        big = synthetic_photo(4, size=512)
        cfg = ExperimentConfig()
        record = transmit(big, cfg, KnowledgeBase(), provider, 0.0, 1)
        degraded = 0
        for seed in range(50):
            corrupted = dict(record.frames)
            corrupted["edge"] = chan.corrupt_frame(record.frames["edge"], 0.1, seed ^ 1)
            outcome = receive(corrupted, cfg, KnowledgeBase(), provider, seed=seed)
            degraded += outcome.edge_decode_failed
        assert degraded == 50

    def test_degraded_edge_map_is_all_zero(self, source, provider):
        import ragsemcom.channel as chan

        cfg = ExperimentConfig()
        record = transmit(source, cfg, KnowledgeBase(), provider, 0.0, 1)
        corrupted = dict(record.frames)
        corrupted["edge"] = chan.corrupt_frame(record.frames["edge"], 0.1, 99)
        outcome = receive(corrupted, cfg, KnowledgeBase(), provider, seed=1)
        if outcome.edge_decode_failed:
            assert outcome.edge_map.set_count == 0
            assert (outcome.edge_map.width, outcome.edge_map.height) == (192, 192)

    def test_compression_ratio_floor_on_photo(self, provider):
        big = synthetic_photo(5, size=512)
        cfg = ExperimentConfig()
        record = transmit(big, cfg, KnowledgeBase(), provider, 0.0, 1)
        outcome = receive(record.corrupted_frames, cfg, KnowledgeBase(), provider, seed=1)
        report = evaluate(big, record, outcome.result, provider)
        assert report.compression_ratio > 20


class TestCache:
    def test_second_transmission_skips_generation(self, source, provider, kb, monkeypatch):
        calls = {"n": 0}
        real_generate = pl.generate

        def counting_generate(*args, **kwargs):
            calls["n"] += 1
            return real_generate(*args, **kwargs)

        monkeypatch.setattr(pl, "generate", counting_generate)
        cfg = ExperimentConfig(use_cache=True, rag_image=True, rag_text=False)

        first = run_single(source, cfg, kb, provider, 0.0, 1, "full_rag")
        assert calls["n"] == 1
        assert not first.record.cache_hit

        second = run_single(source, cfg, kb, provider, 0.0, 1, "full_rag")
        assert calls["n"] == 1  # generator untouched on the cache hit
        assert second.record.cache_hit

        # byte-identical reconstruction on the hit
        cached = kb.cache_lookup(second.record.content_hash)
        assert cached.load_reconstruction() == first.outcome.result.image

    def test_cache_disabled_by_default(self, source, provider, kb):
        cfg = ExperimentConfig()
        run_single(source, cfg, kb, provider, 0.0, 1, "full_rag")
        assert kb.cache_lookup(
            transmit(source, cfg, kb, provider, 0.0, 1).content_hash
        ) is None


class TestExperiment:
    def test_row_count_single_cell(self, tmp_path, source):
        src = tmp_path / "src.png"
        save_image(source, src)
        cfg = ExperimentConfig(
            inputs=[str(src)], seeds=[1], ber_sweep=[0.0],
            output_csv=str(tmp_path / "out.csv"),
        )
        rows, summary = run_experiment(cfg)
        assert len(rows) == 1
        assert len(summary) == 1
        assert rows[0]["error"] == ""

    def test_ablation_grid_in_summary(self, tmp_path, source, provider):
        src = tmp_path / "src.png"
        save_image(source, src)
        kb = build_topical_kb(tmp_path, provider, {"src": source})
        kb_dir = tmp_path / "kb"
        kb.persist(kb_dir)
        cfg = ExperimentConfig(
            inputs=[str(src)], kb_path=str(kb_dir), ablation=True,
            seeds=[1, 2], ber_sweep=[1e-4],
            output_csv=str(tmp_path / "ablation.csv"),
        )
        rows, summary = run_experiment(cfg)
        assert len(rows) == 8  # 4 configs x 2 seeds
        assert [s["config_id"] for s in summary] == [
            "no_rag", "text_rag", "image_rag", "full_rag"
        ]
        flags = {(s["rag_text"], s["rag_image"]) for s in summary}
        assert flags == {("0", "0"), ("1", "0"), ("0", "1"), ("1", "1")}

    def test_csv_deterministic_across_runs(self, tmp_path, source, provider):
        src = tmp_path / "src.png"
        save_image(source, src)
        kb = build_topical_kb(tmp_path, provider, {"src": source})
        kb_dir = tmp_path / "kb"
        kb.persist(kb_dir)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        base = dict(
            inputs=[str(src)], kb_path=str(kb_dir), ablation=True,
            seeds=[1, 2, 3], ber_sweep=[0.0, 1e-2],
        )
        run_experiment(ExperimentConfig(output_csv=str(out1), **base))
        run_experiment(ExperimentConfig(output_csv=str(out2), **base))
        assert out1.read_bytes() == out2.read_bytes()

    def test_csv_columns(self, tmp_path, source):
        src = tmp_path / "src.png"
        save_image(source, src)
        out = tmp_path / "cols.csv"
        cfg = ExperimentConfig(inputs=[str(src)], output_csv=str(out))
        run_experiment(cfg)
        header = out.read_text().splitlines()[0]
        assert header == (
            "config_id,ber,seed,rag_text,rag_image,ms_ssim,clip_similarity,"
            "measured_ber,compression_ratio,lpips,pieapp,degraded,error"
        )
        assert "# summary" in out.read_text()

    def test_image_rag_dominates_no_rag(self, tmp_path, source, provider):
        # with the source image in the KB, reference-guided reconstruction
        # beats the no-RAG edge render at every BER
        src = tmp_path / "src.png"
        save_image(source, src)
        kb = build_topical_kb(tmp_path, provider, {"src": source})
        kb_dir = tmp_path / "kb"
        kb.persist(kb_dir)
        cfg = ExperimentConfig(
            inputs=[str(src)], kb_path=str(kb_dir), ablation=True,
            seeds=[1, 2], ber_sweep=[0.0, 1e-3, 1e-2, 1e-1],
            output_csv="",
        )
        rows, _ = run_experiment(cfg)
        by_key = {}
        for r in rows:
            by_key[(r["config_id"], r["ber"], r["seed"])] = float(r["ms_ssim"])
        for ber in ("0.0", "0.001", "0.01", "0.1"):
            for seed in ("1", "2"):
                for image_cfg in ("image_rag", "full_rag"):
                    assert by_key[(image_cfg, ber, seed)] >= by_key[("no_rag", ber, seed)]


class TestFec:
    def test_repetition3_triples_payloads(self, source, provider):
        plain = transmit(source, ExperimentConfig(), KnowledgeBase(), provider, 0.0, 1)
        coded = transmit(
            source, ExperimentConfig(fec="repetition3"), KnowledgeBase(), provider, 0.0, 1
        )
        plain_payload = frame_decode(plain.frames["edge"]).payload
        coded_payload = frame_decode(coded.frames["edge"]).payload
        assert len(coded_payload) == 3 * len(plain_payload)

    def test_repetition3_survives_moderate_ber(self, source, provider):
        # at p=1e-3 the uncoded stream usually breaks; repetition-3 repairs
        # nearly every realization
        cfg = ExperimentConfig(fec="repetition3")
        record = transmit(source, cfg, KnowledgeBase(), provider, 0.0, 1)
        import ragsemcom.channel as chan

        repaired = 0
        for seed in range(20):
            frames = dict(record.frames)
            frames["edge"] = chan.corrupt_frame(record.frames["edge"], 1e-3, seed ^ 1)
            outcome = receive(frames, cfg, kb=KnowledgeBase(), provider=provider, seed=seed)
            repaired += not outcome.edge_decode_failed
        assert repaired >= 18

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(fec="turbo")

    def test_channel_config_mirrors_fields(self):
        from ragsemcom.channel import FecScheme

        cfg = ExperimentConfig(protect_text=False, fec="repetition3")
        ch = cfg.channel_config(0.01, 9)
        assert ch.ber == 0.01
        assert ch.seed == 9
        assert ch.protect_text is False
        assert ch.fec == FecScheme.REPETITION3


class TestErrorRows:
    def test_failed_run_recorded_and_sweep_continues(self, tmp_path, provider):
        # protect_text=false at heavy BER makes the caption undecodable,
        # which is the one fatal receive path; the driver must log it and
        # keep going
        src = tmp_path / "src.png"
        save_image(synthetic_photo(8, size=192), src)
        cfg = ExperimentConfig(
            inputs=[str(src)], protect_text=False,
            ber_sweep=[0.0, 0.1], seeds=[1, 2, 3],
            rag_text=False, rag_image=False,
            output_csv=str(tmp_path / "err.csv"),
        )
        rows, summary = run_experiment(cfg)
        assert len(rows) == 6
        clean = [r for r in rows if r["error"] == ""]
        failed = [r for r in rows if r["error"]]
        assert all(r["ber"] == "0.0" for r in clean[:3])
        assert failed, "expected at least one caption-loss failure at ber=0.1"
        for row in failed:
            assert row["ms_ssim"] == ""
            assert "MalformedStream" in row["error"] or "Malformed" in row["error"]
        # summary only aggregates clean rows
        assert all(s["n"] for s in summary)


class TestConfigFile:
    def test_parse_round_trip(self, tmp_path):
        text = """
# experiment configuration
inputs = a.png, b.png
ber_sweep = 0.0, 0.001, 0.01
seeds = 1, 2, 3
rag_text = true
rag_image = false
ablation = false
epsilon = 0.25
rounds_max = 4
char_budget = 512
backend = stub
output_csv = run.csv
"""
        path = tmp_path / "exp.cfg"
        path.write_text(text)
        values = parse_config_file(path)
        assert values["inputs"] == ["a.png", "b.png"]
        assert values["ber_sweep"] == [0.0, 0.001, 0.01]
        assert values["seeds"] == [1, 2, 3]
        assert values["rag_text"] is True
        assert values["rag_image"] is False
        assert values["epsilon"] == 0.25
        assert values["rounds_max"] == 4
        assert values["backend"] == Backend.STUB

    def test_load_config_with_overrides(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seeds = 5\nchar_budget = 100\n")
        cfg = load_config(path, char_budget=256)
        assert cfg.seeds == [5]
        assert cfg.char_budget == 256

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("this is not a key value line\n")
        with pytest.raises(ValueError):
            parse_config_file(path)

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(ber_sweep=[0.7])
        with pytest.raises(ValueError):
            ExperimentConfig(seeds=[])
