"""CLI: transmit/receive round-trip, kb maintenance, experiment runs."""

import json

import pytest
from click.testing import CliRunner

from ragsemcom.cli import main
from ragsemcom.image import load_image, save_image
from ragsemcom.knowledge import KnowledgeBase

from conftest import synthetic_photo


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def src_png(tmp_path):
    path = tmp_path / "src.png"
    save_image(synthetic_photo(1, size=192), path)
    return path


def test_transmit_then_receive(runner, tmp_path, src_png):
    frames = tmp_path / "frames"
    result = runner.invoke(main, [
        "transmit", "--input", str(src_png), "--out", str(frames),
        "--ber", "0", "--seed", "1",
    ])
    assert result.exit_code == 0, result.output
    info = json.loads(result.output)
    assert info["cache_hit"] is False
    assert (frames / "text.frame").exists()
    assert (frames / "edge.frame").exists()

    recon = tmp_path / "recon.png"
    result = runner.invoke(main, [
        "receive", "--frames", str(frames), "--out", str(recon),
        "--source", str(src_png), "--no-rag-text", "--no-rag-image",
    ])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    assert summary["edge_decode_failed"] is False
    assert 0.0 <= summary["metrics"]["ms_ssim"] <= 1.0
    assert recon.exists()
    assert load_image(recon).width == 192


def test_kb_insert_list_persist(runner, tmp_path, src_png):
    store = tmp_path / "store"
    result = runner.invoke(main, [
        "kb", "insert", "--store", str(store), "--id", "doc1",
        "--document", "a stone bridge over west lake with pedestrians",
        "--tags", "scene,bridge",
    ])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, [
        "kb", "insert", "--store", str(store), "--id", "img1",
        "--image", str(src_png),
    ])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, ["kb", "list", "--store", str(store)])
    assert result.exit_code == 0
    lines = [json.loads(line) for line in result.output.strip().splitlines()]
    assert {e["id"] for e in lines} == {"doc1", "img1"}

    target = tmp_path / "copy"
    result = runner.invoke(main, [
        "kb", "persist", "--store", str(store), "--to", str(target),
    ])
    assert result.exit_code == 0
    assert len(KnowledgeBase.load(target)) == 2


def test_kb_insert_requires_one_kind(runner, tmp_path):
    result = runner.invoke(main, [
        "kb", "insert", "--store", str(tmp_path / "s"), "--id", "x",
    ])
    assert result.exit_code == 2


def test_experiment_with_config_file(runner, tmp_path, src_png):
    store = tmp_path / "store"
    runner.invoke(main, [
        "kb", "insert", "--store", str(store), "--id", "img1",
        "--image", str(src_png),
    ])
    cfg = tmp_path / "exp.cfg"
    out_csv = tmp_path / "out.csv"
    cfg.write_text(
        f"inputs = {src_png}\n"
        f"kb_path = {store}\n"
        f"output_csv = {out_csv}\n"
        "ber_sweep = 0.0\n"
        "seeds = 1\n"
        "ablation = true\n"
    )
    result = runner.invoke(main, ["experiment", "--config", str(cfg)])
    assert result.exit_code == 0, result.output
    info = json.loads(result.output)
    assert info["rows"] == 4
    assert info["errors"] == 0
    content = out_csv.read_text()
    assert content.startswith("config_id,")
    assert "# summary" in content


def test_experiment_without_inputs_fails(runner):
    result = runner.invoke(main, ["experiment"])
    assert result.exit_code == 2
