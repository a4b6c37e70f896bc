"""Generator client: stub determinism and service protocol round-trips
against recorded fixtures (no live server)."""

import base64
import json
from pathlib import Path

import numpy as np
import pytest

from ragsemcom.errors import MalformedResponse, ServiceUnavailable
from ragsemcom.genclient import (
    Backend,
    GenerationRequest,
    generate,
    generate_service,
    generate_stub,
    marshal_request,
    render_edge_map,
    unmarshal_response,
)
from ragsemcom.image import EdgeMap, decode_png, save_image
from ragsemcom.metrics import ms_ssim

from conftest import synthetic_photo

FIXTURES = Path(__file__).parent / "fixtures"


def small_edge_map() -> EdgeMap:
    bits = np.zeros((64, 64), dtype=bool)
    bits[10, 5:60] = True
    bits[40:50, 30] = True
    return EdgeMap(bits)


class TestStub:
    def test_edge_render_without_references(self):
        edge = small_edge_map()
        result = generate_stub(GenerationRequest("p", edge))
        assert result.generator_id == "stub-v1"
        expected = np.where(edge.bits, 255, 0).astype(np.uint8)
        assert np.array_equal(result.image.data, expected)

    def test_reference_identity_gives_perfect_msssim(self, tmp_path):
        source = synthetic_photo(60, size=192)
        path = tmp_path / "src.png"
        save_image(source, path)
        req = GenerationRequest(
            "p", small_edge_map(), reference_images=[str(path)],
            output_size=(192, 192),
        )
        result = generate_stub(req)
        assert result.image == source
        assert ms_ssim(result.image, source) == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self, tmp_path):
        source = synthetic_photo(61, size=64)
        path = tmp_path / "ref.png"
        save_image(source, path)
        req = GenerationRequest(
            "p", small_edge_map(), reference_images=[str(path)], seed=5
        )
        a = generate_stub(req)
        b = generate_stub(req)
        assert a.image == b.image

    def test_output_size_honored(self):
        req = GenerationRequest("p", small_edge_map(), output_size=(32, 16))
        result = generate_stub(req)
        assert (result.image.width, result.image.height) == (32, 16)

    def test_same_size_render_is_identity_mapping(self):
        edge = small_edge_map()
        rendered = render_edge_map(edge, 64, 64)
        assert np.array_equal(rendered.data == 255, edge.bits)


class TestServiceProtocol:
    def test_marshal_matches_recorded_request(self):
        body = (FIXTURES / "generate_request.json").read_bytes()
        doc = json.loads(body)
        bits = np.zeros((8, 8), dtype=bool)
        bits[2, 2:6] = True
        bits[5, 1:7] = True
        req = GenerationRequest(
            text_prompt="a stone bridge at dusk",
            edge_map=EdgeMap(bits),
            reference_images=[str(FIXTURES / "generate_reference.png")],
            output_size=(8, 8),
            seed=77,
            steps=12,
        )
        assert json.loads(marshal_request(req)) == doc
        # required protocol fields, spelled exactly
        assert set(doc) == {
            "prompt", "edge_map_png_b64", "reference_png_b64",
            "width", "height", "seed", "steps",
        }

    def test_recorded_request_edge_map_decodes(self):
        doc = json.loads((FIXTURES / "generate_request.json").read_bytes())
        png = base64.b64decode(doc["edge_map_png_b64"])
        img = decode_png(png)
        assert (img.width, img.height) == (8, 8)
        assert set(np.unique(img.data)) <= {0, 255}

    def test_unmarshal_recorded_response(self):
        raw = (FIXTURES / "generate_response.json").read_bytes()
        image, generator_id = unmarshal_response(200, raw)
        assert generator_id == "recorded-fixture-v1"
        assert (image.width, image.height) == (8, 8)

    def test_service_round_trip_with_fixture_transport(self):
        recorded = (FIXTURES / "generate_response.json").read_bytes()
        calls = []

        def transport(url, body, timeout):
            calls.append((url, json.loads(body)))
            return 200, recorded

        bits = np.zeros((8, 8), dtype=bool)
        req = GenerationRequest("x", EdgeMap(bits), output_size=(8, 8))
        result = generate_service(req, "http://models.local:9000", transport=transport)
        assert result.generator_id == "recorded-fixture-v1"
        assert calls[0][0] == "http://models.local:9000/generate"
        assert calls[0][1]["width"] == 8

    def test_http_500_maps_to_service_unavailable(self):
        def transport(url, body, timeout):
            return 503, json.dumps({"error": "model loading"}).encode()

        req = GenerationRequest("x", EdgeMap(np.zeros((8, 8), dtype=bool)))
        with pytest.raises(ServiceUnavailable, match="model loading"):
            generate_service(req, "http://models.local", transport=transport)

    def test_garbage_response_detected(self):
        def transport(url, body, timeout):
            return 200, b"not json at all"

        req = GenerationRequest("x", EdgeMap(np.zeros((8, 8), dtype=bool)))
        with pytest.raises(MalformedResponse):
            generate_service(req, "http://models.local", transport=transport)

    def test_wrong_size_response_detected(self):
        recorded = (FIXTURES / "generate_response.json").read_bytes()

        def transport(url, body, timeout):
            return 200, recorded  # 8x8 image

        req = GenerationRequest("x", EdgeMap(np.zeros((8, 8), dtype=bool)),
                                output_size=(16, 16))
        with pytest.raises(MalformedResponse, match="8x8"):
            generate_service(req, "http://models.local", transport=transport)


class TestDispatch:
    def test_service_without_url_fails(self):
        req = GenerationRequest("x", EdgeMap(np.zeros((8, 8), dtype=bool)))
        with pytest.raises(ServiceUnavailable):
            generate(req, Backend.SERVICE)

    def test_fallback_to_stub_sets_degraded(self, monkeypatch):
        import ragsemcom.genclient as gc

        def failing_transport(url, body, timeout):
            raise ServiceUnavailable("refused")

        monkeypatch.setattr(gc, "_urllib_transport", failing_transport)
        req = GenerationRequest("x", small_edge_map())
        result = generate(
            req, Backend.SERVICE, service_url="http://down.local",
            fallback_to_stub=True,
        )
        assert result.degraded
        assert result.generator_id == "stub-v1"

    def test_no_fallback_propagates(self, monkeypatch):
        import ragsemcom.genclient as gc

        def failing_transport(url, body, timeout):
            raise ServiceUnavailable("refused")

        monkeypatch.setattr(gc, "_urllib_transport", failing_transport)
        req = GenerationRequest("x", small_edge_map())
        with pytest.raises(ServiceUnavailable):
            generate(req, Backend.SERVICE, service_url="http://down.local")
