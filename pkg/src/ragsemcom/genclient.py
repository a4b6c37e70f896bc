"""Generator client: one contract over the external model service and a
deterministic built-in stub.

The stub makes the retrieval benefit measurable offline: when reference
images are supplied it returns the top reference resized to the requested
output size (so a knowledge base containing the ground-truth image yields a
perfect reconstruction), otherwise it renders the received edge map
white-on-black. Identical requests give bit-identical stub output.
"""

from __future__ import annotations

import base64
import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import MalformedResponse, ServiceTimeout, ServiceUnavailable
from .image import EdgeMap, RasterImage, decode_png, encode_png, load_image, resize_nearest

DEFAULT_TIMEOUT_S = 120.0
GENERATE_PATH = "/generate"


class Backend(str, Enum):
    SERVICE = "service"
    STUB = "stub"


@dataclass
class GenerationRequest:
    text_prompt: str
    edge_map: EdgeMap
    reference_images: list[str] = field(default_factory=list)
    output_size: Optional[tuple[int, int]] = None  # (w, h); edge map size if None
    seed: int = 0
    steps: int = 30

    def resolved_size(self) -> tuple[int, int]:
        return self.output_size or (self.edge_map.width, self.edge_map.height)


@dataclass
class ReconstructionResult:
    image: RasterImage
    generator_id: str
    latency_ms: float
    degraded: bool = False


def render_edge_map(edge_map: EdgeMap, width: int, height: int) -> RasterImage:
    """Edge bits as a white-on-black grayscale raster."""
    native = RasterImage(np.where(edge_map.bits, 255, 0).astype(np.uint8))
    return resize_nearest(native, width, height)


def generate_stub(req: GenerationRequest) -> ReconstructionResult:
    start = time.perf_counter()
    width, height = req.resolved_size()
    if req.reference_images:
        image = resize_nearest(load_image(req.reference_images[0]), width, height)
    else:
        image = render_edge_map(req.edge_map, width, height)
    latency = (time.perf_counter() - start) * 1000.0
    return ReconstructionResult(image, "stub-v1", latency)


# transport(url, body_bytes, timeout_s) -> (http_status, response_bytes)
TransportFn = Callable[[str, bytes, float], tuple[int, bytes]]


def _urllib_transport(url: str, body: bytes, timeout_s: float) -> tuple[int, bytes]:
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout_s) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except TimeoutError as exc:
        raise ServiceTimeout(f"no answer from {url} in {timeout_s}s") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise ServiceTimeout(f"no answer from {url} in {timeout_s}s") from exc
        raise ServiceUnavailable(f"cannot reach {url}: {exc.reason}") from exc


def marshal_request(req: GenerationRequest) -> bytes:
    width, height = req.resolved_size()
    refs = []
    for path in req.reference_images:
        refs.append(base64.b64encode(encode_png(load_image(path))).decode("ascii"))
    payload = {
        "prompt": req.text_prompt,
        "edge_map_png_b64": base64.b64encode(
            encode_png(render_edge_map(req.edge_map, req.edge_map.width, req.edge_map.height))
        ).decode("ascii"),
        "reference_png_b64": refs,
        "width": width,
        "height": height,
        "seed": req.seed,
        "steps": req.steps,
    }
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def unmarshal_response(status: int, body: bytes) -> tuple[RasterImage, str]:
    if status >= 500:
        try:
            message = json.loads(body).get("error", "")
        except (json.JSONDecodeError, AttributeError):
            message = body[:200].decode("utf-8", "replace")
        raise ServiceUnavailable(f"service error {status}: {message}")
    if status != 200:
        raise MalformedResponse(f"unexpected status {status}")
    try:
        doc = json.loads(body)
        image = decode_png(base64.b64decode(doc["image_png_b64"]))
        generator_id = str(doc["generator_id"])
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise MalformedResponse(f"bad generate response: {exc}") from exc
    return image, generator_id


def generate_service(
    req: GenerationRequest,
    service_url: str,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    transport: Optional[TransportFn] = None,
) -> ReconstructionResult:
    transport = transport or _urllib_transport
    start = time.perf_counter()
    status, body = transport(service_url.rstrip("/") + GENERATE_PATH, marshal_request(req), timeout_s)
    image, generator_id = unmarshal_response(status, body)
    latency = (time.perf_counter() - start) * 1000.0
    width, height = req.resolved_size()
    if (image.width, image.height) != (width, height):
        raise MalformedResponse(
            f"service returned {image.width}x{image.height}, requested {width}x{height}"
        )
    return ReconstructionResult(image, generator_id, latency)


def generate(
    req: GenerationRequest,
    backend: Backend = Backend.STUB,
    service_url: Optional[str] = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    transport: Optional[TransportFn] = None,
    fallback_to_stub: bool = False,
) -> ReconstructionResult:
    if backend == Backend.STUB:
        return generate_stub(req)
    if not service_url:
        raise ServiceUnavailable("no service URL configured")
    try:
        return generate_service(req, service_url, timeout_s, transport)
    except (ServiceUnavailable, ServiceTimeout, MalformedResponse):
        if not fallback_to_stub:
            raise
        result = generate_stub(req)
        result.degraded = True
        return result
