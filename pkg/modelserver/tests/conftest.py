"""Server-under-test fixture plus tiny HTTP helpers (stdlib only)."""

from __future__ import annotations

import json
import urllib.request

import numpy as np
import pytest

from modelserver.app import ModelServer


@pytest.fixture(scope="session")
def server():
    srv = ModelServer(("127.0.0.1", 0))
    srv.start_background()
    yield srv
    srv.shutdown()


def get_json(url: str) -> tuple[int, dict]:
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def post_json(url: str, payload: dict) -> tuple[int, dict]:
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def sample_image(seed: int, size: int = 96) -> np.ndarray:
    """Gradient plus shapes with a white patch; intensities in [16, 255]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = 40 + 120 * (xx / size) + 60 * (yy / size)
    for _ in range(2):
        cy, cx = rng.integers(size // 8, 7 * size // 8, 2)
        r = int(rng.integers(size // 8, size // 4))
        base[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = float(rng.integers(60, 220))
    base[4 : 4 + size // 10, 4 : 4 + size // 10] = 255.0
    gray = np.clip(base + rng.normal(0, 2, base.shape), 16, 255).astype(np.uint8)
    return np.stack([gray, gray, gray], axis=-1)
