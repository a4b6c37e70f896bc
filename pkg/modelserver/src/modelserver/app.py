"""HTTP layer: stdlib threading server routing the documented endpoints."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .backend import ProceduralBackend
from .imaging import decode_png_b64, encode_png_b64


class BadRequest(Exception):
    pass


class _Handler(BaseHTTPRequestHandler):
    server_version = "ragsemcom-modelserver/0.1"

    def log_message(self, fmt, *args):  # quiet by default
        if self.server.verbose:
            super().log_message(fmt, *args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/info":
            backend = self.server.backend
            self._send(200, {
                "embedding_dim": backend.embedding_dim,
                "generator_id": backend.generator_id,
                "caption_model_id": backend.caption_model_id,
            })
        else:
            self._send(404, {"error": f"no such endpoint {self.path}"})

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", 0))
            try:
                doc = json.loads(self.rfile.read(length))
            except json.JSONDecodeError as exc:
                raise BadRequest(f"invalid JSON body: {exc}") from exc
            handler = {
                "/caption": self._caption,
                "/embed_text": self._embed_text,
                "/embed_image": self._embed_image,
                "/rewrite": self._rewrite,
                "/review": self._review,
                "/generate": self._generate,
            }.get(self.path)
            if handler is None:
                self._send(404, {"error": f"no such endpoint {self.path}"})
                return
            self._send(200, handler(doc))
        except BadRequest as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:  # noqa: BLE001 - surface as a 500 per protocol
            self._send(500, {"error": f"{type(exc).__name__}: {exc}"})

    # --- endpoint bodies ------------------------------------------------

    def _image_field(self, doc: dict, field: str = "image_png_b64"):
        try:
            return decode_png_b64(doc[field])
        except KeyError as exc:
            raise BadRequest(f"missing field {field}") from exc
        except Exception as exc:
            raise BadRequest(f"undecodable {field}: {exc}") from exc

    def _caption(self, doc: dict) -> dict:
        image = self._image_field(doc)
        return {"caption": self.server.backend.caption(image)}

    def _embed_text(self, doc: dict) -> dict:
        text = doc.get("text")
        if not text:
            raise BadRequest("empty text")
        return {"embedding": self.server.backend.embed_text(text)}

    def _embed_image(self, doc: dict) -> dict:
        image = self._image_field(doc)
        return {"embedding": self.server.backend.embed_image(image)}

    def _rewrite(self, doc: dict) -> dict:
        prompt = doc.get("prompt")
        if not prompt:
            raise BadRequest("empty prompt")
        documents = [str(d) for d in doc.get("documents", [])]
        budget = int(doc.get("budget", 4000))
        if budget < 1:
            raise BadRequest("budget must be positive")
        return {"prompt": self.server.backend.rewrite(prompt, documents, budget)}

    def _review(self, doc: dict) -> dict:
        candidates = doc.get("candidates")
        if candidates is None:
            raise BadRequest("missing candidates")
        return {"keep": self.server.backend.review(doc.get("query", ""), candidates)}

    def _generate(self, doc: dict) -> dict:
        for field in ("prompt", "edge_map_png_b64", "width", "height"):
            if field not in doc:
                raise BadRequest(f"missing field {field}")
        edge = self._image_field(doc, "edge_map_png_b64")
        references = [
            decode_png_b64(ref) for ref in doc.get("reference_png_b64", [])
        ]
        image = self.server.backend.generate(
            prompt=str(doc["prompt"]),
            edge_map=edge,
            references=references,
            width=int(doc["width"]),
            height=int(doc["height"]),
            seed=int(doc.get("seed", 0)),
            steps=int(doc.get("steps", 30)),
        )
        return {
            "image_png_b64": encode_png_b64(image),
            "generator_id": self.server.backend.generator_id,
        }


class ModelServer(ThreadingHTTPServer):
    """Threading server bound to a backend; GPU-style backends serialize
    internally, request handling itself is independent per connection."""

    daemon_threads = True

    def __init__(self, address=("127.0.0.1", 0), backend=None, verbose=False):
        super().__init__(address, _Handler)
        self.backend = backend or ProceduralBackend()
        self.verbose = verbose

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
