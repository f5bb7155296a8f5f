"""HTTP API backing the interactive threshold-tuning UI.

JSON over HTTP/1.1: GET /health, GET /images, POST /upload (raw PNG body),
POST /coverage {id, threshold}, POST /predict {id}, POST /enhance
{id, outscale}. Numeric fields of /coverage responses are produced by the
same code path as the coverage CLI command, so the two are byte-identical.
Static UI assets are served at / when a built frontend directory is
configured. Handlers are stateless over immutable loaded models; the image
store is guarded by a lock and uploads land atomically (temp file +
rename).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from PIL import Image

from . import classifier as clf
from .coverage import coverage_report
from .images import load_image
from .pipeline import ModelStore, PipelineConfig, enhance_image

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>canecover serve</title></head>
<body><h1>canecover serve</h1>
<p>No web UI build configured (pass --static with the built frontend).</p>
<p>API: GET /health, GET /images, POST /upload, POST /coverage,
POST /predict, POST /enhance</p></body></html>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
}


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class AppState:
    """Image store plus lazily loaded models, shared across request threads."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.models = ModelStore(config)
        self.workdir = Path(config.workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.static_dir = Path(config.static_dir) if config.static_dir else None
        self._lock = threading.Lock()
        self._images: dict = {}
        for path in sorted(self.workdir.glob("*.png")):
            self._register_path(path)

    def _register_path(self, path: Path) -> str:
        image_id = hashlib.sha256(path.read_bytes()).hexdigest()[:12]
        with self._lock:
            self._images[image_id] = path
        return image_id

    def add_png_bytes(self, data: bytes) -> str:
        if not data.startswith(_PNG_MAGIC):
            raise ApiError(400, "upload body must be a PNG file")
        image_id = hashlib.sha256(data).hexdigest()[:12]
        target = self.workdir / f"{image_id}.png"
        with self._lock:
            if image_id in self._images:
                return image_id
            fd, tmp = tempfile.mkstemp(dir=self.workdir, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
            self._images[image_id] = target
        return image_id

    def path_of(self, image_id: str) -> Path:
        with self._lock:
            path = self._images.get(image_id)
        if path is None:
            raise ApiError(404, f"unknown image id '{image_id}'")
        return path

    def listing(self) -> list:
        with self._lock:
            items = list(self._images.items())
        out = []
        for image_id, path in sorted(items):
            image = load_image(path)
            out.append({"id": image_id, "name": path.name, "w": image.width, "h": image.height})
        return out


def _mask_png_base64(mask) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.to_image().pixels[:, :, 0], mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class Handler(BaseHTTPRequestHandler):
    state: AppState  # set by make_server

    # --- plumbing ---------------------------------------------------------

    def log_message(self, fmt, *args):
        pass  # keep test output quiet

    def _send(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, doc, status: int = 200):
        self._send(status, json.dumps(doc).encode("utf-8"), "application/json")

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _read_json(self) -> dict:
        try:
            doc = json.loads(self._read_body() or b"{}")
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"invalid JSON body: {exc}") from exc
        if not isinstance(doc, dict):
            raise ApiError(400, "JSON body must be an object")
        return doc

    # --- routes -----------------------------------------------------------

    def do_GET(self):
        try:
            if self.path == "/health":
                self._send_json({"status": "ok"})
            elif self.path == "/images":
                self._send_json(self.state.listing())
            elif self.path.startswith("/files/"):
                self._serve_stored_image(self.path[len("/files/") :])
            else:
                self._serve_static(self.path)
        except ApiError as exc:
            self._send_json({"error": str(exc)}, exc.status)
        except Exception as exc:  # report, never crash the thread
            self._send_json({"error": str(exc)}, 500)

    def do_POST(self):
        try:
            if self.path == "/upload":
                image_id = self.state.add_png_bytes(self._read_body())
                self._send_json({"id": image_id})
            elif self.path == "/coverage":
                self._post_coverage()
            elif self.path == "/predict":
                self._post_predict()
            elif self.path == "/enhance":
                self._post_enhance()
            else:
                self._send_json({"error": f"no such endpoint {self.path}"}, 404)
        except ApiError as exc:
            self._send_json({"error": str(exc)}, exc.status)
        except FileNotFoundError as exc:
            self._send_json({"error": str(exc)}, 409)
        except Exception as exc:
            self._send_json({"error": str(exc)}, 500)

    def _post_coverage(self):
        doc = self._read_json()
        image = load_image(self.state.path_of(_require(doc, "id")))
        threshold = float(_require(doc, "threshold"))
        report, mask = coverage_report(image, threshold)
        response = report.to_json_dict()
        response["mask_png"] = _mask_png_base64(mask)
        self._send_json(response)

    def _post_predict(self):
        doc = self._read_json()
        image = load_image(self.state.path_of(_require(doc, "id")))
        params, config = self.state.models.classifier()
        self._send_json(clf.predict(image, params, config).to_json_dict())

    def _post_enhance(self):
        doc = self._read_json()
        image = load_image(self.state.path_of(_require(doc, "id")))
        outscale = int(doc.get("outscale") or 4)
        if outscale not in (1, 2, 3, 4):
            raise ApiError(400, f"outscale must be 1..4, got {outscale}")
        params, config = self.state.models.generator(outscale)
        enhanced = enhance_image(image, params, config)
        buf = io.BytesIO()
        mode = "L" if enhanced.channels == 1 else "RGB"
        arr = enhanced.pixels[:, :, 0] if enhanced.channels == 1 else enhanced.pixels
        Image.fromarray(arr, mode=mode).save(buf, format="PNG")
        self._send_json({"id_out": self.state.add_png_bytes(buf.getvalue())})

    def _serve_stored_image(self, image_id: str):
        path = self.state.path_of(image_id)
        self._send(200, path.read_bytes(), "image/png")

    def _serve_static(self, path: str):
        if self.state.static_dir is None:
            if path in ("/", "/index.html"):
                self._send(200, _FALLBACK_PAGE.encode("utf-8"), "text/html; charset=utf-8")
            else:
                self._send_json({"error": f"no such endpoint {path}"}, 404)
            return
        rel = "index.html" if path in ("", "/") else path.lstrip("/")
        target = (self.state.static_dir / rel).resolve()
        if not str(target).startswith(str(self.state.static_dir.resolve())) or not target.is_file():
            self._send_json({"error": f"no such file {path}"}, 404)
            return
        ctype = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)


def _require(doc: dict, key: str):
    if key not in doc:
        raise ApiError(400, f"missing required field '{key}'")
    return doc[key]


def make_server(config: PipelineConfig) -> ThreadingHTTPServer:
    """Bind the server (port 0 picks a free port); caller runs serve_forever."""
    state = AppState(config)
    handler = type("BoundHandler", (Handler,), {"state": state})
    return ThreadingHTTPServer((config.host, config.port), handler)


def serve_forever(config: PipelineConfig):
    server = make_server(config)
    host, port = server.server_address[:2]
    print(f"canecover serve listening on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
