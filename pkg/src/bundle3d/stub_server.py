"""In-process test double for the diffusion backend.

Serves POST /generate from canned PNG fixtures and POST /enhance by echoing
the posted bundle with seeded noise on the RGB tile row only (normal tiles
pass through untouched). Every parsed request body is recorded on the handle
for test assertions.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .raster import ImagePlane

RGB_NOISE_AMPLITUDE = 2  # +-2/255 per pixel on RGB tiles


def _enhance_png(png: bytes, seed: int) -> bytes:
    flat = ImagePlane.from_png_bytes(png)
    data = flat.data.copy()
    tile = flat.height // 2
    rng = np.random.default_rng(seed)
    noise = rng.integers(-RGB_NOISE_AMPLITUDE, RGB_NOISE_AMPLITUDE + 1,
                         size=(tile, flat.width, 3), dtype=np.int16)
    rgb = data[:tile, :, :3].astype(np.int16) + noise
    data[:tile, :, :3] = np.clip(rgb, 0, 255).astype(np.uint8)
    return ImagePlane.from_array(data[..., :3]).to_png_bytes()


class _Handler(BaseHTTPRequestHandler):
    server_version = "BundleStub/1.0"

    def log_message(self, *args):  # keep tests quiet
        pass

    def _reply(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _reply_error(self, status: int, message: str):
        self._reply(status, json.dumps({"error": message}).encode("utf-8"), "application/json")

    def do_POST(self):
        stub: "StubServer" = self.server.stub  # type: ignore[attr-defined]
        if stub.delay_s:
            time.sleep(stub.delay_s)
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._reply_error(400, "invalid JSON body")
            return
        stub.requests.append({"path": self.path, "body": body})

        if stub.fail_status is not None:
            self._reply_error(stub.fail_status, "stub configured to fail")
            return

        if self.path == "/generate":
            png = stub.fixture_for_seed(int(body.get("seed", 0)))
            if png is None:
                self._reply_error(404, "no generate fixture available")
                return
            self._reply(200, png, "image/png")
        elif self.path == "/enhance":
            b64 = body.get("bundle_png")
            if not b64:
                self._reply_error(400, "enhance requires bundle_png")
                return
            try:
                png = base64.b64decode(b64)
                out = _enhance_png(png, int(body.get("seed", 0)))
            except Exception as exc:
                self._reply_error(400, f"bad bundle: {exc}")
                return
            self._reply(200, out, "image/png")
        else:
            self._reply_error(404, f"unknown endpoint {self.path}")


class StubServer:
    """Threaded stub; use as a context manager or call start()/stop()."""

    def __init__(self, fixtures_dir: str, port: int = 0,
                 fail_status: int | None = None, delay_s: float = 0.0):
        self.fixtures_dir = fixtures_dir
        self.fail_status = fail_status
        self.delay_s = delay_s
        self.requests: list[dict] = []
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
        self._httpd.stub = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def fixture_for_seed(self, seed: int) -> bytes | None:
        candidates = [
            os.path.join(self.fixtures_dir, f"generate_{seed}.png"),
            os.path.join(self.fixtures_dir, "generate.png"),
        ]
        for path in candidates:
            if os.path.exists(path):
                with open(path, "rb") as fh:
                    return fh.read()
        return None

    def start(self) -> "StubServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()
