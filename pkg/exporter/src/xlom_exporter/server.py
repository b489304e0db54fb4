"""HTTP mode: POST /embed -> {"dim": int, "vectors": [[float]]}.

A development convenience, served sequentially.  Malformed JSON gets 400,
batches beyond the size limit get 413, other paths 404.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, HTTPServer

from .encoders import Encoder

DEFAULT_MAX_BATCH = 1024


def make_handler(encoder: Encoder, max_batch: int = DEFAULT_MAX_BATCH):
    class EmbedHandler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path != "/embed":
                self._send_json(404, {"error": "unknown path"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length)
            try:
                payload = json.loads(raw)
                texts = payload["texts"]
                lang = payload.get("lang", "")
                if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
                    raise ValueError("texts must be a list of strings")
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                self._send_json(400, {"error": f"bad request: {exc}"})
                return
            if len(texts) > max_batch:
                self._send_json(413, {"error": f"batch exceeds {max_batch} texts"})
                return
            vectors = encoder.encode(texts, lang)
            self._send_json(200, {"dim": encoder.dim,
                                  "vectors": [row.tolist() for row in vectors]})

    return EmbedHandler


def serve(encoder: Encoder, host: str = "127.0.0.1", port: int = 8080,
          max_batch: int = DEFAULT_MAX_BATCH) -> HTTPServer:
    """Build the HTTP server (call serve_forever() on the result)."""
    return HTTPServer((host, port), make_handler(encoder, max_batch))
