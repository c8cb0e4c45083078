"""Read-only HTTP view of a running hub: ``GET /status`` and ``GET /ledger?from=SEQ``."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .hub import Hub


class StatusServerError(RuntimeError):
    pass


def _handler_for(hub: Hub):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, code: int, body: bytes, ctype: str) -> None:
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/status":
                body = json.dumps(hub.status_snapshot().to_dict(), sort_keys=True).encode()
                self._send(200, body, "application/json")
            elif url.path == "/ledger":
                try:
                    start = int(parse_qs(url.query).get("from", ["0"])[0])
                except ValueError:
                    self._send(400, b'{"error": "from must be an integer"}', "application/json")
                    return
                lines = [e.to_json() + "\n" for e in hub.ledger.entries(max(start, 0))]
                self._send(200, "".join(lines).encode(), "application/x-ndjson")
            else:
                self._send(404, b'{"error": "not found"}', "application/json")

        def _reject(self):
            self._send(405, b'{"error": "read-only endpoint"}', "application/json")

        do_POST = do_PUT = do_DELETE = do_PATCH = _reject

    return Handler


class StatusServer:
    def __init__(self, hub: Hub, port: int = 0, host: str = "127.0.0.1"):
        try:
            self._httpd = ThreadingHTTPServer((host, port), _handler_for(hub))
        except OSError as exc:
            raise StatusServerError(f"cannot bind status endpoint on {host}:{port}: {exc}") from exc
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        self.host = host
        self._thread = threading.Thread(target=self._httpd.serve_forever, name="status-endpoint", daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_status(hub: Hub, port: int = 0) -> StatusServer:
    return StatusServer(hub, port)
