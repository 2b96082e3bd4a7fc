"""Shared test helpers: random images and a local HTTP server."""

import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from aligndet.pixels import PixelBuffer


def random_image(rng, width, height) -> PixelBuffer:
    return PixelBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


class FakeServer:
    """Threaded local HTTP server answering from a handler function.

    ``handler(path, body) -> (status, payload)``; payload may be a dict (sent
    as JSON) or bytes (sent raw). Every request is logged in ``calls``.
    """

    def __init__(self, handler):
        self.handler = handler
        self.calls = []
        outer = self

        class H(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, status, payload):
                raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                try:
                    self.wfile.write(raw)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # the client gave up (timeout tests)

            def do_POST(self):
                n = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(n) or b"{}")
                outer.calls.append((self.path, body))
                self._reply(*outer.handler(self.path, body))

            def do_GET(self):
                outer.calls.append((self.path, None))
                self._reply(*outer.handler(self.path, None))

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), H)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []
