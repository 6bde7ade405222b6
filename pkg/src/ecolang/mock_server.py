"""In-process HTTP server speaking the chat-completions protocol.

Wraps a MockBackend so end-to-end tests can exercise the real HTTP client
without any external service.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .backends import ChatRequest, MockBackend


class MockServer:
    """Serves /v1/chat/completions and /v1/embeddings on localhost."""

    def __init__(self, backend=None, host="127.0.0.1", port=0):
        self.backend = backend or MockBackend()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, status, payload):
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length))
                except json.JSONDecodeError:
                    self._reply(400, {"error": {"message": "invalid JSON body"}})
                    return
                if self.path.rstrip("/").endswith("chat/completions"):
                    self._chat(payload)
                elif self.path.rstrip("/").endswith("embeddings"):
                    self._embeddings(payload)
                else:
                    self._reply(404, {"error": {"message": f"unknown path {self.path}"}})

            def _chat(self, payload):
                if "messages" not in payload or not payload["messages"]:
                    self._reply(400, {"error": {"message": "messages required"}})
                    return
                request = ChatRequest(
                    messages=payload["messages"],
                    max_tokens=payload.get("max_tokens", 512),
                    temperature=payload.get("temperature", 0.0),
                )
                response = outer.backend.chat(request)
                self._reply(
                    200,
                    {
                        "id": "mock-chat",
                        "object": "chat.completion",
                        "model": payload.get("model", "mock"),
                        "choices": [
                            {
                                "index": 0,
                                "message": {"role": "assistant", "content": response.text},
                                "finish_reason": "stop",
                            }
                        ],
                        "usage": {
                            "prompt_tokens": response.prompt_tokens,
                            "completion_tokens": response.completion_tokens,
                            "total_tokens": response.prompt_tokens + response.completion_tokens,
                        },
                    },
                )

            def _embeddings(self, payload):
                text = payload.get("input")
                if not text:
                    self._reply(400, {"error": {"message": "input required"}})
                    return
                if isinstance(text, list):
                    text = text[0]
                vec = outer.backend.embed(text)
                self._reply(
                    200,
                    {
                        "object": "list",
                        "data": [{"object": "embedding", "index": 0, "embedding": vec}],
                        "model": payload.get("model", "mock"),
                    },
                )

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self):
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1"

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
