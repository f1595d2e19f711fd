"""In-process chat-completion server with scriptable replies for tests and dry runs."""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence

from ..prompts import oracle_annotate, parse_embedding_prompt

_PIECES = re.compile(r"\w+|[^\w\s]")


def mock_token_count(text: str) -> int:
    """Word and punctuation pieces, a rough stand-in for a BPE tokenizer."""
    return len(_PIECES.findall(text))


def oracle_responder(prompt: str) -> str:
    """Answer an embedding prompt with the class of the nearest example."""
    return oracle_annotate(parse_embedding_prompt(prompt))


class MockBackend:
    """Threaded HTTP server speaking the chat-completion JSON shape.

    ``statuses`` is a scripted sequence of HTTP codes consumed one per
    request before normal 200 replies resume. ``responder`` maps the prompt
    text to the reply content. Use as a context manager; ``url`` is the
    endpoint to configure.
    """

    def __init__(self, responder: Callable[[str], str] | str = "walking",
                 statuses: Sequence[int] = (), expected_key: str | None = None,
                 retry_after: float | None = None):
        self.responder = responder if callable(responder) else (lambda _p, r=responder: r)
        self.statuses = list(statuses)
        self.expected_key = expected_key
        self.retry_after = retry_after
        self.requests: list[dict] = []  # {"prompt", "status"}
        self._lock = threading.Lock()
        self._server = None
        self._thread = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def prompts_served(self) -> list[str]:
        return [r["prompt"] for r in self.requests if r["status"] == 200]

    def _handle(self, headers, body: bytes):
        payload = json.loads(body or b"{}")
        prompt = payload["messages"][-1]["content"]
        with self._lock:
            status = self.statuses.pop(0) if self.statuses else 200
            if self.expected_key is not None and headers.get("Authorization") != f"Bearer {self.expected_key}":
                status = 401
            self.requests.append({"prompt": prompt, "status": status})
        if status != 200:
            return status, {"error": {"message": f"scripted status {status}"}}
        reply = self.responder(prompt)
        return 200, {
            "id": f"mock-{len(self.requests)}",
            "object": "chat.completion",
            "model": payload.get("model", "mock"),
            "choices": [{"index": 0, "finish_reason": "stop",
                         "message": {"role": "assistant", "content": reply}}],
            "usage": {"prompt_tokens": mock_token_count(prompt),
                      "completion_tokens": mock_token_count(reply)},
        }

    def __enter__(self):
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                status, data = backend._handle(self.headers, self.rfile.read(length))
                raw = json.dumps(data).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                if status == 429 and backend.retry_after is not None:
                    self.send_header("Retry-After", str(backend.retry_after))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()
