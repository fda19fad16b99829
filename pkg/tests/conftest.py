from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from tfweval.corpus import get_task_schema

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def scnm_schema():
    return get_task_schema("SCNM")


@pytest.fixture(scope="session")
def scpos_adj_schema():
    return get_task_schema("SCPOS_ADJ")


@pytest.fixture(scope="session")
def tcree_schema():
    return get_task_schema("TCREE")


class _ChatHandler(BaseHTTPRequestHandler):
    """Minimal chat-completions endpoint for exercising the live client.

    The server instance carries `reply_fn(body) -> (status, text)` plus a
    request log; each POST body is parsed as JSON and recorded.
    """

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length).decode("utf-8"))
        self.server.requests.append(
            {"path": self.path, "body": body, "auth": self.headers.get("Authorization")}
        )
        status, text = self.server.reply_fn(body)
        if status != 200:
            self.send_response(status)
            self.end_headers()
            return
        payload = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": text}}]}
        ).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class StubChatServer:
    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
        self.server.requests = []
        self.server.reply_fn = lambda body: (200, "ok")
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    @property
    def requests(self):
        return self.server.requests

    def set_reply(self, fn):
        self.server.reply_fn = fn

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def chat_server():
    server = StubChatServer()
    yield server
    server.close()


@pytest.fixture(autouse=True)
def _api_key(monkeypatch):
    monkeypatch.setenv("TFWEVAL_TEST_KEY", "test-key")
