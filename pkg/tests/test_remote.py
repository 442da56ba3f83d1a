from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from guire.geometry import BBox, ScreenDims
from guire.policies import ObsElement, Observation
from guire.remote import (
    BadStatus,
    RemoteError,
    RemotePolicy,
    RemoteSchemaError,
    RemoteTimeout,
    build_request,
    remote_generate,
    resolve_endpoint,
)


class Stub:
    """Scripted HTTP server: each request pops the next (status, body, delay)."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                n = int(self.headers["Content-Length"])
                stub.requests.append(json.loads(self.rfile.read(n)))
                status, body, delay = stub.script.pop(0) if stub.script else (500, "empty", 0)
                if delay:
                    time.sleep(delay)
                data = body.encode() if isinstance(body, str) else json.dumps(body).encode()
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/generate"
        self.thread = threading.Thread(target=self.server.serve_forever, args=(0.02,), daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


OBS = Observation(ScreenDims(100, 100), "tap OK", ("tap(x=1, y=1)",),
                  (ObsElement("ok", BBox(10, 10, 20, 20), label="OK"),))


def test_request_shape():
    req = build_request(OBS, 2, 0.7)
    assert req == {"instruction": "tap OK", "history": ["tap(x=1, y=1)"], "image_b64": None,
                   "elements": [{"id": "ok", "bbox": [10, 10, 20, 20], "label": "OK"}], "n": 2,
                   "temperature": 0.7}


def test_success():
    with Stub([(200, {"outputs": ["tap(x=15, y=15)", "navigate_home()"]}, 0)]) as s:
        assert remote_generate(s.url, OBS, 2) == ["tap(x=15, y=15)", "navigate_home()"]
        assert s.requests[0]["n"] == 2


def test_retries_on_5xx_then_succeeds():
    with Stub([(503, "busy", 0), (502, "busy", 0), (200, {"outputs": ["x"]}, 0)]) as s:
        assert remote_generate(s.url, OBS, 1, retries=2, backoff=0.001) == ["x"]
        assert len(s.requests) == 3


def test_gives_up_after_budget():
    with Stub([(500, "no", 0)] * 5) as s:
        with pytest.raises(BadStatus) as info:
            remote_generate(s.url, OBS, 1, retries=1, backoff=0.001)
        assert info.value.status == 500 and len(s.requests) == 2


def test_4xx_not_retried():
    with Stub([(400, "bad", 0), (200, {"outputs": ["x"]}, 0)]) as s:
        with pytest.raises(BadStatus):
            remote_generate(s.url, OBS, 1, retries=3, backoff=0.001)
        assert len(s.requests) == 1


@pytest.mark.parametrize("body", ["not json", {"outputs": "x"}, {"outputs": [1]}, {"outputs": ["a", "b"]}])
def test_schema_errors(body):
    with Stub([(200, body, 0)]) as s:
        with pytest.raises(RemoteSchemaError):
            remote_generate(s.url, OBS, 1, retries=2, backoff=0.001)
        assert len(s.requests) == 1


def test_timeout_retried_then_raised():
    with Stub([(200, {"outputs": ["x"]}, 0.5)] * 2) as s:
        with pytest.raises(RemoteTimeout):
            remote_generate(s.url, OBS, 1, timeout=0.05, retries=1, backoff=0.001)
        assert len(s.requests) == 2


def test_connection_refused():
    with pytest.raises(RemoteError):
        remote_generate("http://127.0.0.1:9/none", OBS, 1, retries=0)


def test_endpoint_resolution(monkeypatch):
    monkeypatch.delenv("GUIRE_ENDPOINT", raising=False)
    with pytest.raises(RemoteError):
        resolve_endpoint(None)
    monkeypatch.setenv("GUIRE_ENDPOINT", "http://env")
    assert resolve_endpoint(None) == "http://env"
    assert resolve_endpoint("http://flag") == "http://flag"


def test_remote_policy():
    with Stub([(200, {"outputs": ["navigate_back()"]}, 0)]) as s:
        pol = RemotePolicy(s.url, retries=0)
        try:
            assert pol.generate(OBS, 1) == ["navigate_back()"]
        finally:
            pol.close()
