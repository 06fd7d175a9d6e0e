import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from drivecoc._validation import ValidationError
from drivecoc.coc import CocRecord, DrivingDecision, HttpJudge, JudgeProtocolError, JudgeTransportError


class Behavior:
    def __init__(self):
        self.fail_first = 0
        self.status = None
        self.delay = 0.0
        self.body = None
        self.wrong_id = False
        self.calls = 0
        self.in_flight = 0
        self.peak = 0
        self.lock = threading.Lock()


@pytest.fixture
def server():
    behavior = Behavior()

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_POST(self):
            req = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            with behavior.lock:
                behavior.calls += 1
                call = behavior.calls
                behavior.in_flight += 1
                behavior.peak = max(behavior.peak, behavior.in_flight)
            try:
                delay = behavior.delay(req) if callable(behavior.delay) else behavior.delay
                time.sleep(delay)
                if call <= behavior.fail_first:
                    return self._send(503, b"busy")
                if behavior.status:
                    return self._send(behavior.status, b"nope")
                if behavior.body is not None:
                    return self._send(200, behavior.body)
                if req["task"] == "rubric":
                    # score encodes the prediction so ordering can be checked
                    out = {"score": int(req["pred"]) if req["pred"].isdigit() else 5}
                else:
                    out = {"answers": [req["gt"] == req["pred"], True, True]}
                out["id"] = "someone-else" if behavior.wrong_id else req["id"]
                self._send(200, json.dumps(out).encode())
            finally:
                with behavior.lock:
                    behavior.in_flight -= 1

        def _send(self, code, body):
            self.send_response(code)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/judge", behavior
    httpd.shutdown()
    httpd.server_close()


def test_rubric_round_trip(server):
    url, _ = server
    assert HttpJudge(url).rubric("stop", "3") == 3


def test_triplet_round_trip(server):
    url, _ = server
    rec = CocRecord(DrivingDecision("Yield"), trace="yield")
    assert HttpJudge(url).triplet(rec, rec) == (True, True, True)


def test_retries_transient_failures(server):
    url, behavior = server
    behavior.fail_first = 2
    assert HttpJudge(url, max_attempts=3, backoff_s=0.01).rubric("a", "4") == 4
    assert behavior.calls == 3


def test_gives_up_after_max_attempts(server):
    url, behavior = server
    behavior.fail_first = 10
    with pytest.raises(JudgeTransportError):
        HttpJudge(url, max_attempts=2, backoff_s=0.01).rubric("a", "4")
    assert behavior.calls == 2


def test_timeout_is_transport_error(server):
    url, behavior = server
    behavior.delay = 0.5
    with pytest.raises(JudgeTransportError):
        HttpJudge(url, timeout_ms=50, max_attempts=1).rubric("a", "1")


def test_timeout_from_environment(server, monkeypatch):
    url, _ = server
    monkeypatch.setenv("COC_JUDGE_URL", url)
    monkeypatch.setenv("COC_JUDGE_TIMEOUT_MS", "1234")
    j = HttpJudge()
    assert j.url == url and j.timeout_ms == 1234


def test_missing_url(monkeypatch):
    monkeypatch.delenv("COC_JUDGE_URL", raising=False)
    with pytest.raises(ValidationError):
        HttpJudge()


@pytest.mark.parametrize("body", [b"not json", b"[1, 2]", b'{"score": 9}', b'{"score": "5"}', b'{"answers": [1]}'])
def test_malformed_responses(server, body):
    url, behavior = server
    behavior.body = body
    j = HttpJudge(url, max_attempts=1)
    rec = CocRecord(DrivingDecision("Yield"), trace="yield")
    with pytest.raises(JudgeProtocolError):
        if b"answers" in body:
            j.triplet(rec, rec)
        else:
            j.rubric("a", "b")


def test_client_error_is_not_retried(server):
    url, behavior = server
    behavior.status = 400
    with pytest.raises(JudgeProtocolError):
        HttpJudge(url, max_attempts=3, backoff_s=0.01).rubric("a", "1")
    assert behavior.calls == 1


def test_mismatched_id(server):
    url, behavior = server
    behavior.wrong_id = True
    with pytest.raises(JudgeProtocolError):
        HttpJudge(url, max_attempts=1).rubric("a", "1")


def test_fan_out_keeps_order_and_limit(server):
    url, behavior = server
    # later requests answer sooner, so completion order is reversed
    behavior.delay = lambda req: 0.02 * (6 - int(req["pred"])) if req["pred"].isdigit() else 0.0
    j = HttpJudge(url, max_in_flight=3)
    pairs = [("gt", str(i % 6)) for i in range(12)]
    assert j.rubric_many(pairs) == [i % 6 for i in range(12)]
    assert 1 < behavior.peak <= 3
