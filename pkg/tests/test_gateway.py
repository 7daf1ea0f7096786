from __future__ import annotations

import json
import threading

import httpx
import pytest

from boad.llm.gateway import (
    ChatExchange,
    Gateway,
    HttpProvider,
    ProtocolError,
    ProviderConfig,
    TransportError,
)
from boad.llm.mock import MockMiss, MockProvider

SECRET = "sk-test-0123456789abcdef"


def _ok(text: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def _gateway(handler, retry_budget=2, sink=None, sleeps=None):
    config = ProviderConfig(base_url="http://llm.invalid/v1", retry_budget=retry_budget, backoff=0.5)
    client = httpx.Client(transport=httpx.MockTransport(handler))
    sleeps = sleeps if sleeps is not None else []
    return Gateway(HttpProvider(config, client), config, sink=sink, sleep=sleeps.append)


def test_exchange_defaults_and_validation():
    ex = ChatExchange.user("hi")
    assert ex.temperature == 0.0
    with pytest.raises(ValueError):
        ChatExchange(messages=())
    with pytest.raises(ValueError):
        ChatExchange(messages=(("assistant", "x"),))
    with pytest.raises(ValueError):
        ChatExchange(messages=(("user", "x"),), temperature=-1)


def test_payload_shape_and_auth_header(monkeypatch):
    monkeypatch.setenv("BOAD_API_KEY", SECRET)
    seen = {}

    def handler(request: httpx.Request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return _ok("pong")

    gw = _gateway(handler)
    assert gw.complete(ChatExchange.user("ping", model_name="m1")) == "pong"
    assert seen["url"] == "http://llm.invalid/v1/chat/completions"
    assert seen["auth"] == f"Bearer {SECRET}"
    assert seen["body"]["messages"] == [{"role": "user", "content": "ping"}]
    assert seen["body"]["model"] == "m1"
    assert seen["body"]["temperature"] == 0.0


def test_transient_failures_retried_with_backoff():
    replies = iter([httpx.Response(503, text="busy"), httpx.Response(429, text="slow"), _ok("done")])
    sleeps: list[float] = []
    gw = _gateway(lambda r: next(replies), sleeps=sleeps)
    assert gw.complete(ChatExchange.user("x")) == "done"
    assert sleeps == [0.5, 1.0]
    assert gw.records[-1].attempts == 3


def test_unreachable_endpoint_exhausts_budget():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("connection refused", request=request)

    gw = _gateway(handler, retry_budget=2)
    with pytest.raises(TransportError):
        gw.complete(ChatExchange.user("x"))
    assert len(calls) == 3  # first attempt plus two retries
    assert gw.records[-1].error


def test_client_error_surfaces_body_without_retry():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad model name")

    gw = _gateway(handler)
    with pytest.raises(ProtocolError, match="bad model name"):
        gw.complete(ChatExchange.user("x"))
    assert len(calls) == 1


def test_malformed_body_is_protocol_error():
    gw = _gateway(lambda r: httpx.Response(200, json={"nothing": True}))
    with pytest.raises(ProtocolError):
        gw.complete(ChatExchange.user("x"))


def test_credential_never_persisted(monkeypatch, tmp_path):
    monkeypatch.setenv("BOAD_API_KEY", SECRET)
    log = tmp_path / "calls.jsonl"

    def sink(record):
        with open(log, "a") as fh:
            fh.write(json.dumps(record.to_dict()) + "\n")

    replies = iter([httpx.Response(500, text="oops"), _ok("fine")])
    gw = _gateway(lambda r: next(replies), sink=sink)
    gw.complete(ChatExchange.user("hello"))
    persisted = log.read_text() + json.dumps(gw.config.to_dict()) + repr(gw.config.to_dict())
    assert SECRET not in persisted
    assert gw.config.to_dict()["credential_env"] == "BOAD_API_KEY"


def test_call_records_hash_prompt_and_response():
    gw = _gateway(lambda r: _ok("answer"))
    ex = ChatExchange.user("q", template_id="helpful_judge_v1")
    gw.complete(ex)
    rec = gw.records[0]
    assert rec.prompt_hash == ex.content_hash()
    assert rec.template_id == "helpful_judge_v1"
    assert rec.latency_s >= 0


def test_mock_table_lookup_and_determinism():
    ex = ChatExchange.user("what?")
    mock = MockProvider()
    mock.pin(ex, "canned")
    gw = Gateway(mock)
    assert gw.complete(ex) == gw.complete(ex) == "canned"


def test_mock_resolution_order():
    pinned = ChatExchange.user("a", template_id="t")
    other = ChatExchange.user("b", template_id="t")
    mock = MockProvider(scripts={"t": lambda ex: "scripted"})
    mock.pin(pinned, "table")
    assert mock.send(pinned) == "table"
    assert mock.send(other) == "scripted"
    with pytest.raises(MockMiss):
        mock.send(ChatExchange.user("c", template_id="unknown"))


def test_mock_sequence_scripts():
    mock = MockProvider(scripts={"t": ["one", "two"]})
    ex = ChatExchange.user("x", template_id="t")
    assert [mock.send(ex), mock.send(ex)] == ["one", "two"]
    with pytest.raises(MockMiss):
        mock.send(ex)


def test_content_hash_ignores_template_id_but_not_content():
    a = ChatExchange.user("x", template_id="t1")
    b = ChatExchange.user("x", template_id="t2")
    c = ChatExchange.user("y", template_id="t1")
    assert a.content_hash() == b.content_hash() != c.content_hash()


def test_in_flight_limit():
    active, peak = [0], [0]
    lock = threading.Lock()
    gate = threading.Event()

    class Slow:
        def send(self, ex):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            gate.wait(0.05)
            with lock:
                active[0] -= 1
            return "ok"

    gw = Gateway(Slow(), ProviderConfig(max_in_flight=2))
    threads = [threading.Thread(target=gw.complete, args=(ChatExchange.user(str(i)),)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2
    assert len(gw.records) == 6
