import hashlib
import logging
import random
import threading

import pytest
from conftest import FakeClock
from stub_server import StubServer, chat_body

from arete.errors import (
    ApiError,
    AuthError,
    FixtureMissingError,
    MalformedResponseError,
    NetworkError,
    RateLimitExhaustedError,
)
from arete.ingest import Chunk
from arete.llm import (
    PROMPT_INSTRUCTIONS,
    ChatClient,
    FixtureStore,
    LlmConfig,
    build_prompt,
    replay_completion,
)
from arete.ratelimit import SlidingWindowLimiter

KEY = "sk-test-0123456789abcdef"
INSTRUCTIONS_SHA256 = "10736c04e98a6967c9acfcd8459ee4c1a5217ea0fe8fedbe42b849fa093c4c71"


def chunk(text="X", doc="d", i=0):
    return Chunk(doc, i, text, 1)


def client_for(stub, clock, **kw):
    cfg = LlmConfig(api_key=KEY, endpoint_url=stub.url, **kw)
    return ChatClient(cfg, clock=clock, rng=random.Random(0))


def test_instruction_text_is_frozen():
    assert hashlib.sha256(PROMPT_INSTRUCTIONS.encode("utf-8")).hexdigest() == INSTRUCTIONS_SHA256
    assert PROMPT_INSTRUCTIONS.startswith("Read the following document then reply only a table")
    assert PROMPT_INSTRUCTIONS.endswith("outside references:")


def test_prompt_layout():
    p = build_prompt(chunk("X"))
    assert p.text == PROMPT_INSTRUCTIONS + "\nX"
    assert p.chunk_ref == ("d", 0)
    q = build_prompt(chunk("Y", i=1))
    n = len(PROMPT_INSTRUCTIONS) + 1
    assert p.text[:n] == q.text[:n] and p.text[n:] != q.text[n:]


def test_empty_chunk_rejected():
    with pytest.raises(ValueError):
        build_prompt(chunk(""))


def test_config_defaults_and_validation(monkeypatch):
    assert LlmConfig().requests_per_minute == 3
    assert LlmConfig(tier="premium").requests_per_minute == 500
    assert LlmConfig(requests_per_minute=7).requests_per_minute == 7
    for bad in (dict(tier="gold"), dict(requests_per_minute=-1), dict(timeout_seconds=0), dict(max_retries=-1)):
        with pytest.raises(ValueError):
            LlmConfig(**bad)
    monkeypatch.setenv("ARETE_API_KEY", "from-env")
    assert LlmConfig.from_env().api_key == "from-env"
    assert KEY not in repr(LlmConfig(api_key=KEY))


def test_success_payload(fake_clock):
    with StubServer([(200, chat_body("| a | b | c |"), None)], fake_clock) as stub:
        res = client_for(stub, fake_clock, model_name="gpt-4o").complete(build_prompt(chunk("hello")))
    assert (res.text, res.attempts, res.backend) == ("| a | b | c |", 1, "live")
    req = stub.requests[0]
    assert req["path"] == "/chat/completions"
    assert req["body"] == {
        "model": "gpt-4o",
        "messages": [{"role": "user", "content": PROMPT_INSTRUCTIONS + "\nhello"}],
        "temperature": 0,
    }
    assert req["headers"]["Authorization"] == f"Bearer {KEY}"


def test_retry_then_success(fake_clock):
    script = [(429, {"error": "slow"}, None), (429, {"error": "slow"}, None), (200, chat_body("T"), None)]
    with StubServer(script, fake_clock) as stub:
        c = client_for(stub, fake_clock, max_retries=3, requests_per_minute=100)
        res = c.complete(build_prompt(chunk()))
    assert (res.text, res.attempts) == ("T", 3)
    assert len(c.last_delays) == 2
    assert c.last_delays[0] >= 2.0 and c.last_delays[1] >= 4.0
    assert c.last_delays == sorted(c.last_delays)


def test_retry_after_header_is_honoured(fake_clock):
    script = [(503, "{}", {"Retry-After": "30"}), (200, chat_body("ok"), None)]
    with StubServer(script, fake_clock) as stub:
        c = client_for(stub, fake_clock, requests_per_minute=100)
        assert c.complete(build_prompt(chunk())).text == "ok"
    assert c.last_delays == [30.0]


def test_rate_limit_exhausted(fake_clock):
    with StubServer([(429, "{}", None)], fake_clock) as stub:
        c = client_for(stub, fake_clock, max_retries=2, requests_per_minute=100)
        with pytest.raises(RateLimitExhaustedError):
            c.complete(build_prompt(chunk()))
    assert len(stub.requests) == 3
    assert c.last_delays == sorted(c.last_delays)


def test_server_error_exhausted(fake_clock):
    with StubServer([(500, "{}", None)], fake_clock) as stub:
        with pytest.raises(ApiError) as info:
            client_for(stub, fake_clock, max_retries=1, requests_per_minute=100).complete(build_prompt(chunk()))
    assert info.value.status == 500


@pytest.mark.parametrize("status", [401, 403])
def test_auth_errors_are_not_retried(fake_clock, status):
    with StubServer([(status, "{}", None)], fake_clock) as stub:
        with pytest.raises(AuthError):
            client_for(stub, fake_clock).complete(build_prompt(chunk()))
    assert len(stub.requests) == 1


def test_other_client_error(fake_clock):
    with StubServer([(400, {"error": "bad"}, None)], fake_clock) as stub:
        with pytest.raises(ApiError):
            client_for(stub, fake_clock).complete(build_prompt(chunk()))


@pytest.mark.parametrize("body", [{"choices": []}, {"nothing": 1}, "not json", {"choices": [{"message": {"content": None}}]}])
def test_malformed_response(fake_clock, body):
    with StubServer([(200, body, None)], fake_clock) as stub:
        with pytest.raises(MalformedResponseError):
            client_for(stub, fake_clock).complete(build_prompt(chunk()))


def test_network_failure_is_typed(fake_clock):
    cfg = LlmConfig(api_key=KEY, endpoint_url="http://127.0.0.1:9", timeout_seconds=2)
    with pytest.raises(NetworkError) as info:
        ChatClient(cfg, clock=fake_clock).complete(build_prompt(chunk()))
    assert KEY not in str(info.value)


def test_key_never_logged(fake_clock, caplog):
    caplog.set_level(logging.DEBUG, logger="arete")
    script = [(429, "{}", None), (200, chat_body("ok"), None)]
    with StubServer(script, fake_clock) as stub:
        client_for(stub, fake_clock, requests_per_minute=100).complete(build_prompt(chunk()))
    logs = caplog.text
    assert "chat/completions" in logs
    for i in range(len(KEY) - 4):
        assert KEY[i : i + 5] not in logs


def windows_ok(stamps, limit, window=60.0):
    stamps = sorted(stamps)
    return all(sum(1 for t in stamps if s <= t < s + window) <= limit for s in stamps)


def test_sliding_window_against_stub(fake_clock):
    with StubServer([(200, chat_body("ok"), None)], fake_clock) as stub:
        c = client_for(stub, fake_clock, requests_per_minute=3)
        for i in range(10):
            c.complete(build_prompt(chunk(str(i), i=i)))
    assert len(stub.stamps) == 10
    assert windows_ok(stub.stamps, 3)
    assert stub.stamps[-1] - stub.stamps[0] >= 3 * 60.0


def test_limiter_is_shared_between_threads():
    clock = FakeClock()
    lock = threading.Lock()

    class LockedClock:
        def now(self):
            with lock:
                return clock.now()

        def sleep(self, s):
            with lock:
                clock.sleep(s)

    limiter = SlidingWindowLimiter(5, 60.0, LockedClock())
    times = []

    def worker():
        for _ in range(6):
            times.append(limiter.acquire())

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(times) == 24
    assert windows_ok(times, 5)


def test_limiter_validation():
    with pytest.raises(ValueError):
        SlidingWindowLimiter(0)
    with pytest.raises(ValueError):
        SlidingWindowLimiter(1, window=0)


def test_fixture_store_round_trip(tmp_path):
    store = FixtureStore(tmp_path / "fx")
    p = build_prompt(chunk("some text", "doc.txt", 2))
    store.record(p, "table T")
    again = FixtureStore(tmp_path / "fx")
    first = replay_completion(tmp_path / "fx", p)
    assert first == again.complete(p)
    assert (first.text, first.backend, first.attempts, first.prompt_ref) == ("table T", "replay", 1, ("doc.txt", 2))


def test_fixture_falls_back_to_chunk_ref(tmp_path):
    store = FixtureStore(tmp_path)
    store.record(build_prompt(chunk("old text", "doc.txt", 0)), "T")
    assert FixtureStore(tmp_path).lookup(build_prompt(chunk("edited text", "doc.txt", 0))) == "T"


def test_fixture_missing(tmp_path):
    with pytest.raises(FixtureMissingError):
        replay_completion(tmp_path, build_prompt(chunk("unknown")))
