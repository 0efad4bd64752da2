import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from madacc.backend import (
    BackendResponse,
    ChatMessage,
    GenerationParams,
    LiveBackend,
    MockBackend,
    MockRule,
    RateLimiter,
    ResponseCache,
    Usage,
    backoff_delays,
    cache_key,
    cached_complete,
    load_mock_script,
    mock_script,
)
from madacc.errors import AuthError, CacheError, RefusalError, TransportError

PARAMS = GenerationParams("test-model", 0.0, 64)
PROBE = [ChatMessage("user", "probe")]
ENDPOINT = "https://llm.example/v1/chat/completions"


def ok_body(text="pong", usage=True):
    body = {"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]}
    if usage:
        body["usage"] = {"prompt_tokens": 7, "completion_tokens": 2}
    return body


class Server:
    """Scripted HTTP responses for the live backend."""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, Exception):
            raise item
        status, body = item
        return httpx.Response(status, json=body)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("MADACC_API_KEY", "secret")


def live(server, sleeps=None, **kw):
    client = httpx.Client(transport=httpx.MockTransport(server))
    sleep = sleeps.append if sleeps is not None else (lambda s: None)
    return LiveBackend(ENDPOINT, client=client, sleep=sleep, **kw)


# value types -----------------------------------------------------------------


def test_message_and_params_validation():
    with pytest.raises(ValueError):
        ChatMessage("tool", "x")
    with pytest.raises(ValueError):
        ChatMessage("user", "")
    with pytest.raises(ValueError):
        GenerationParams("m", temperature=2.5)
    with pytest.raises(ValueError):
        GenerationParams("m", max_output_tokens=0)


# mock --------------------------------------------------------------------------


def test_mock_scripted_echo():
    backend = mock_script([((None, "probe"), "pong")])
    assert backend.complete(PROBE, PARAMS).text == "pong"
    assert backend.complete(PROBE, GenerationParams("other", 1.3, 5)).text == "pong"


def test_mock_first_rule_wins_and_fallback():
    backend = mock_script([(("manager", "<TARGET>"), "first"), ((None, "<TARGET>"), "second")], fallback="UNSPECIFIED")
    msg = [ChatMessage("system", "sys"), ChatMessage("user", "x <TARGET>y</TARGET>")]
    assert backend.complete(msg, PARAMS, agent="manager").text == "first"
    assert backend.complete(msg, PARAMS, agent="judge").text == "second"
    assert backend.complete(PROBE, PARAMS, agent="judge").text == "UNSPECIFIED"


def test_mock_matches_last_user_message_only():
    backend = MockBackend([MockRule("manager", "needle", "hit")], fallback="miss")
    msgs = [ChatMessage("system", "needle"), ChatMessage("user", "hay"), ChatMessage("assistant", "needle")]
    assert backend.complete(msgs, PARAMS, agent="manager").text == "miss"


def test_mock_is_deterministic_and_records_calls():
    backend = MockBackend([MockRule(None, "", "same")])
    a = backend.complete(PROBE, PARAMS, agent="x")
    b = backend.complete(PROBE, PARAMS, agent="x")
    assert a == b
    assert len(backend.calls) == 2
    assert backend.calls_for("x")[0] == tuple(PROBE)


def test_mock_empty_reply_is_refusal():
    with pytest.raises(RefusalError):
        MockBackend([MockRule(None, "", "  ")]).complete(PROBE, PARAMS)


def test_load_mock_script(tmp_path):
    path = tmp_path / "script.yaml"
    path.write_text("fallback: nothing\nrules:\n  - {agent: judge, pattern: 'LABEL', response: 'LABEL: Claim'}\n")
    backend = load_mock_script(path)
    assert backend.fallback == "nothing"
    assert backend.rules == (MockRule("judge", "LABEL", "LABEL: Claim"),)


# live --------------------------------------------------------------------------


def test_live_wire_format(api_key):
    server = Server((200, ok_body()))
    resp = live(server).complete([ChatMessage("system", "s"), ChatMessage("user", "u")], GenerationParams("m", 0.7, 99, seed_hint=3))
    assert resp.text == "pong"
    assert resp.usage == Usage(7, 2)
    req = server.requests[0]
    assert req.headers["Authorization"] == "Bearer secret"
    assert json.loads(req.content) == {
        "model": "m",
        "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
        "temperature": 0.7,
        "max_tokens": 99,
        "seed": 3,
    }


def test_live_missing_key_fails_at_construction(monkeypatch):
    monkeypatch.delenv("MADACC_API_KEY", raising=False)
    with pytest.raises(AuthError, match="MADACC_API_KEY"):
        LiveBackend(ENDPOINT)


def test_live_custom_key_env(monkeypatch):
    monkeypatch.setenv("OTHER_KEY", "k")
    server = Server((200, ok_body()))
    client = httpx.Client(transport=httpx.MockTransport(server))
    LiveBackend(ENDPOINT, api_key_env="OTHER_KEY", client=client).complete(PROBE, PARAMS)
    assert server.requests[0].headers["Authorization"] == "Bearer k"


@pytest.mark.parametrize("status", [401, 403])
def test_live_auth_error_not_retried(api_key, status):
    server = Server((status, {"error": "bad key"}))
    with pytest.raises(AuthError):
        live(server).complete(PROBE, PARAMS)
    assert len(server.requests) == 1


def test_live_retries_transient_then_succeeds(api_key):
    sleeps = []
    server = Server((429, {}), (503, {}), httpx.ReadTimeout("slow"), (200, ok_body("done")))
    assert live(server, sleeps).complete(PROBE, PARAMS).text == "done"
    assert len(server.requests) == 4
    assert sleeps == [1.0, 2.0, 4.0]


def test_live_gives_up_after_five_attempts(api_key):
    sleeps = []
    server = Server((500, {}))
    with pytest.raises(TransportError, match="5 attempts"):
        live(server, sleeps).complete(PROBE, PARAMS)
    assert len(server.requests) == 5
    assert sleeps == [1.0, 2.0, 4.0, 8.0]
    assert sum(sleeps) == 15.0


def test_backoff_schedule():
    assert backoff_delays() == [1.0, 2.0, 4.0, 8.0]


def test_live_client_error_not_retried(api_key):
    server = Server((400, {"error": "bad request"}))
    with pytest.raises(TransportError):
        live(server).complete(PROBE, PARAMS)
    assert len(server.requests) == 1


@pytest.mark.parametrize(
    "body",
    [
        ok_body(""),
        {"choices": [{"message": {"content": None}, "finish_reason": "content_filter"}]},
        {"choices": [{"message": {"content": "partial"}, "finish_reason": "content_filter"}]},
    ],
)
def test_live_refusal(api_key, body):
    with pytest.raises(RefusalError):
        live(Server((200, body))).complete(PROBE, PARAMS)


def test_live_usage_defaults_to_zero(api_key):
    assert live(Server((200, ok_body(usage=False)))).complete(PROBE, PARAMS).usage == Usage(0, 0)


def test_live_uses_rate_limiter(api_key):
    class Counting:
        n = 0

        def acquire(self):
            self.n += 1

    limiter = Counting()
    live(Server((503, {}), (200, ok_body())), rate_limiter=limiter).complete(PROBE, PARAMS)
    assert limiter.n == 2


# rate limiter -----------------------------------------------------------------


class VirtualClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.now += seconds


def test_rate_limiter_window_virtual_clock():
    clock = VirtualClock()
    limiter = RateLimiter(5, clock=clock, sleep=clock.sleep)
    stamps = []
    for _ in range(23):
        limiter.acquire()
        stamps.append(clock.now)
        clock.now += 0.5
    for t in stamps:
        assert sum(1 for s in stamps if t <= s < t + 60) <= 5
    assert stamps[5] >= stamps[0] + 60


@given(st.integers(min_value=1, max_value=6), st.lists(st.floats(min_value=0, max_value=30), min_size=1, max_size=40))
def test_rate_limiter_never_exceeds_limit(rpm, gaps):
    clock = VirtualClock()
    limiter = RateLimiter(rpm, clock=clock, sleep=clock.sleep)
    stamps = []
    for gap in gaps:
        clock.now += gap
        limiter.acquire()
        stamps.append(clock.now)
    for t in stamps:
        assert sum(1 for s in stamps if t <= s < t + 60) <= rpm


# cache -------------------------------------------------------------------------


def test_cache_miss_then_hit(tmp_path):
    backend = MockBackend([MockRule(None, "", "pong")])
    cache = ResponseCache(tmp_path)
    first = cached_complete(backend, PROBE, PARAMS, cache)
    second = cached_complete(backend, PROBE, PARAMS, cache)
    assert first.text == second.text == "pong"
    assert len(backend.calls) == 1
    entry = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert set(entry) == {"key", "response_text", "usage", "created_at"}


def test_cache_distinguishes_temperature(tmp_path):
    backend = MockBackend([MockRule(None, "", "pong")])
    cache = ResponseCache(tmp_path)
    cached_complete(backend, PROBE, PARAMS, cache)
    cached_complete(backend, PROBE, GenerationParams("test-model", 0.7, 64), cache)
    assert len(backend.calls) == 2
    assert len(list(tmp_path.glob("*.json"))) == 2


def test_corrupted_cache_entry(tmp_path):
    cache = ResponseCache(tmp_path)
    key = cache_key(PROBE, PARAMS)
    cache.put(key, BackendResponse("pong"))
    path = cache.path(key)
    path.write_text(path.read_text()[:10])
    with pytest.raises(CacheError, match=key):
        cached_complete(MockBackend(), PROBE, PARAMS, cache)


messages = st.lists(
    st.builds(ChatMessage, st.sampled_from(["system", "user", "assistant"]), st.text(min_size=1, max_size=8)),
    min_size=1,
    max_size=3,
)
params = st.builds(
    GenerationParams,
    st.sampled_from(["a", "b"]),
    st.sampled_from([0.0, 0.7, 1.0]),
    st.sampled_from([16, 32]),
    st.sampled_from([None, 1]),
)


@given(messages, params, messages, params)
def test_cache_key_collision_requires_equality(m1, p1, m2, p2):
    if cache_key(m1, p1) == cache_key(m2, p2):
        assert (tuple(m1), p1) == (tuple(m2), p2)
    else:
        assert (tuple(m1), p1) != (tuple(m2), p2)
