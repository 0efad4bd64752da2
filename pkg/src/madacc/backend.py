"""Chat-completion backends: a live HTTP client, a scripted mock, and a response cache.

Every backend exposes ``complete(messages, params, agent=None)``. ``agent`` is
the role tag of the calling agent (``manager``, ``debater``, ``judge``,
``vanilla``...); only the mock uses it.
"""

from __future__ import annotations

import collections
import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
import yaml

from .errors import AuthError, CacheError, RefusalError, TransportError

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
DEFAULT_API_KEY_ENV = "MADACC_API_KEY"

MAX_ATTEMPTS = 5
BACKOFF_BASE = 1.0  # seconds
BACKOFF_FACTOR = 2.0


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"invalid chat role {self.role!r}")
        if not self.content:
            raise ValueError("chat message content must be non-empty")

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class GenerationParams:
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed_hint: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens)

    def to_json(self) -> dict:
        return {"input_tokens": self.input_tokens, "output_tokens": self.output_tokens}


@dataclass(frozen=True)
class BackendResponse:
    text: str
    usage: Usage = field(default_factory=Usage)
    latency_ms: int = 0


class Backend(Protocol):
    def complete(
        self, messages: Sequence[ChatMessage], params: GenerationParams, agent: str | None = None
    ) -> BackendResponse: ...


def _check_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("at least one message is required")


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MockRule:
    """``agent`` of ``None`` or ``"*"`` matches any caller; an empty pattern matches any text."""

    agent: str | None
    pattern: str
    response: str

    def matches(self, agent: str | None, text: str) -> bool:
        if self.agent not in (None, "*") and self.agent != agent:
            return False
        return self.pattern in text


class MockBackend:
    """Deterministic scripted backend.

    The first rule matching the last user message wins; ``fallback`` is
    returned when none does. Calls are recorded in ``calls`` for inspection.
    """

    def __init__(self, rules: Sequence[MockRule] = (), fallback: str = "UNSPECIFIED"):
        self.rules = tuple(rules)
        self.fallback = fallback
        self.calls: list[tuple[str | None, tuple[ChatMessage, ...], GenerationParams]] = []
        self._lock = threading.Lock()

    def respond(self, agent: str | None, messages: Sequence[ChatMessage]) -> str:
        last_user = next((m.content for m in reversed(messages) if m.role == "user"), "")
        for rule in self.rules:
            if rule.matches(agent, last_user):
                return rule.response
        return self.fallback

    def complete(self, messages, params, agent=None) -> BackendResponse:
        _check_messages(messages)
        with self._lock:
            self.calls.append((agent, tuple(messages), params))
        text = self.respond(agent, messages)
        if not text.strip():
            raise RefusalError("mock backend returned an empty completion")
        usage = Usage(
            input_tokens=sum(len(m.content.split()) for m in messages),
            output_tokens=len(text.split()),
        )
        return BackendResponse(text, usage, 0)

    def calls_for(self, agent: str) -> list[tuple[ChatMessage, ...]]:
        return [msgs for a, msgs, _ in self.calls if a == agent]


def mock_script(rules, fallback: str = "UNSPECIFIED") -> MockBackend:
    """Build a mock from ``(matcher, response)`` pairs, matcher = ``(agent, pattern)``."""
    built = []
    for rule in rules:
        if isinstance(rule, MockRule):
            built.append(rule)
        else:
            (agent, pattern), response = rule
            built.append(MockRule(agent, pattern, response))
    return MockBackend(built, fallback)


def load_mock_script(path: Path | str) -> MockBackend:
    """Load a YAML/JSON script: ``{fallback: str, rules: [{agent, pattern, response}]}``."""
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    rules = [
        MockRule(r.get("agent"), r.get("pattern", ""), str(r["response"]))
        for r in data.get("rules", [])
    ]
    return MockBackend(rules, str(data.get("fallback", "UNSPECIFIED")))


# ---------------------------------------------------------------------------
# Rate limiting
# ---------------------------------------------------------------------------


class RateLimiter:
    """Sliding-window limiter: at most ``rpm`` dispatches in any 60 s window."""

    def __init__(
        self,
        rpm: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        window: float = 60.0,
    ):
        if rpm <= 0:
            raise ValueError("rpm must be positive")
        self.rpm = rpm
        self.window = window
        self._clock = clock
        self._sleep = sleep
        self._stamps: collections.deque[float] = collections.deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self._clock()
                while self._stamps and now >= self._stamps[0] + self.window:
                    self._stamps.popleft()
                if len(self._stamps) < self.rpm:
                    self._stamps.append(now)
                    return
                wake = self._stamps[0] + self.window
                # at least one ulp, or a virtual clock can round back below wake forever
                self._sleep(max(wake - now, math.ulp(wake)))


# ---------------------------------------------------------------------------
# Live backend
# ---------------------------------------------------------------------------


def backoff_delays(attempts: int = MAX_ATTEMPTS) -> list[float]:
    """Sleep before each retry: 1, 2, 4, 8 seconds for five attempts."""
    return [BACKOFF_BASE * BACKOFF_FACTOR**i for i in range(attempts - 1)]


class LiveBackend:
    """OpenAI-compatible chat-completions client (Gemini exposes the same shape).

    Raises :class:`AuthError` at construction when the API key variable is unset.
    """

    def __init__(
        self,
        endpoint_url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
        rate_limiter: RateLimiter | None = None,
        max_attempts: int = MAX_ATTEMPTS,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        api_key = os.environ.get(api_key_env, "")
        if not api_key:
            raise AuthError(f"environment variable {api_key_env} is not set")
        self.endpoint_url = endpoint_url
        self.rate_limiter = rate_limiter
        self.max_attempts = max_attempts
        self._sleep = sleep
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def _payload(self, messages, params: GenerationParams) -> dict:
        payload = {
            "model": params.model_id,
            "messages": [m.to_json() for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if params.seed_hint is not None:
            payload["seed"] = params.seed_hint
        return payload

    def complete(self, messages, params, agent=None) -> BackendResponse:
        _check_messages(messages)
        payload = self._payload(messages, params)
        delays = backoff_delays(self.max_attempts)
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(delays[attempt - 1])
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            started = time.monotonic()
            try:
                resp = self._client.post(self.endpoint_url, json=payload, headers=self._headers)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last_error)
                continue
            latency = int((time.monotonic() - started) * 1000)
            if resp.status_code in (401, 403):
                raise AuthError(f"HTTP {resp.status_code} from {self.endpoint_url}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.max_attempts, last_error)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp, latency)
        raise TransportError(f"gave up after {self.max_attempts} attempts ({last_error})")

    @staticmethod
    def _parse(resp: httpx.Response, latency_ms: int) -> BackendResponse:
        try:
            data = resp.json()
            choice = data["choices"][0]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response body: {exc!r}") from None
        text = (choice.get("message") or {}).get("content") or ""
        if not text.strip() or choice.get("finish_reason") == "content_filter":
            raise RefusalError(f"empty or blocked completion (finish_reason={choice.get('finish_reason')})")
        usage = data.get("usage") or {}
        return BackendResponse(
            text,
            Usage(int(usage.get("prompt_tokens") or 0), int(usage.get("completion_tokens") or 0)),
            latency_ms,
        )


# ---------------------------------------------------------------------------
# Response cache
# ---------------------------------------------------------------------------


def cache_key(messages: Sequence[ChatMessage], params: GenerationParams) -> str:
    blob = json.dumps(
        {
            "model_id": params.model_id,
            "messages": [[m.role, m.content] for m in messages],
            "temperature": params.temperature,
            "max_output_tokens": params.max_output_tokens,
            "seed_hint": params.seed_hint,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed cache: one JSON file per entry under ``directory``."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> BackendResponse | None:
        path = self.path(key)
        with self._lock:
            if not path.exists():
                return None
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
                usage = data.get("usage") or {}
                return BackendResponse(
                    data["response_text"],
                    Usage(int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0))),
                    0,
                )
            except (OSError, ValueError, KeyError, TypeError) as exc:
                raise CacheError(key, f"unreadable entry ({exc})") from None

    def put(self, key: str, response: BackendResponse) -> None:
        entry = {
            "key": key,
            "response_text": response.text,
            "usage": response.usage.to_json(),
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        path = self.path(key)
        tmp = path.with_suffix(f".tmp{threading.get_ident()}")
        with self._lock:
            try:
                tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
                os.replace(tmp, path)
            except OSError as exc:
                raise CacheError(key, f"write failed ({exc})") from None


def cached_complete(
    backend: Backend,
    messages: Sequence[ChatMessage],
    params: GenerationParams,
    cache: ResponseCache,
    agent: str | None = None,
) -> BackendResponse:
    key = cache_key(messages, params)
    hit = cache.get(key)
    if hit is not None:
        return hit
    response = backend.complete(messages, params, agent=agent)
    cache.put(key, response)
    return response


class CachingBackend:
    """Wraps any backend so that every call goes through :func:`cached_complete`."""

    def __init__(self, inner: Backend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache

    def complete(self, messages, params, agent=None) -> BackendResponse:
        return cached_complete(self.inner, messages, params, self.cache, agent=agent)
