"""Prompt assembly, chat-completions client and the offline replay backend."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

import requests

from arete.errors import (
    ApiError,
    AuthError,
    FixtureMissingError,
    MalformedResponseError,
    NetworkError,
    RateLimitExhaustedError,
    RequestTimeoutError,
)
from arete.ingest import Chunk
from arete.ratelimit import Clock, SlidingWindowLimiter

logger = logging.getLogger(__name__)

API_KEY_ENV = "ARETE_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-3.5-turbo"
TIER_REQUESTS_PER_MINUTE = {"free": 3, "premium": 500}
BACKOFF_BASE_SECONDS = 2.0
BACKOFF_JITTER = 0.25

PROMPT_INSTRUCTIONS = resources.files("arete").joinpath("resources/prompt.txt").read_text("utf-8")


@dataclass(frozen=True)
class LlmConfig:
    api_key: str = field(default="", repr=False)
    endpoint_url: str = DEFAULT_ENDPOINT
    model_name: str = DEFAULT_MODEL
    tier: str = "free"
    requests_per_minute: int = 0  # 0 selects the tier default
    max_retries: int = 3
    timeout_seconds: float = 60.0

    def __post_init__(self) -> None:
        if self.tier not in TIER_REQUESTS_PER_MINUTE:
            raise ValueError(f"tier must be one of {sorted(TIER_REQUESTS_PER_MINUTE)}")
        if self.requests_per_minute == 0:
            object.__setattr__(self, "requests_per_minute", TIER_REQUESTS_PER_MINUTE[self.tier])
        if self.requests_per_minute < 1:
            raise ValueError("requests_per_minute must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if not self.timeout_seconds > 0:
            raise ValueError("timeout_seconds must be positive")

    @classmethod
    def from_env(cls, **kwargs) -> LlmConfig:
        kwargs.setdefault("api_key", os.environ.get(API_KEY_ENV, ""))
        return cls(**kwargs)


@dataclass(frozen=True)
class PromptText:
    text: str
    chunk_ref: tuple[str, int]

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_ref: tuple[str, int]
    attempts: int
    backend: str  # "live" or "replay"


def build_prompt(chunk: Chunk) -> PromptText:
    if not chunk.text:
        raise ValueError("cannot build a prompt from an empty chunk")
    return PromptText(f"{PROMPT_INSTRUCTIONS}\n{chunk.text}", chunk.ref)


def redact(text: str, secret: str) -> str:
    if secret:
        text = text.replace(secret, "<redacted>")
    return text


class Completer(Protocol):
    def complete(self, prompt: PromptText) -> CompletionResult: ...


class ChatClient:
    """OpenAI-compatible chat-completions client with rate limiting and retry.

    One client owns one limiter; share the client between workers to share
    the request budget.
    """

    def __init__(
        self,
        config: LlmConfig,
        *,
        clock: Clock | None = None,
        limiter: SlidingWindowLimiter | None = None,
        session: requests.Session | None = None,
        rng: random.Random | None = None,
    ):
        self.config = config
        self.clock = clock or Clock()
        self.limiter = limiter or SlidingWindowLimiter(config.requests_per_minute, 60.0, self.clock)
        self.session = session or requests.Session()
        self.rng = rng or random.Random()
        self.last_delays: list[float] = []

    @property
    def url(self) -> str:
        return self.config.endpoint_url.rstrip("/") + "/chat/completions"

    def _backoff(self, attempt: int, previous: float, retry_after: float | None) -> float:
        delay = BACKOFF_BASE_SECONDS * 2**attempt * (1 + BACKOFF_JITTER * self.rng.random())
        if retry_after is not None:
            delay = max(delay, retry_after)
        return max(delay, previous)

    def complete(self, prompt: PromptText) -> CompletionResult:
        cfg = self.config
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": 0,
        }
        headers = {"Authorization": f"Bearer {cfg.api_key}", "Content-Type": "application/json"}
        self.last_delays = []
        delay = 0.0
        for attempt in range(cfg.max_retries + 1):
            self.limiter.acquire()
            logger.debug(
                "POST %s chunk=%s attempt=%d payload=%s",
                self.url, prompt.chunk_ref, attempt + 1,
                redact(json.dumps(payload, ensure_ascii=False), cfg.api_key),
            )
            try:
                resp = self.session.post(self.url, json=payload, headers=headers, timeout=cfg.timeout_seconds)
            except requests.Timeout:
                raise RequestTimeoutError(f"no response within {cfg.timeout_seconds}s") from None
            except requests.RequestException as exc:
                raise NetworkError(redact(f"request to {self.url} failed: {exc}", cfg.api_key)) from None
            status = resp.status_code
            logger.debug("response %d for chunk=%s", status, prompt.chunk_ref)
            if status in (401, 403):
                raise AuthError(f"endpoint rejected the API key (HTTP {status})")
            if status == 429 or status >= 500:
                if attempt == cfg.max_retries:
                    if status == 429:
                        raise RateLimitExhaustedError(f"still rate limited after {attempt + 1} attempts")
                    raise ApiError(f"HTTP {status} after {attempt + 1} attempts", status)
                delay = self._backoff(attempt, delay, _retry_after(resp))
                self.last_delays.append(delay)
                logger.info("HTTP %d, retrying in %.1fs", status, delay)
                self.clock.sleep(delay)
                continue
            if status >= 400:
                raise ApiError(redact(f"HTTP {status}: {resp.text[:200]}", cfg.api_key), status)
            return CompletionResult(_assistant_text(resp), prompt.chunk_ref, attempt + 1, "live")
        raise AssertionError("unreachable")


def _retry_after(resp: requests.Response) -> float | None:
    value = resp.headers.get("Retry-After")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


def _assistant_text(resp: requests.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise MalformedResponseError("response has no assistant message") from None
    if not isinstance(content, str):
        raise MalformedResponseError("assistant message content is not text")
    return content


def request_completion(config: LlmConfig, prompt: PromptText) -> CompletionResult:
    """One-shot convenience wrapper; reuse a ChatClient to share rate limits."""
    return ChatClient(config).complete(prompt)


class FixtureStore:
    """Directory of recorded responses, one JSON file per prompt.

    Lookup is by exact prompt hash first, then by (document id, chunk index).
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._by_hash: dict[str, str] = {}
        self._by_ref: dict[tuple[str, int], str] = {}
        if self.path.is_dir():
            for file in sorted(self.path.glob("*.json")):
                rec = json.loads(file.read_text("utf-8"))
                self._by_hash[rec["prompt_sha256"]] = rec["response_text"]
                if rec.get("chunk_ref") is not None:
                    doc, idx = rec["chunk_ref"]
                    self._by_ref.setdefault((doc, int(idx)), rec["response_text"])

    def lookup(self, prompt: PromptText) -> str:
        if prompt.sha256 in self._by_hash:
            return self._by_hash[prompt.sha256]
        if prompt.chunk_ref in self._by_ref:
            return self._by_ref[prompt.chunk_ref]
        raise FixtureMissingError(f"no recorded response for chunk {prompt.chunk_ref} in {self.path}")

    def record(self, prompt: PromptText, response_text: str) -> Path:
        self.path.mkdir(parents=True, exist_ok=True)
        rec = {
            "prompt_sha256": prompt.sha256,
            "chunk_ref": list(prompt.chunk_ref),
            "response_text": response_text,
        }
        out = self.path / f"{prompt.sha256[:16]}.json"
        out.write_text(json.dumps(rec, indent=2, ensure_ascii=False) + "\n", "utf-8")
        self._by_hash[prompt.sha256] = response_text
        self._by_ref.setdefault(prompt.chunk_ref, response_text)
        return out

    def complete(self, prompt: PromptText) -> CompletionResult:
        return CompletionResult(self.lookup(prompt), prompt.chunk_ref, 1, "replay")


def replay_completion(fixture_store: str | Path, prompt: PromptText) -> CompletionResult:
    return FixtureStore(fixture_store).complete(prompt)
