"""Provider-agnostic chat-completion access.

Two wire dialects are supported (openai-compatible and anthropic-compatible
chat endpoints) plus a deterministic mock for offline runs. The client owns
the retry policy: transient failures (HTTP 429/5xx, timeouts) are retried
with exponential backoff and bounded jitter; auth failures and other 4xx
responses are never retried.

A cassette file can capture (key, response) records during a live run so the
whole session replays offline through :func:`mock_from_fixture`.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import httpx

from .errors import (
    AuthError,
    FixtureMissingKey,
    ProviderError,
    RateLimitExhausted,
    Timeout,
)
from .prompts import PromptBundle

PROVIDER_KINDS = ("openai-compatible", "anthropic-compatible", "mock")

CREDENTIAL_ENV = {
    "openai-compatible": "OPENAI_API_KEY",
    "anthropic-compatible": "ANTHROPIC_API_KEY",
}


@dataclass(frozen=True)
class ModelSpec:
    provider: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    request_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.provider not in PROVIDER_KINDS:
            raise ValueError(f"unknown provider {self.provider!r}; expected one of {PROVIDER_KINDS}")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    model_name: str
    latency_ms: float
    attempt_count: int
    token_usage: tuple[int, int] | None = None


@dataclass(frozen=True)
class ProviderReply:
    text: str
    token_usage: tuple[int, int] | None = None


class _StatusSignal(Exception):
    """Internal: a provider returned a non-success HTTP status."""

    def __init__(self, status: int, body: str = "") -> None:
        self.status = status
        self.body = body
        super().__init__(f"status {status}")


class _TimeoutSignal(Exception):
    """Internal: a provider attempt timed out."""


def bundle_key(bundle: PromptBundle) -> str:
    """Stable content key for a prompt, used for cassettes and mock lookup."""
    payload = "\x1f".join(
        (bundle.strategy.value, str(bundle.pass_number), bundle.system_text, bundle.user_text)
    )
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


class _TokenBucket:
    """Simple thread-safe token bucket; acquire() blocks until a slot frees."""

    def __init__(self, rate_per_second: float, burst: int = 1, sleep=time.sleep) -> None:
        if rate_per_second <= 0:
            raise ValueError("rate must be positive")
        self._rate = rate_per_second
        self._capacity = float(max(1, burst))
        self._tokens = self._capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()
        self._sleep = sleep

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


class LlmClient:
    """Shareable completion client with retries, rate limiting, and an in-flight cap."""

    def __init__(
        self,
        provider,
        *,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        backoff_jitter: float = 0.5,
        requests_per_second: float | None = None,
        max_in_flight: int | None = None,
        sleep=time.sleep,
        rng: random.Random | None = None,
    ) -> None:
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not 0.0 <= backoff_jitter <= 1.0:
            # jitter above 1 could reorder delays across attempts
            raise ValueError("backoff_jitter must be in [0, 1]")
        self.provider = provider
        self.max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._backoff_jitter = backoff_jitter
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()
        self._bucket = (
            _TokenBucket(requests_per_second, sleep=sleep) if requests_per_second else None
        )
        self._slots = threading.BoundedSemaphore(max_in_flight) if max_in_flight else None

    def _backoff_delay(self, attempt: int) -> float:
        base = self._backoff_base * (2 ** (attempt - 1))
        return base * (1.0 + self._backoff_jitter * self._rng.random())

    def complete(self, spec: ModelSpec, bundle: PromptBundle, *, request_key: str | None = None) -> CompletionResult:
        """Send one prompt and return the provider text verbatim.

        Raises AuthError, RateLimitExhausted, ProviderError, or Timeout.
        """
        started = time.perf_counter()
        last_signal: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            if self._bucket is not None:
                self._bucket.acquire()
            if self._slots is not None:
                self._slots.acquire()
            try:
                reply = self.provider.send(spec, bundle, request_key)
            except _StatusSignal as signal:
                if signal.status in (401, 403):
                    raise AuthError(f"provider rejected credentials (status {signal.status})") from None
                if signal.status != 429 and signal.status < 500:
                    raise ProviderError(signal.status, signal.body[:200]) from None
                last_signal = signal
            except _TimeoutSignal as signal:
                last_signal = signal
            else:
                latency = (time.perf_counter() - started) * 1000.0
                return CompletionResult(
                    text=reply.text,
                    model_name=spec.model_name,
                    latency_ms=latency,
                    attempt_count=attempt,
                    token_usage=reply.token_usage,
                )
            finally:
                if self._slots is not None:
                    self._slots.release()
            if attempt < self.max_attempts:
                self._sleep(self._backoff_delay(attempt))
        if isinstance(last_signal, _TimeoutSignal):
            raise Timeout(f"request timed out after {self.max_attempts} attempts")
        assert isinstance(last_signal, _StatusSignal)
        if last_signal.status == 429:
            raise RateLimitExhausted(f"rate limited on all {self.max_attempts} attempts")
        raise ProviderError(last_signal.status, last_signal.body[:200])


# --- HTTP dialects ----------------------------------------------------------


def openai_payload(spec: ModelSpec, bundle: PromptBundle) -> dict:
    messages = []
    if bundle.system_text:
        messages.append({"role": "system", "content": bundle.system_text})
    messages.append({"role": "user", "content": bundle.user_text})
    return {
        "model": spec.model_name,
        "messages": messages,
        "temperature": spec.temperature,
        "max_tokens": spec.max_output_tokens,
    }


def anthropic_payload(spec: ModelSpec, bundle: PromptBundle) -> dict:
    payload = {
        "model": spec.model_name,
        "max_tokens": spec.max_output_tokens,
        "temperature": spec.temperature,
        "messages": [{"role": "user", "content": bundle.user_text}],
    }
    if bundle.system_text:
        payload["system"] = bundle.system_text
    return payload


class OpenAiCompatibleProvider:
    """Chat-completions dialect: POST {base}/chat/completions."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        http: httpx.Client | None = None,
    ) -> None:
        self.base_url = (base_url or os.environ.get("OPENAI_BASE_URL") or "https://api.openai.com/v1").rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get("OPENAI_API_KEY")
        self._http = http or httpx.Client()

    def send(self, spec: ModelSpec, bundle: PromptBundle, request_key: str | None = None) -> ProviderReply:
        if not self._api_key:
            raise AuthError("OPENAI_API_KEY is not set")
        try:
            response = self._http.post(
                f"{self.base_url}/chat/completions",
                json=openai_payload(spec, bundle),
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=spec.request_timeout,
            )
        except httpx.TimeoutException:
            raise _TimeoutSignal() from None
        if response.status_code != 200:
            raise _StatusSignal(response.status_code, response.text)
        data = response.json()
        usage = data.get("usage") or {}
        token_usage = None
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            token_usage = (usage["prompt_tokens"], usage["completion_tokens"])
        return ProviderReply(text=data["choices"][0]["message"]["content"], token_usage=token_usage)


class AnthropicCompatibleProvider:
    """Messages dialect: POST {base}/v1/messages."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        http: httpx.Client | None = None,
    ) -> None:
        self.base_url = (base_url or os.environ.get("ANTHROPIC_BASE_URL") or "https://api.anthropic.com").rstrip("/")
        self._api_key = api_key if api_key is not None else os.environ.get("ANTHROPIC_API_KEY")
        self._http = http or httpx.Client()

    def send(self, spec: ModelSpec, bundle: PromptBundle, request_key: str | None = None) -> ProviderReply:
        if not self._api_key:
            raise AuthError("ANTHROPIC_API_KEY is not set")
        try:
            response = self._http.post(
                f"{self.base_url}/v1/messages",
                json=anthropic_payload(spec, bundle),
                headers={"x-api-key": self._api_key, "anthropic-version": "2023-06-01"},
                timeout=spec.request_timeout,
            )
        except httpx.TimeoutException:
            raise _TimeoutSignal() from None
        if response.status_code != 200:
            raise _StatusSignal(response.status_code, response.text)
        data = response.json()
        text = "".join(block.get("text", "") for block in data.get("content", []) if block.get("type") == "text")
        usage = data.get("usage") or {}
        token_usage = None
        if "input_tokens" in usage and "output_tokens" in usage:
            token_usage = (usage["input_tokens"], usage["output_tokens"])
        return ProviderReply(text=text, token_usage=token_usage)


def provider_for_spec(spec: ModelSpec):
    if spec.provider == "openai-compatible":
        return OpenAiCompatibleProvider()
    if spec.provider == "anthropic-compatible":
        return AnthropicCompatibleProvider()
    raise ValueError("mock provider needs an explicit fixture; use mock_from_fixture()")


# --- mock provider ----------------------------------------------------------


class MockProvider:
    """Deterministic scripted provider for offline tests and replays.

    ``responses`` maps a request key to a list of steps. A step is either
    ``{"text": ...}`` (success) or ``{"status": ...}`` (HTTP-style failure).
    Steps are consumed one per attempt; the final step repeats forever, so a
    single-entry key always returns the same canned text.
    """

    def __init__(
        self,
        responses: dict[str, list[dict]] | None = None,
        *,
        strict: bool = True,
        default: str | None = None,
        delay: float = 0.0,
    ) -> None:
        self._responses = {key: list(steps) for key, steps in (responses or {}).items()}
        self._cursor: dict[str, int] = {}
        self.strict = strict
        self.default = default
        self.delay = delay
        self.calls: list[str] = []
        self.call_count = 0
        self.in_flight = 0
        self.high_water = 0
        self._lock = threading.Lock()

    def add(self, key: str, *steps: str | dict) -> None:
        normalized = [{"text": s} if isinstance(s, str) else dict(s) for s in steps]
        self._responses.setdefault(key, []).extend(normalized)

    def _resolve(self, spec: ModelSpec, bundle: PromptBundle, request_key: str | None) -> dict:
        for key in (request_key, bundle_key(bundle)):
            if key is not None and key in self._responses:
                steps = self._responses[key]
                index = min(self._cursor.get(key, 0), len(steps) - 1)
                self._cursor[key] = index + 1
                self.calls.append(key)
                return steps[index]
        if self.default is not None or not self.strict:
            self.calls.append(request_key or bundle_key(bundle))
            return {"text": self.default or ""}
        raise FixtureMissingKey(f"no fixture entry for key {request_key or bundle_key(bundle)!r}")

    def send(self, spec: ModelSpec, bundle: PromptBundle, request_key: str | None = None) -> ProviderReply:
        with self._lock:
            self.call_count += 1
            self.in_flight += 1
            self.high_water = max(self.high_water, self.in_flight)
            try:
                step = self._resolve(spec, bundle, request_key)
            except FixtureMissingKey:
                self.in_flight -= 1
                raise
        try:
            if self.delay:
                time.sleep(self.delay)
            if "status" in step:
                raise _StatusSignal(int(step["status"]), str(step.get("body", "")))
            if step.get("timeout"):
                raise _TimeoutSignal()
            return ProviderReply(text=step["text"])
        finally:
            with self._lock:
                self.in_flight -= 1


def mock_from_fixture(path: str | Path) -> MockProvider:
    """Build a MockProvider from a line-delimited fixture or cassette file.

    An optional first record ``{"_fixture": true, "strict": ..., "default": ...}``
    sets lookup behavior; cassettes (which have no header) default to strict.
    Entries are ``{"key": ..., "response": ...}`` or ``{"key": ..., "script": [...]}``.
    Repeated keys extend that key's script in file order.
    """
    path = Path(path)
    strict = True
    default: str | None = None
    responses: dict[str, list[dict]] = {}
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("_fixture"):
                strict = bool(record.get("strict", True))
                default = record.get("default")
                continue
            key = record.get("key")
            if not isinstance(key, str):
                raise ValueError(f"{path}:{line_no}: fixture entry has no string 'key'")
            steps: list[dict]
            if "script" in record:
                steps = [
                    {"text": step} if isinstance(step, str) else dict(step)
                    for step in record["script"]
                ]
            elif "response" in record:
                steps = [{"text": record["response"]}]
            else:
                raise ValueError(f"{path}:{line_no}: fixture entry needs 'response' or 'script'")
            responses.setdefault(key, []).extend(steps)
    return MockProvider(responses, strict=strict, default=default)


class CassetteRecorder:
    """Provider wrapper that appends every successful reply to a cassette file."""

    def __init__(self, inner, path: str | Path) -> None:
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def send(self, spec: ModelSpec, bundle: PromptBundle, request_key: str | None = None) -> ProviderReply:
        reply = self.inner.send(spec, bundle, request_key)
        record = {
            "key": request_key or bundle_key(bundle),
            "response": reply.text,
            "model_name": spec.model_name,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock, self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        return reply


def complete(spec: ModelSpec, bundle: PromptBundle, *, client: LlmClient | None = None) -> CompletionResult:
    """One-shot convenience wrapper around :meth:`LlmClient.complete`."""
    if client is None:
        client = LlmClient(provider_for_spec(spec))
    return client.complete(spec, bundle)
