from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest

from reflectmt.errors import (
    AuthError,
    FixtureMissingKey,
    ProviderError,
    RateLimitExhausted,
    Timeout,
)
from reflectmt.llm_client import (
    AnthropicCompatibleProvider,
    CassetteRecorder,
    LlmClient,
    MockProvider,
    ModelSpec,
    OpenAiCompatibleProvider,
    anthropic_payload,
    bundle_key,
    mock_from_fixture,
    openai_payload,
)
from reflectmt.prompts import PromptBundle, Strategy


def _spec(provider="mock", **kwargs) -> ModelSpec:
    return ModelSpec(provider=provider, model_name="test-model", **kwargs)


def _bundle(text="translate this", pass_number=1) -> PromptBundle:
    return PromptBundle(
        system_text="",
        user_text=f"{text}\n<START_TRANSLATION>\n<END_TRANSLATION>",
        pass_number=pass_number,
        strategy=Strategy.BASELINE,
    )


def test_model_spec_validation():
    with pytest.raises(ValueError):
        _spec(temperature=1.5)
    with pytest.raises(ValueError):
        _spec(max_output_tokens=0)
    with pytest.raises(ValueError):
        ModelSpec(provider="carrier-pigeon", model_name="x")


def test_mock_passthrough_is_deterministic():
    provider = MockProvider({"k": [{"text": "X"}]})
    client = LlmClient(provider, sleep=lambda _: None)
    for _ in range(3):
        result = client.complete(_spec(), _bundle(), request_key="k")
        assert result.text == "X"
        assert result.attempt_count == 1
        assert result.model_name == "test-model"
    assert provider.call_count == 3


def test_mock_content_hash_lookup_without_request_key():
    bundle = _bundle("hash me")
    provider = MockProvider({bundle_key(bundle): [{"text": "via-hash"}]})
    client = LlmClient(provider, sleep=lambda _: None)
    assert client.complete(_spec(), bundle).text == "via-hash"


def test_retry_after_two_rate_limits():
    provider = MockProvider({"k": [{"status": 429}, {"status": 429}, {"text": "ok"}]})
    client = LlmClient(provider, max_attempts=3, sleep=lambda _: None)
    result = client.complete(_spec(), _bundle(), request_key="k")
    assert result.text == "ok"
    assert result.attempt_count == 3
    assert provider.call_count == 3


def test_rate_limit_exhaustion():
    provider = MockProvider({"k": [{"status": 429}]})
    client = LlmClient(provider, max_attempts=3, sleep=lambda _: None)
    with pytest.raises(RateLimitExhausted):
        client.complete(_spec(), _bundle(), request_key="k")
    assert provider.call_count == 3


def test_auth_error_is_never_retried():
    provider = MockProvider({"k": [{"status": 401}]})
    client = LlmClient(provider, max_attempts=5, sleep=lambda _: None)
    with pytest.raises(AuthError):
        client.complete(_spec(), _bundle(), request_key="k")
    assert provider.call_count == 1


def test_client_error_other_than_429_is_never_retried():
    provider = MockProvider({"k": [{"status": 404, "body": "missing"}]})
    client = LlmClient(provider, max_attempts=5, sleep=lambda _: None)
    with pytest.raises(ProviderError) as exc_info:
        client.complete(_spec(), _bundle(), request_key="k")
    assert exc_info.value.status == 404
    assert provider.call_count == 1


def test_server_errors_retry_then_surface_status():
    provider = MockProvider({"k": [{"status": 500, "body": "boom"}]})
    client = LlmClient(provider, max_attempts=2, sleep=lambda _: None)
    with pytest.raises(ProviderError) as exc_info:
        client.complete(_spec(), _bundle(), request_key="k")
    assert exc_info.value.status == 500
    assert provider.call_count == 2


def test_timeouts_retry_then_raise_timeout():
    provider = MockProvider({"k": [{"timeout": True}]})
    client = LlmClient(provider, max_attempts=3, sleep=lambda _: None)
    with pytest.raises(Timeout):
        client.complete(_spec(), _bundle(), request_key="k")
    assert provider.call_count == 3


def test_backoff_delays_are_nondecreasing():
    provider = MockProvider({"k": [{"status": 429}]})
    delays: list[float] = []
    client = LlmClient(provider, max_attempts=6, backoff_base=0.25, backoff_jitter=1.0,
                       sleep=delays.append)
    with pytest.raises(RateLimitExhausted):
        client.complete(_spec(), _bundle(), request_key="k")
    assert len(delays) == 5
    assert delays == sorted(delays)


def test_at_most_max_attempts_requests():
    provider = MockProvider({"k": [{"status": 503}]})
    client = LlmClient(provider, max_attempts=4, sleep=lambda _: None)
    with pytest.raises(ProviderError):
        client.complete(_spec(), _bundle(), request_key="k")
    assert provider.call_count == 4


def test_in_flight_cap_is_respected():
    provider = MockProvider({"k": [{"text": "ok"}]}, delay=0.01)
    client = LlmClient(provider, max_in_flight=2, sleep=lambda _: None)
    with ThreadPoolExecutor(max_workers=8) as pool:
        futures = [
            pool.submit(client.complete, _spec(), _bundle(), request_key="k")
            for _ in range(16)
        ]
        for future in futures:
            future.result()
    assert provider.call_count == 16
    assert provider.high_water <= 2


def test_strict_fixture_missing_key():
    provider = MockProvider({}, strict=True)
    client = LlmClient(provider, sleep=lambda _: None)
    with pytest.raises(FixtureMissingKey):
        client.complete(_spec(), _bundle(), request_key="unseen")


def test_fixture_file_header_and_scripts(tmp_path):
    fixture = tmp_path / "fixture.jsonl"
    lines = [
        {"_fixture": True, "strict": False, "default": "fallback"},
        {"key": "a", "response": "canned"},
        {"key": "b", "script": [{"status": 429}, {"text": "after-retry"}]},
    ]
    fixture.write_text("".join(json.dumps(l) + "\n" for l in lines), encoding="utf-8")
    provider = mock_from_fixture(fixture)
    client = LlmClient(provider, sleep=lambda _: None)
    assert client.complete(_spec(), _bundle(), request_key="a").text == "canned"
    assert client.complete(_spec(), _bundle(), request_key="a").text == "canned"
    result = client.complete(_spec(), _bundle(), request_key="b")
    assert result.text == "after-retry" and result.attempt_count == 2
    assert client.complete(_spec(), _bundle(), request_key="zzz").text == "fallback"


def test_cassette_records_and_replays(tmp_path):
    cassette = tmp_path / "cassette.jsonl"
    live = MockProvider({"k1": [{"text": "first"}], "k2": [{"text": "second"}]})
    client = LlmClient(CassetteRecorder(live, cassette), sleep=lambda _: None)
    client.complete(_spec(), _bundle("one"), request_key="k1")
    client.complete(_spec(), _bundle("two"), request_key="k2")

    replayed = LlmClient(mock_from_fixture(cassette), sleep=lambda _: None)
    assert replayed.complete(_spec(), _bundle("one"), request_key="k1").text == "first"
    assert replayed.complete(_spec(), _bundle("two"), request_key="k2").text == "second"
    with pytest.raises(FixtureMissingKey):
        replayed.complete(_spec(), _bundle("three"), request_key="k3")


def test_duplicate_cassette_keys_replay_in_order(tmp_path):
    cassette = tmp_path / "cassette.jsonl"
    lines = [
        {"key": "k", "response": "first"},
        {"key": "k", "response": "second"},
    ]
    cassette.write_text("".join(json.dumps(l) + "\n" for l in lines), encoding="utf-8")
    client = LlmClient(mock_from_fixture(cassette), sleep=lambda _: None)
    assert client.complete(_spec(), _bundle(), request_key="k").text == "first"
    assert client.complete(_spec(), _bundle(), request_key="k").text == "second"
    assert client.complete(_spec(), _bundle(), request_key="k").text == "second"


def test_openai_payload_shape():
    bundle = PromptBundle("sys", "user text", 1, Strategy.BASELINE)
    payload = openai_payload(_spec("openai-compatible", temperature=0.3), bundle)
    assert payload["messages"] == [
        {"role": "system", "content": "sys"},
        {"role": "user", "content": "user text"},
    ]
    assert payload["model"] == "test-model"
    assert payload["temperature"] == 0.3
    assert payload["max_tokens"] == 1024


def test_anthropic_payload_maps_system_slot():
    bundle = PromptBundle("sys", "user text", 1, Strategy.BASELINE)
    payload = anthropic_payload(_spec("anthropic-compatible"), bundle)
    assert payload["system"] == "sys"
    assert payload["messages"] == [{"role": "user", "content": "user text"}]
    assert "system" not in anthropic_payload(_spec("anthropic-compatible"),
                                             PromptBundle("", "u", 1, Strategy.BASELINE))


def test_openai_provider_round_trip_via_mock_transport():
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        assert body["model"] == "test-model"
        assert request.headers["authorization"] == "Bearer sk-test"
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "bonjour"}}],
            "usage": {"prompt_tokens": 7, "completion_tokens": 2},
        })

    http = httpx.Client(transport=httpx.MockTransport(handler))
    provider = OpenAiCompatibleProvider(base_url="https://gw.local/v1", api_key="sk-test", http=http)
    client = LlmClient(provider, sleep=lambda _: None)
    result = client.complete(_spec("openai-compatible"), _bundle())
    assert result.text == "bonjour"
    assert result.token_usage == (7, 2)


def test_openai_provider_maps_429_to_rate_limit():
    http = httpx.Client(transport=httpx.MockTransport(lambda req: httpx.Response(429, text="slow down")))
    provider = OpenAiCompatibleProvider(base_url="https://gw.local/v1", api_key="sk-test", http=http)
    client = LlmClient(provider, max_attempts=2, sleep=lambda _: None)
    with pytest.raises(RateLimitExhausted):
        client.complete(_spec("openai-compatible"), _bundle())


def test_anthropic_provider_round_trip_via_mock_transport():
    def handler(request: httpx.Request) -> httpx.Response:
        assert request.headers["x-api-key"] == "ak-test"
        return httpx.Response(200, json={
            "content": [{"type": "text", "text": "sawubona"}],
            "usage": {"input_tokens": 5, "output_tokens": 3},
        })

    http = httpx.Client(transport=httpx.MockTransport(handler))
    provider = AnthropicCompatibleProvider(base_url="https://gw.local", api_key="ak-test", http=http)
    client = LlmClient(provider, sleep=lambda _: None)
    result = client.complete(_spec("anthropic-compatible"), _bundle())
    assert result.text == "sawubona"
    assert result.token_usage == (5, 3)


def test_missing_credentials_raise_auth_error(monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    provider = OpenAiCompatibleProvider(base_url="https://gw.local/v1", api_key=None)
    client = LlmClient(provider, sleep=lambda _: None)
    with pytest.raises(AuthError):
        client.complete(_spec("openai-compatible"), _bundle())


def test_concurrent_mock_scripts_are_thread_safe():
    provider = MockProvider({f"k{i}": [{"text": f"r{i}"}] for i in range(32)})
    client = LlmClient(provider, sleep=lambda _: None)
    results = {}
    lock = threading.Lock()

    def call(i):
        text = client.complete(_spec(), _bundle(), request_key=f"k{i}").text
        with lock:
            results[i] = text

    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(call, range(32)))
    assert results == {i: f"r{i}" for i in range(32)}
