import json
import threading

import pytest

from modeval.llm_client import (
    Completion,
    HttpProvider,
    MockProvider,
    ProviderConfig,
    ProviderError,
    ResponseCache,
    complete,
    complete_batch,
)
from modeval.promptgen import Prompt, PromptTag

CFG = ProviderConfig(model_name="test-model", retry_limit=3, retry_backoff=0.001)


def prompt_of(text: str) -> Prompt:
    return Prompt(system="sys", user=text, tag=PromptTag.DIRECT)


class TestProviderConfig:
    @pytest.mark.parametrize("kwargs", [
        {"temperature": -0.1},
        {"max_inflight": 0},
        {"retry_limit": 11},
        {"retry_limit": -1},
        {"timeout": 0},
        {"max_output_tokens": 0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ProviderConfig(**kwargs)


class TestComplete:
    def test_mock_fixture_table_and_cache_flag(self, tmp_path):
        provider = MockProvider(script=["fixture answer"])
        cache = ResponseCache(tmp_path / "cache")
        first = complete(prompt_of("q"), CFG, provider=provider, cache=cache)
        assert first.text == "fixture answer"
        assert first.cached is False
        second = complete(prompt_of("q"), CFG, provider=provider, cache=cache)
        assert second.cached is True
        assert second.text == first.text
        assert len(provider.calls) == 1  # second answer came from the cache

    def test_success_after_two_transient_failures(self):
        provider = MockProvider(script=[
            ProviderError("transient", "HTTP 500"),
            ProviderError("transient", "HTTP 500"),
            "recovered",
        ])
        result = complete(prompt_of("q"), CFG, provider=provider)
        assert result.text == "recovered"
        assert len(provider.calls) == 3

    def test_transient_exhausts_retries(self):
        provider = MockProvider(script=[ProviderError("transient", "x")] * 10)
        cfg = ProviderConfig(retry_limit=2, retry_backoff=0.001)
        with pytest.raises(ProviderError) as exc:
            complete(prompt_of("q"), cfg, provider=provider)
        assert exc.value.kind == "transient"
        assert len(provider.calls) == 3  # initial + 2 retries

    def test_auth_error_not_retried(self):
        provider = MockProvider(script=[ProviderError("auth", "denied"), "never"])
        with pytest.raises(ProviderError) as exc:
            complete(prompt_of("q"), CFG, provider=provider)
        assert exc.value.kind == "auth"
        assert len(provider.calls) == 1

    def test_missing_api_key_is_auth_error(self, monkeypatch):
        monkeypatch.delenv("TEST_KEY_VAR", raising=False)
        cfg = ProviderConfig(endpoint="https://example.invalid/v1", api_key_env="TEST_KEY_VAR")
        with pytest.raises(ProviderError) as exc:
            complete(prompt_of("q"), cfg, provider=HttpProvider())
        assert exc.value.kind == "auth"

    def test_retries_do_not_duplicate_cache_entries(self, tmp_path):
        provider = MockProvider(script=[ProviderError("transient", "x"), "ok"])
        cache = ResponseCache(tmp_path / "cache")
        complete(prompt_of("q"), CFG, provider=provider, cache=cache)
        entries = list((tmp_path / "cache").glob("*.json"))
        assert len(entries) == 1

    def test_cache_bypass_resamples(self, tmp_path):
        provider = MockProvider(script=["one", "two"])
        cache = ResponseCache(tmp_path / "cache")
        complete(prompt_of("q"), CFG, provider=provider, cache=cache)
        fresh = complete(prompt_of("q"), CFG, provider=provider, cache=cache, bypass_cache=True)
        assert fresh.text == "two"
        assert fresh.cached is False

    def test_cache_key_distinguishes_model_and_temperature(self, tmp_path):
        p = prompt_of("q")
        keys = {
            ResponseCache.key(p, ProviderConfig(model_name="a", temperature=0.0)),
            ResponseCache.key(p, ProviderConfig(model_name="a", temperature=0.7)),
            ResponseCache.key(p, ProviderConfig(model_name="b", temperature=0.0)),
        }
        assert len(keys) == 3

    def test_cache_file_schema(self, tmp_path):
        provider = MockProvider(script=["answer"])
        cache = ResponseCache(tmp_path / "cache")
        complete(prompt_of("q"), CFG, provider=provider, cache=cache)
        entry = json.loads(next((tmp_path / "cache").glob("*.json")).read_text())
        assert entry["response"] == "answer"
        assert entry["key"]["model_name"] == "test-model"
        assert "timestamp" in entry


class TestCompleteBatch:
    def test_empty(self):
        assert complete_batch([], CFG, provider=MockProvider()) == []

    def test_order_preserved(self):
        provider = MockProvider(script=[lambda p: f"answer to {p.user}" ] * 5)
        prompts = [prompt_of(f"q{i}") for i in range(5)]
        results = complete_batch(prompts, CFG, provider=provider)
        assert [r.text for r in results] == [f"answer to q{i}" for i in range(5)]

    def test_middle_failure_isolated(self):
        provider = MockProvider(script=["ok0", ProviderError("auth", "no"), "ok2"])
        results = complete_batch([prompt_of(f"q{i}") for i in range(3)],
                                 ProviderConfig(retry_limit=0), provider=provider)
        assert results[0].text == "ok0"
        assert isinstance(results[1], ProviderError)
        assert results[2].text == "ok2"

    def test_bounded_concurrency(self):
        provider = MockProvider(latency=0.02)
        cfg = ProviderConfig(max_inflight=2)
        results = complete_batch([prompt_of(f"q{i}") for i in range(6)], cfg, provider=provider)
        assert len(results) == 6
        assert provider.peak_inflight <= 2

    def test_concurrent_cache_writes_single_entry(self, tmp_path):
        provider = MockProvider(latency=0.01)
        cache = ResponseCache(tmp_path / "cache")
        prompts = [prompt_of("same question")] * 4
        results = complete_batch(prompts, ProviderConfig(max_inflight=4),
                                 provider=provider, cache=cache)
        texts = {r.text for r in results}
        assert len(texts) == 1
        assert len(list((tmp_path / "cache").glob("*.json"))) == 1


class FakeResponse:
    def __init__(self, status_code, body=None):
        self.status_code = status_code
        self._body = body or {}
        self.text = json.dumps(self._body)

    def json(self):
        return self._body


class TestHttpProvider:
    def test_happy_path_and_truncation_flag(self, monkeypatch):
        monkeypatch.setenv("TEST_KEY_VAR", "secret")
        captured = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured["url"] = url
            captured["payload"] = json
            captured["auth"] = headers["Authorization"]
            return FakeResponse(200, {
                "choices": [{"message": {"content": "hello"}, "finish_reason": "length"}],
                "usage": {"total_tokens": 7},
            })

        monkeypatch.setattr("modeval.llm_client.requests.post", fake_post)
        cfg = ProviderConfig(endpoint="https://api.example/v1/chat", api_key_env="TEST_KEY_VAR",
                             model_name="m1", temperature=0.3)
        text, meta = HttpProvider().send(prompt_of("question"), cfg)
        assert text == "hello"
        assert meta["truncated"] is True
        assert captured["auth"] == "Bearer secret"
        assert captured["payload"]["model"] == "m1"
        assert captured["payload"]["messages"][1]["content"] == "question"

    @pytest.mark.parametrize("status,kind", [
        (500, "transient"), (429, "transient"), (401, "auth"), (403, "auth"), (400, "protocol"),
    ])
    def test_status_mapping(self, monkeypatch, status, kind):
        monkeypatch.setenv("TEST_KEY_VAR", "secret")
        monkeypatch.setattr("modeval.llm_client.requests.post",
                            lambda *a, **k: FakeResponse(status))
        cfg = ProviderConfig(endpoint="https://api.example/v1", api_key_env="TEST_KEY_VAR")
        with pytest.raises(ProviderError) as exc:
            HttpProvider().send(prompt_of("q"), cfg)
        assert exc.value.kind == kind


class TestMockSynthesis:
    def test_mot_synthesis_round_trips_the_solution(self):
        from conftest import make_problem
        from modeval.promptgen import build_mot_prompt, parse_mot_response

        prompt = build_mot_prompt(make_problem(), "x = input()\nprint(x)")
        text, _ = MockProvider().send(prompt, CFG)
        sol = parse_mot_response(text)
        assert sol.final_code == "x = input()\nprint(x)"
        assert sol.outline

    def test_rules_from_fixture_dir(self, tmp_path):
        rules = tmp_path / "rules.jsonl"
        rules.write_text(json.dumps({"contains": "magic", "response": "matched!"}) + "\n")
        provider = MockProvider(fixture_dir=tmp_path)
        text, _ = provider.send(prompt_of("some magic words"), CFG)
        assert text == "matched!"

    def test_rules_all_substrings_must_match(self, tmp_path):
        rules = tmp_path / "rules.jsonl"
        rules.write_text(json.dumps({"contains": ["alpha", "beta"], "response": "both"}) + "\n")
        (tmp_path / "default.txt").write_text("fallback")
        provider = MockProvider(fixture_dir=tmp_path, synthesize=False)
        assert provider.send(prompt_of("alpha beta"), CFG)[0] == "both"
        assert provider.send(prompt_of("alpha only"), CFG)[0] == "fallback"
