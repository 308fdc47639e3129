"""Detector backends: prompts, parsing, baseline mapping, remote client."""

from __future__ import annotations

import json
import threading
import time

import pytest

from latexposed.classify import (
    BackendError,
    BaselineBackend,
    CategoryLabel,
    RecordedBackend,
    RemoteBackend,
    RemoteModelConfig,
    ResponseCache,
    ResponseParseError,
    baseline_classify,
    build_prompt,
    estimate_cost,
    normalize_labels,
    parse_response,
    split_batches,
)
from latexposed.cleaning import estimate_tokens

L = CategoryLabel


def labels(*names: str) -> frozenset:
    return frozenset(CategoryLabel(n) for n in names)


class TestLabels:
    def test_other_exclusivity(self):
        assert normalize_labels(["OTHER", "PII"]) == labels("PII")

    def test_empty_floors_to_other(self):
        assert normalize_labels([]) == labels("OTHER")

    def test_unknown_ignored(self):
        assert normalize_labels(["PII", "BOGUS"]) == labels("PII")

    def test_case_insensitive(self):
        assert normalize_labels(["pii", "Cred"]) == labels("PII", "CRED")


class TestPrompt:
    def test_single_snippet_numbered_once(self):
        prompt = build_prompt(["only snippet"])
        assert "1. only snippet" in prompt
        assert "2." not in prompt.split("Snippets:")[1]

    def test_zero_snippets_error(self):
        with pytest.raises(ValueError):
            build_prompt([])

    def test_definitions_embedded(self):
        prompt = build_prompt(["x"])
        for label in CategoryLabel:
            assert f"- {label.value}:" in prompt

    def test_three_hundred_snippets_split(self):
        # Arithmetic from the token estimator: 300 snippets of ~50 tokens
        # cannot fit one 8,000-token prompt.
        snippets = [f"snippet {i} " + "word " * 40 for i in range(300)]
        per_snippet = estimate_tokens(snippets[0]) + 8
        batches = split_batches(snippets, budget_tokens=8000)
        assert len(batches) >= 2
        assert sum(len(b) for b in batches) == 300
        expected_min = (300 * per_snippet) // 8000
        assert len(batches) >= expected_min

    def test_oversized_snippet_travels_alone(self):
        snippets = ["small one", "x" * 50_000, "small two"]
        batches = split_batches(snippets, budget_tokens=1000)
        assert ["x" * 50_000] in batches


class TestParseResponse:
    def test_well_formed(self):
        text = json.dumps(
            [
                {"snippet": 1, "labels": ["PII"]},
                {"snippet": 2, "labels": ["CRED", "NETID"]},
                {"snippet": 3, "labels": ["OTHER"]},
            ]
        )
        assert parse_response(text, 3) == [
            labels("PII"),
            labels("CRED", "NETID"),
            labels("OTHER"),
        ]

    def test_prose_wrapper_recovered(self):
        text = (
            "Sure! Here is the analysis you asked for:\n"
            '[{"snippet": 1, "labels": ["PEER"]}]\n'
            "Let me know if you need anything else."
        )
        assert parse_response(text, 1) == [labels("PEER")]

    def test_count_mismatch_fails(self):
        text = json.dumps([{"snippet": 1, "labels": ["PII"]}, {"snippet": 2, "labels": []}])
        with pytest.raises(ResponseParseError):
            parse_response(text, 3)

    def test_garbage_fails(self):
        with pytest.raises(ResponseParseError):
            parse_response("no structure here at all", 2)

    def test_out_of_order_snippet_ids(self):
        text = json.dumps(
            [{"snippet": 2, "labels": ["CRED"]}, {"snippet": 1, "labels": ["PII"]}]
        )
        assert parse_response(text, 2) == [labels("PII"), labels("CRED")]

    def test_other_exclusivity_enforced_at_parse(self):
        text = json.dumps([{"snippet": 1, "labels": ["OTHER", "PII"]}])
        assert parse_response(text, 1) == [labels("PII")]

    def test_bare_list_entries(self):
        assert parse_response('[["PII"], ["OTHER"]]', 2) == [labels("PII"), labels("OTHER")]


class TestBaseline:
    def test_credential_and_netid_log_line(self):
        result = baseline_classify(
            "Windows EventID 4672, ACCOUNT: sec_admin, PASSWORD: Pass!4682, "
            "MACHINE_ID: WEB_DEV-001"
        )
        assert result == labels("CRED", "NETID")

    def test_todo_is_other(self):
        assert baseline_classify("TODO fix figure spacing") == labels("OTHER")

    def test_reviewer_vocabulary_is_peer(self):
        assert baseline_classify("Reviewer 2 asked us to rerun") == labels("PEER")

    def test_email_is_pii(self):
        assert CategoryLabel.PII in baseline_classify("send it to k.adams@uni-lab.edu")

    def test_suppressed_hits_do_not_vote(self):
        assert baseline_classify("contact: someone@example.com") == labels("OTHER")

    def test_backend_wrapper(self):
        backend = BaselineBackend()
        out = backend.classify(["TODO x", "password: abc123"])
        assert out[0] == labels("OTHER")
        assert CategoryLabel.CRED in out[1]

    def test_output_sets_never_empty(self):
        backend = BaselineBackend()
        for result in backend.classify(["", "x", "the quick brown fox"]):
            assert result


class TestCost:
    def test_qwen_corpus_price(self):
        assert round(estimate_cost(224_000_000, 0.07), 2) == 15.68

    def test_zero_tokens(self):
        assert estimate_cost(0, 1.25) == 0.0

    def test_flagship_corpus_price(self):
        assert round(estimate_cost(275_000_000, 1.25), 2) == 343.75

    def test_output_tokens_added(self):
        assert estimate_cost(1_000_000, 1.0, output_tokens=2_000_000,
                             price_per_m_output=0.5) == pytest.approx(2.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            estimate_cost(-1, 1.0)


class TestRecordedBackend:
    def test_replay(self):
        backend = RecordedBackend([["PII"], ["OTHER"]], name="replay")
        assert backend.classify(["a", "b"]) == [labels("PII"), labels("OTHER")]

    def test_length_mismatch(self):
        backend = RecordedBackend([["PII"]])
        with pytest.raises(BackendError):
            backend.classify(["a", "b"])


def _ok_response(n: int) -> dict:
    content = json.dumps([{"snippet": i + 1, "labels": ["OTHER"]} for i in range(n)])
    return {"choices": [{"message": {"content": content}}]}


class FakeTransport:
    """Scriptable transport: list of (status, body) or exceptions."""

    def __init__(self, script):
        self.script = list(script)
        self.calls: list[dict] = []
        self.active = 0
        self.max_active = 0
        self._lock = threading.Lock()

    def __call__(self, url, headers, payload, timeout):
        with self._lock:
            self.active += 1
            self.max_active = max(self.max_active, self.active)
            self.calls.append({"url": url, "payload": payload, "headers": headers})
            step = self.script.pop(0) if self.script else None
        try:
            time.sleep(0.01)
            if isinstance(step, Exception):
                raise step
            if step is None:
                n = payload["messages"][1]["content"].count("\n1. ") + 1
                return 200, _ok_response(self._snippet_count(payload))
            return step
        finally:
            with self._lock:
                self.active -= 1

    @staticmethod
    def _snippet_count(payload) -> int:
        import re

        body = payload["messages"][1]["content"]
        numbers = re.findall(r"^(\d+)\. ", body, re.MULTILINE)
        return int(numbers[-1]) if numbers else 1


class TestRemoteBackend:
    def backend(self, transport, **config_kwargs):
        sleeps: list[float] = []
        config = RemoteModelConfig(max_attempts=3, backoff_base=0.5, **config_kwargs)
        backend = RemoteBackend(
            config, transport=transport, api_key="test-key", sleep=sleeps.append
        )
        return backend, sleeps

    def test_requires_credential(self, monkeypatch):
        monkeypatch.delenv("LATEXPOSED_API_KEY", raising=False)
        monkeypatch.delenv("OPENROUTER_API_KEY", raising=False)
        with pytest.raises(BackendError, match="credential"):
            RemoteBackend(RemoteModelConfig(), transport=FakeTransport([]))

    def test_happy_path(self):
        transport = FakeTransport([])
        backend, _ = self.backend(transport)
        out = backend.classify(["one", "two"])
        assert out == [labels("OTHER"), labels("OTHER")]
        assert transport.calls[0]["payload"]["temperature"] == 0.0
        assert transport.calls[0]["headers"]["Authorization"] == "Bearer test-key"

    def test_retries_with_strictly_increasing_delays(self):
        transport = FakeTransport([(500, {}), (429, {}), None])
        backend, sleeps = self.backend(transport)
        backend.classify(["snippet"])
        assert len(transport.calls) == 3
        assert sleeps == sorted(sleeps)
        assert len(set(sleeps)) == len(sleeps)  # strictly increasing
        assert len(sleeps) == 2

    def test_gives_up_after_max_attempts(self):
        transport = FakeTransport([(500, {}), (500, {}), (500, {})])
        backend, _ = self.backend(transport)
        with pytest.raises(BackendError, match="3 attempts"):
            backend.classify(["snippet"])

    def test_non_retryable_status_fails_fast(self):
        transport = FakeTransport([(401, {"error": "bad key"})])
        backend, _ = self.backend(transport)
        with pytest.raises(BackendError, match="401"):
            backend.classify(["snippet"])
        assert len(transport.calls) == 1

    def test_unparseable_response_gets_one_fresh_request(self):
        bad = {"choices": [{"message": {"content": "no json here"}}]}
        transport = FakeTransport([(200, bad), None])
        backend, _ = self.backend(transport)
        assert backend.classify(["snippet"]) == [labels("OTHER")]
        assert len(transport.calls) == 2

    def test_twice_unparseable_surfaces(self):
        bad = {"choices": [{"message": {"content": "still no json"}}]}
        transport = FakeTransport([(200, bad), (200, bad)])
        backend, _ = self.backend(transport)
        with pytest.raises(ResponseParseError):
            backend.classify(["snippet"])

    def test_concurrency_bounded(self):
        transport = FakeTransport([])
        backend, _ = self.backend(transport, max_parallel=2, context_budget_tokens=300)
        snippets = [f"snippet number {i} " + "pad " * 30 for i in range(12)]
        out = backend.classify(snippets)
        assert len(out) == 12
        assert len(transport.calls) > 1
        assert transport.max_active <= 2

    def test_cache_prevents_second_request(self, tmp_path):
        cache_path = tmp_path / "cache.jsonl"
        transport = FakeTransport([])
        config = RemoteModelConfig()
        backend = RemoteBackend(
            config, transport=transport, api_key="k", cache=ResponseCache(cache_path)
        )
        backend.classify(["snippet"])
        assert len(transport.calls) == 1

        # Fresh backend, same cache file: no network at all.
        second_transport = FakeTransport([])
        backend2 = RemoteBackend(
            config, transport=second_transport, api_key="k",
            cache=ResponseCache(cache_path),
        )
        assert backend2.classify(["snippet"]) == [labels("OTHER")]
        assert second_transport.calls == []

    def test_endpoint_override_env(self, monkeypatch):
        monkeypatch.setenv("LATEXPOSED_ENDPOINT", "https://proxy.internal/v1")
        transport = FakeTransport([])
        backend = RemoteBackend(RemoteModelConfig(), transport=transport, api_key="k")
        backend.classify(["x"])
        assert transport.calls[0]["url"].startswith("https://proxy.internal/v1")
