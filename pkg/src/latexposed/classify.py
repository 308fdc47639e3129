"""Contextual entity extraction over cleaned comments.

Detector backends map comment snippets to a six-category sensitivity
taxonomy.  The remote backend speaks the OpenAI-compatible chat-completions
protocol; the offline baseline maps pattern-engine hits to categories so the
whole pipeline (and every test) runs without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .cleaning import DEFAULT_ESTIMATOR, TokenEstimator
from .patterns import RuleSet, SuppressionList, load_builtin_rules, scan_text

logger = logging.getLogger(__name__)


class CategoryLabel(str, Enum):
    PII = "PII"
    CRED = "CRED"
    NETID = "NETID"
    PEER = "PEER"
    CONF = "CONF"
    OTHER = "OTHER"


#: Operational definition of each category, embedded in detector prompts to
#: anchor the semantics every backend is scored against.
CATEGORY_DEFINITIONS: dict[CategoryLabel, str] = {
    CategoryLabel.PII: (
        "Personally identifiable information such as names, email addresses, "
        "phone numbers, or physical addresses. This also includes hidden "
        "author names or other data that could reveal an individual's identity."
    ),
    CategoryLabel.CRED: (
        "Real authentication material or payment data. Examples include "
        "passwords or passphrases, API keys and tokens, bearer tokens, client "
        "secrets, private keys, database connection strings with embedded "
        "credentials, and payment card information (PAN, expiry, CVV/CVC/CID)."
    ),
    CategoryLabel.NETID: (
        "System or network identifiers used to label accounts or machines, "
        "but not secrets themselves. Examples include usernames, user IDs, IP "
        "addresses, hostnames, workstation IDs, MAC addresses, and port numbers."
    ),
    CategoryLabel.PEER: (
        "Content directly related to the formal peer review workflow, such as "
        "reviewer comments, meta-reviews, rebuttals, responses to reviewers, "
        "or camera-ready change requests. This also covers internal author "
        "discussions and strategy notes about how to respond to reviews, even "
        "if critical of reviewers."
    ),
    CategoryLabel.CONF: (
        "Explicit disagreements or disputes among co-authors, for example, "
        "regarding methodology, content, tone, style, or the direction of the "
        "paper. This category does not include disagreements with reviewers."
    ),
    CategoryLabel.OTHER: (
        "Miscellaneous sensitive content not covered by the above categories, "
        "or cases where no issue is present."
    ),
}

LabelSet = frozenset


def normalize_labels(labels: Iterable[str | CategoryLabel]) -> frozenset[CategoryLabel]:
    """Coerce to a valid label set: non-empty, OTHER never alongside others."""
    out: set[CategoryLabel] = set()
    for label in labels:
        if isinstance(label, CategoryLabel):
            out.add(label)
            continue
        try:
            out.add(CategoryLabel(str(label).strip().upper()))
        except ValueError:
            logger.warning("ignoring unknown category label %r", label)
    if len(out) > 1:
        out.discard(CategoryLabel.OTHER)
    if not out:
        out = {CategoryLabel.OTHER}
    return frozenset(out)


class BackendError(RuntimeError):
    """A detector backend failed on a batch; never silently empty output."""


class ResponseParseError(BackendError):
    """Model output did not yield the demanded structure."""


class DetectorBackend(Protocol):
    """Behavioral contract every detector implementation satisfies."""

    name: str
    price_per_m_input: float

    def classify(self, snippets: Sequence[str]) -> list[frozenset[CategoryLabel]]:
        """One non-empty label set per snippet; failures raise BackendError."""
        ...


# ---------------------------------------------------------------------------
# Prompt construction and response parsing
# ---------------------------------------------------------------------------

SYSTEM_PROMPT = (
    "You are a security auditor reviewing comment snippets extracted from "
    "document source files for leaked sensitive information."
)

_PROMPT_HEADER = """Classify each numbered snippet below into one or more of these categories:

{definitions}

Rules:
- Assign every applicable category per snippet.
- Use OTHER alone, never together with another category.
- Respond with ONLY a JSON array, one object per snippet, in order:
  [{{"snippet": 1, "labels": ["PII"]}}, ...]

Snippets:
{snippets}"""


def build_prompt(snippets: Sequence[str]) -> str:
    """Render the classification request for one batch.

    Embeds the category definitions and the numbered snippets, and demands
    structured per-snippet output.  Empty batches are an error: nothing
    should ever be sent for them.
    """
    if not snippets:
        raise ValueError("cannot build a prompt for zero snippets")
    definitions = "\n".join(
        f"- {label.value}: {text}" for label, text in CATEGORY_DEFINITIONS.items()
    )
    numbered = "\n".join(f"{i}. {s}" for i, s in enumerate(snippets, start=1))
    return _PROMPT_HEADER.format(definitions=definitions, snippets=numbered)


def split_batches(
    snippets: Sequence[str],
    budget_tokens: int,
    estimator: TokenEstimator = DEFAULT_ESTIMATOR,
) -> list[list[str]]:
    """Greedy batching under a prompt token budget.

    The fixed prompt scaffolding counts against the budget; a single
    over-budget snippet still travels alone rather than being dropped.
    """
    overhead = estimator(_PROMPT_HEADER) + sum(
        estimator(f"- {l.value}: {t}") for l, t in CATEGORY_DEFINITIONS.items()
    )
    batches: list[list[str]] = []
    current: list[str] = []
    current_tokens = overhead
    for snippet in snippets:
        cost = estimator(snippet) + 8  # numbering and separators
        if current and current_tokens + cost > budget_tokens:
            batches.append(current)
            current = []
            current_tokens = overhead
        current.append(snippet)
        current_tokens += cost
        if current_tokens > budget_tokens and len(current) == 1:
            logger.warning("single snippet exceeds token budget (%d tokens)", current_tokens)
            batches.append(current)
            current = []
            current_tokens = overhead
    if current:
        batches.append(current)
    return batches


def _extract_structured_block(text: str) -> str | None:
    """Repair pass: pull the first balanced JSON array out of prose."""
    start = text.find("[")
    if start == -1:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def parse_response(text: str, n: int) -> list[frozenset[CategoryLabel]]:
    """Strict structured parse of untrusted model output.

    One repair pass extracts the first structured block from prose wrappers;
    a second failure or an entry-count mismatch raises, because fabricating
    labels is worse than surfacing the failure.
    """
    data = None
    try:
        data = json.loads(text)
    except (ValueError, TypeError):
        block = _extract_structured_block(text)
        if block is not None:
            try:
                data = json.loads(block)
            except ValueError:
                data = None
    if data is None:
        raise ResponseParseError("no parseable JSON array in response")
    if isinstance(data, dict):  # tolerate a top-level wrapper object
        for key in ("results", "labels", "snippets"):
            if isinstance(data.get(key), list):
                data = data[key]
                break
    if not isinstance(data, list):
        raise ResponseParseError("response is not a JSON array")
    if len(data) != n:
        raise ResponseParseError(f"expected {n} entries, got {len(data)}")

    entries: list[tuple[int, frozenset[CategoryLabel]]] = []
    for pos, item in enumerate(data):
        if isinstance(item, dict):
            raw = item.get("labels", item.get("categories", []))
            index = item.get("snippet", pos + 1)
        elif isinstance(item, list):
            raw, index = item, pos + 1
        else:
            raise ResponseParseError(f"unparseable entry at position {pos}: {item!r}")
        if not isinstance(raw, list):
            raw = [raw]
        entries.append((int(index) if isinstance(index, (int, float)) else pos + 1,
                        normalize_labels(raw)))

    by_index = {i: labels for i, labels in entries}
    if set(by_index) == set(range(1, n + 1)):
        return [by_index[i] for i in range(1, n + 1)]
    return [labels for _, labels in entries]


# ---------------------------------------------------------------------------
# Cost estimation
# ---------------------------------------------------------------------------


def estimate_cost(
    total_input_tokens: int,
    price_per_m: float,
    output_tokens: int = 0,
    price_per_m_output: float = 0.0,
) -> float:
    """Dollar cost of a token volume at a per-million price."""
    if total_input_tokens < 0 or output_tokens < 0:
        raise ValueError("token counts must be non-negative")
    return (
        total_input_tokens / 1e6 * price_per_m
        + output_tokens / 1e6 * price_per_m_output
    )


# ---------------------------------------------------------------------------
# Offline baseline backend
# ---------------------------------------------------------------------------

_PEER_LEXICON = re.compile(
    r"(?i)\b(?:reviewer(?:s)?(?:\s*#?\s*\d+)?|meta-?review(?:er)?|rebuttal|"
    r"camera-?ready|area chair|reviews? (?:asked|said|suggested|requested|"
    r"complained)|response to (?:the )?review)"
)


def baseline_classify(
    snippet: str,
    rules: RuleSet | None = None,
    suppression: SuppressionList | None = None,
) -> frozenset[CategoryLabel]:
    """Rule-backed category mapping with no model in the loop.

    Pattern-engine hits carry label hints (emails and phones are PII,
    credential rules CRED, network identifiers NETID); a review-workflow
    lexicon covers PEER.  Suppressed hits do not vote.  No hit means OTHER.
    """
    ruleset = rules if rules is not None else _default_ruleset()
    supp = suppression if suppression is not None else _default_suppression()
    labels: set[CategoryLabel] = set()
    for match in scan_text(snippet, ruleset, suppression=supp):
        if match.suppressed or match.label_hint is None:
            continue
        labels.add(CategoryLabel(match.label_hint))
    if _PEER_LEXICON.search(snippet):
        labels.add(CategoryLabel.PEER)
    if not labels:
        return frozenset({CategoryLabel.OTHER})
    return frozenset(labels)


_DEFAULT_RULESET: RuleSet | None = None
_DEFAULT_SUPPRESSION: SuppressionList | None = None


def _default_ruleset() -> RuleSet:
    global _DEFAULT_RULESET
    if _DEFAULT_RULESET is None:
        _DEFAULT_RULESET = RuleSet.compile(load_builtin_rules())
    return _DEFAULT_RULESET


def _default_suppression() -> SuppressionList:
    global _DEFAULT_SUPPRESSION
    if _DEFAULT_SUPPRESSION is None:
        _DEFAULT_SUPPRESSION = SuppressionList.default()
    return _DEFAULT_SUPPRESSION


class BaselineBackend:
    """Deterministic offline detector; the default for tests and dry runs."""

    name = "baseline-rules"
    price_per_m_input = 0.0

    def __init__(
        self,
        rules: RuleSet | None = None,
        suppression: SuppressionList | None = None,
    ):
        self._rules = rules if rules is not None else _default_ruleset()
        self._suppression = suppression if suppression is not None else _default_suppression()

    def classify(self, snippets: Sequence[str]) -> list[frozenset[CategoryLabel]]:
        return [baseline_classify(s, self._rules, self._suppression) for s in snippets]


class RecordedBackend:
    """Replays stored predictions (JSONL of {id|index, labels}) for scoring."""

    price_per_m_input = 0.0

    def __init__(self, predictions: Sequence[Iterable[str]], name: str = "recorded"):
        self.name = name
        self._predictions = [normalize_labels(p) for p in predictions]

    @classmethod
    def from_jsonl(cls, path: Path | str, name: str | None = None) -> "RecordedBackend":
        preds = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    preds.append(json.loads(line)["labels"])
        return cls(preds, name=name or Path(path).stem)

    def classify(self, snippets: Sequence[str]) -> list[frozenset[CategoryLabel]]:
        if len(snippets) != len(self._predictions):
            raise BackendError(
                f"{self.name}: {len(self._predictions)} recorded predictions "
                f"for {len(snippets)} snippets"
            )
        return list(self._predictions)


# ---------------------------------------------------------------------------
# Remote chat-completions backend
# ---------------------------------------------------------------------------

API_KEY_ENV = "LATEXPOSED_API_KEY"
API_KEY_ENV_FALLBACK = "OPENROUTER_API_KEY"
ENDPOINT_ENV = "LATEXPOSED_ENDPOINT"


@dataclass
class RemoteModelConfig:
    endpoint: str = "https://openrouter.ai/api/v1"
    model: str = "qwen/qwen-2.5-72b-instruct"
    max_parallel: int = 4
    max_attempts: int = 3
    backoff_base: float = 1.0
    price_per_m_input: float = 0.07
    price_per_m_output: float = 0.0
    temperature: float = 0.0
    context_budget_tokens: int = 8000
    timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def resolve_api_key() -> str | None:
    """Credential comes from the environment only; it is never persisted."""
    return os.environ.get(API_KEY_ENV) or os.environ.get(API_KEY_ENV_FALLBACK)


class ResponseCache:
    """Disk-backed (model, prompt hash) -> response text, append-only JSONL."""

    def __init__(self, path: Path | str | None = None):
        self._path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self._path is not None and self._path.exists():
            with open(self._path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        item = json.loads(line)
                        self._entries[item["key"]] = item["response"]
                    except (ValueError, KeyError):
                        logger.warning("%s: skipping corrupt cache line", self._path)

    @staticmethod
    def key_for(model: str, prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        return f"{model}:{digest}"

    def get(self, model: str, prompt: str) -> str | None:
        with self._lock:
            return self._entries.get(self.key_for(model, prompt))

    def put(self, model: str, prompt: str, response: str) -> None:
        key = self.key_for(model, prompt)
        line = json.dumps({"key": key, "response": response}) + "\n"
        with self._lock:
            self._entries[key] = response
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(line)


Transport = Callable[[str, dict, dict, float], tuple[int, dict]]


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, dict]:
    import requests

    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body = resp.json()
    except ValueError:
        body = {"error": resp.text[:500]}
    return resp.status_code, body


class RemoteBackend:
    """OpenAI-compatible chat-completions client with retry and caching.

    Requests run in a bounded pool (never more than ``max_parallel`` in
    flight); failures retry up to ``max_attempts`` with strictly increasing
    exponential delays.  Responses are cached by (model, prompt hash) so
    reruns are reproducible and free.
    """

    def __init__(
        self,
        config: RemoteModelConfig | None = None,
        transport: Transport | None = None,
        cache: ResponseCache | None = None,
        api_key: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config or RemoteModelConfig()
        endpoint_override = os.environ.get(ENDPOINT_ENV)
        if endpoint_override:
            self.config.endpoint = endpoint_override
        self.name = self.config.model
        self.price_per_m_input = self.config.price_per_m_input
        self._transport = transport or _requests_transport
        self._cache = cache or ResponseCache()
        self._sleep = sleep
        self._api_key = api_key if api_key is not None else resolve_api_key()
        if self._api_key is None:
            raise BackendError(
                f"no detector credential: set {API_KEY_ENV} (or {API_KEY_ENV_FALLBACK})"
            )

    def _request(self, prompt: str) -> str:
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        headers = {
            "Authorization": f"Bearer {self._api_key}",
            "Content-Type": "application/json",
        }
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
        }
        last_error: str = "no attempts made"
        for attempt in range(self.config.max_attempts):
            if attempt:
                self._sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                status, body = self._transport(url, headers, payload, self.config.timeout)
            except Exception as exc:
                last_error = f"transport error: {exc}"
                logger.warning("request attempt %d failed: %s", attempt + 1, last_error)
                continue
            if status == 200:
                try:
                    return body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError):
                    last_error = f"malformed response body: {body!r}"
                    continue
            if status in (429,) or 500 <= status < 600:
                last_error = f"HTTP {status}"
                logger.warning("request attempt %d failed: %s", attempt + 1, last_error)
                continue
            raise BackendError(f"HTTP {status}: {body}")
        raise BackendError(
            f"request failed after {self.config.max_attempts} attempts ({last_error})"
        )

    def _classify_batch(self, batch: list[str]) -> list[frozenset[CategoryLabel]]:
        prompt = build_prompt(batch)
        cached = self._cache.get(self.config.model, prompt)
        if cached is not None:
            return parse_response(cached, len(batch))
        text = self._request(prompt)
        try:
            labels = parse_response(text, len(batch))
        except ResponseParseError:
            # One fresh request; a second unparseable answer is surfaced.
            text = self._request(prompt)
            labels = parse_response(text, len(batch))
        self._cache.put(self.config.model, prompt, text)
        return labels

    def classify(self, snippets: Sequence[str]) -> list[frozenset[CategoryLabel]]:
        if not snippets:
            return []
        batches = split_batches(list(snippets), self.config.context_budget_tokens)
        if self.config.max_parallel == 1 or len(batches) == 1:
            results = [self._classify_batch(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.config.max_parallel) as pool:
                results = list(pool.map(self._classify_batch, batches))
        out: list[frozenset[CategoryLabel]] = []
        for r in results:
            out.extend(r)
        return out
