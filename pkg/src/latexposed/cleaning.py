"""Comment cleaning pipeline.

Raw comment text goes through four stages before any downstream analysis:
whitespace normalization, boilerplate rejection, corpus-frequency
deduplication, and token counting for cost planning.  A comment whose
normalized text occurs more than ``dedup_threshold`` times across the corpus
is dropped entirely (all occurrences), since texts that frequent are
formatting artifacts, not prose.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

logger = logging.getLogger(__name__)

DEFAULT_DEDUP_THRESHOLD = 10
DEFAULT_MIN_SEPARATOR_RUN = 4

# Characters that make up decorative separator comments (----, ====, ~~~~).
_SEPARATOR_CHARS = set("-=*%~_.")

_WS_RUN = re.compile(r"\s+")
_LEADING_PERCENT = re.compile(r"^%+")
_CONTROL_WORD = re.compile(r"\\[a-zA-Z@]+\*?")
_CONTROL_SYMBOL = re.compile(r"\\[^a-zA-Z]")
# Innermost groups only; applied repeatedly to handle nesting.
_BRACE_GROUP = re.compile(r"\{[^{}]*\}")
_BRACKET_GROUP = re.compile(r"\[[^\[\]]*\]")
_ALPHA = re.compile(r"[a-zA-Z]")


@dataclass
class CleanConfig:
    """Tunables for the cleaning pipeline."""

    dedup_threshold: int = DEFAULT_DEDUP_THRESHOLD
    boilerplate_min_separator_run: int = DEFAULT_MIN_SEPARATOR_RUN
    drop_single_word: bool = True

    def __post_init__(self) -> None:
        if self.dedup_threshold < 1:
            raise ValueError("dedup_threshold must be >= 1")


@dataclass
class CleanStats:
    """Before/after accounting for one pipeline run."""

    input_count: int
    output_count: int
    retention_ratio: float
    tokens_before: int
    tokens_after: int
    reduction_ratio: float
    estimator: str = "bytes/4"

    def as_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "retention_ratio": self.retention_ratio,
            "tokens_before": self.tokens_before,
            "tokens_after": self.tokens_after,
            "reduction_ratio": self.reduction_ratio,
            "estimator": self.estimator,
        }


def _make_stats(
    input_count: int,
    output_count: int,
    tokens_before: int,
    tokens_after: int,
    estimator_name: str,
) -> CleanStats:
    retention = output_count / input_count if input_count else 0.0
    reduction = 1.0 - tokens_after / tokens_before if tokens_before else 0.0
    return CleanStats(
        input_count=input_count,
        output_count=output_count,
        retention_ratio=retention,
        tokens_before=tokens_before,
        tokens_after=tokens_after,
        reduction_ratio=reduction,
        estimator=estimator_name,
    )


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def normalize(raw: str) -> str:
    """Standardize a raw comment text.

    Strips leading ``%`` marker runs and surrounding whitespace (iterated,
    so ``%  %% x`` reduces fully), and collapses internal whitespace runs to
    single spaces.  The result may be empty.  Idempotent.
    """
    text = raw.strip()
    while True:
        stripped = _LEADING_PERCENT.sub("", text).strip()
        if stripped == text:
            break
        text = stripped
    return _WS_RUN.sub(" ", text)


# ---------------------------------------------------------------------------
# Boilerplate detection
# ---------------------------------------------------------------------------


def _is_pure_markup(text: str) -> bool:
    """True if no alphabetic prose survives removing LaTeX syntax.

    Brace and bracket groups are removed with their content (innermost out,
    so nesting unwinds), then control sequences, leaving only whatever prose
    sat outside any command or group.
    """
    prev = None
    cur = text
    while prev != cur:
        prev = cur
        cur = _BRACE_GROUP.sub("", cur)
        cur = _BRACKET_GROUP.sub("", cur)
    cur = _CONTROL_WORD.sub("", cur)
    cur = _CONTROL_SYMBOL.sub("", cur)
    return not _ALPHA.search(cur)


def is_boilerplate(normalized: str, config: CleanConfig | None = None) -> bool:
    """Decide whether a normalized comment carries no prose content.

    True for empty strings, decorative separator runs, purely syntactic
    LaTeX (commands and their arguments with nothing outside them), and,
    when configured, single words.
    """
    cfg = config or CleanConfig()
    if not normalized:
        return True
    compact = normalized.replace(" ", "")
    if len(compact) >= cfg.boilerplate_min_separator_run and all(
        ch in _SEPARATOR_CHARS for ch in compact
    ):
        return True
    if _is_pure_markup(normalized):
        return True
    if cfg.drop_single_word and " " not in normalized:
        return True
    return False


# ---------------------------------------------------------------------------
# Token estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenEstimator:
    """Named token-count estimator; the name is recorded in CleanStats."""

    name: str
    fn: Callable[[str], int]

    def __call__(self, text: str) -> int:
        return self.fn(text)


def _bytes_heuristic(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


#: Default cost estimator: one token per four UTF-8 bytes, rounded up.
#: Order-of-magnitude fidelity is enough for download/inference planning;
#: an exact encoder can be swapped in via the ``estimator`` arguments.
DEFAULT_ESTIMATOR = TokenEstimator("bytes/4", _bytes_heuristic)


def estimate_tokens(text: str) -> int:
    """Token count of *text* under the default bytes/4 heuristic."""
    return DEFAULT_ESTIMATOR(text)


# ---------------------------------------------------------------------------
# Frequency dedup
# ---------------------------------------------------------------------------


def count_frequencies(texts: Iterable[str]) -> Counter:
    """Pass 1: corpus frequency of each normalized text.

    Counters from parallel workers can be merged with ``+`` before pass 2.
    """
    return Counter(texts)


def dedup_filter(
    texts: Sequence[str],
    config: CleanConfig | None = None,
    frequencies: Counter | None = None,
    estimator: TokenEstimator = DEFAULT_ESTIMATOR,
) -> tuple[list[str], CleanStats]:
    """Drop every occurrence of texts appearing more than the threshold.

    *texts* are normalized comment strings.  When *frequencies* is not
    supplied a first counting pass runs over the input.  A text with corpus
    frequency strictly greater than ``dedup_threshold`` is dropped entirely;
    at or below the threshold all occurrences are kept.
    """
    cfg = config or CleanConfig()
    freq = frequencies if frequencies is not None else count_frequencies(texts)
    retained = [t for t in texts if freq[t] <= cfg.dedup_threshold]
    stats = _make_stats(
        input_count=len(texts),
        output_count=len(retained),
        tokens_before=sum(estimator(t) for t in texts),
        tokens_after=sum(estimator(t) for t in retained),
        estimator_name=estimator.name,
    )
    return retained, stats


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass
class CleanResult:
    """Retained comments plus accounting for the whole pipeline."""

    kept: list[tuple[int, str]]  # (index into the input, normalized text)
    stats: CleanStats
    dropped_boilerplate: int = 0
    dropped_frequent: int = 0
    frequencies: Counter = field(default_factory=Counter)


def clean_corpus(
    raw_comments: Sequence[str],
    config: CleanConfig | None = None,
    estimator: TokenEstimator = DEFAULT_ESTIMATOR,
) -> CleanResult:
    """Run normalize -> boilerplate filter -> frequency dedup over a corpus.

    Token accounting is raw text in, retained normalized text out, so the
    reduction ratio reflects what an LLM pass would actually consume.
    Output order follows input order; the retained multiset and all stats
    are invariant under input permutation.
    """
    cfg = config or CleanConfig()
    normalized = [(i, normalize(raw)) for i, raw in enumerate(raw_comments)]
    survivors = [(i, t) for i, t in normalized if not is_boilerplate(t, cfg)]
    dropped_boiler = len(normalized) - len(survivors)

    freq = count_frequencies(t for _, t in survivors)
    kept = [(i, t) for i, t in survivors if freq[t] <= cfg.dedup_threshold]
    dropped_freq = len(survivors) - len(kept)

    stats = _make_stats(
        input_count=len(raw_comments),
        output_count=len(kept),
        tokens_before=sum(estimator(raw) for raw in raw_comments),
        tokens_after=sum(estimator(t) for _, t in kept),
        estimator_name=estimator.name,
    )
    logger.debug(
        "cleaned corpus: %d in, %d out (%d boilerplate, %d over-frequent)",
        stats.input_count,
        stats.output_count,
        dropped_boiler,
        dropped_freq,
    )
    return CleanResult(
        kept=kept,
        stats=stats,
        dropped_boilerplate=dropped_boiler,
        dropped_frequent=dropped_freq,
        frequencies=freq,
    )
