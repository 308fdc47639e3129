"""Detector benchmark harness: EMA, ONE, per-category confusion, costs.

Scores any detector backend against a gold-labeled snippet dataset.  EMA
(exact-match accuracy) requires the predicted label set to equal the gold
set; ONE (at-least-one accuracy) requires a non-empty intersection, which is
the operationally relevant bar since any hit triggers manual review.  On
negative snippets (gold {OTHER}) a prediction counts for ONE only when it is
exactly {OTHER}: a detector does not get credit for flagging benign text.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .classify import (
    BackendError,
    CategoryLabel,
    DetectorBackend,
    estimate_cost,
    normalize_labels,
)
from .cleaning import DEFAULT_ESTIMATOR, TokenEstimator

logger = logging.getLogger(__name__)

#: Categories scored in the confusion table (OTHER is the negative class).
SCORED_CATEGORIES = (
    CategoryLabel.CRED,
    CategoryLabel.PII,
    CategoryLabel.NETID,
    CategoryLabel.PEER,
    CategoryLabel.CONF,
)

#: Cost projection defaults: the cleaned-comment volume of a 100k-paper
#: corpus is ~224M input tokens, and prompt scaffolding plus output tokens
#: roughly triple what the endpoint actually bills.
DEFAULT_CORPUS_TOKENS = 224_000_000
DEFAULT_COST_OVERHEAD = 3.0


@dataclass(frozen=True)
class GoldSnippet:
    id: str
    text: str
    gold: frozenset

    def as_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "gold": sorted(l.value for l in self.gold)}


@dataclass
class CategoryCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn}


@dataclass
class EvalReport:
    backend: str
    ema: float
    one: float
    per_category: dict[str, CategoryCounts]
    est_cost: float
    total: int
    price_per_m_input: float = 0.0
    failed_snippets: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "backend": self.backend,
            "ema": self.ema,
            "one": self.one,
            "per_category": {k: v.as_dict() for k, v in self.per_category.items()},
            "est_cost": self.est_cost,
            "total": self.total,
            "price_per_m_input": self.price_per_m_input,
            "failed_snippets": self.failed_snippets,
        }


def score_predictions(
    dataset: Sequence[GoldSnippet],
    predictions: Sequence[frozenset],
    backend_name: str,
    price_per_m_input: float = 0.0,
    failed: Sequence[str] = (),
    estimator: TokenEstimator = DEFAULT_ESTIMATOR,
) -> EvalReport:
    """Score an aligned (dataset, predictions) pair."""
    if len(dataset) != len(predictions):
        raise ValueError("dataset and predictions differ in length")
    exact = 0
    at_least_one = 0
    confusion = {label.value: CategoryCounts() for label in SCORED_CATEGORIES}
    for snippet, pred in zip(dataset, predictions):
        if pred == snippet.gold:
            exact += 1
        if pred & snippet.gold:
            at_least_one += 1
        for label in SCORED_CATEGORIES:
            in_gold = label in snippet.gold
            in_pred = label in pred
            counts = confusion[label.value]
            if in_gold and in_pred:
                counts.tp += 1
            elif in_pred:
                counts.fp += 1
            elif in_gold:
                counts.fn += 1

    n = len(dataset)
    ema = exact / n
    one = at_least_one / n
    assert 0.0 <= ema <= one <= 1.0, "exact match can never beat at-least-one"
    input_tokens = sum(estimator(s.text) for s in dataset)
    report = EvalReport(
        backend=backend_name,
        ema=ema,
        one=one,
        per_category=confusion,
        est_cost=estimate_cost(input_tokens, price_per_m_input),
        total=n,
        price_per_m_input=price_per_m_input,
        failed_snippets=list(failed),
    )
    return report


def evaluate(
    backend: DetectorBackend,
    dataset: Sequence[GoldSnippet],
    chunk_size: int = 25,
    estimator: TokenEstimator = DEFAULT_ESTIMATOR,
) -> EvalReport:
    """Run *backend* over the dataset and score it.

    A failing backend chunk does not abort the evaluation: affected snippets
    are scored as predicted {OTHER} and listed in the report.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    predictions: list[frozenset] = []
    failed: list[str] = []
    for start in range(0, len(dataset), chunk_size):
        chunk = dataset[start : start + chunk_size]
        try:
            predicted = backend.classify([s.text for s in chunk])
            if len(predicted) != len(chunk):
                raise BackendError(
                    f"{backend.name}: {len(predicted)} predictions for {len(chunk)} snippets"
                )
        except BackendError as exc:
            logger.warning("backend failure on chunk at %d: %s", start, exc)
            predicted = [frozenset({CategoryLabel.OTHER})] * len(chunk)
            failed.extend(s.id for s in chunk)
        predictions.extend(predicted)
    return score_predictions(
        dataset,
        predictions,
        backend_name=backend.name,
        price_per_m_input=getattr(backend, "price_per_m_input", 0.0),
        failed=failed,
        estimator=estimator,
    )


# ---------------------------------------------------------------------------
# Dataset construction and IO
# ---------------------------------------------------------------------------


def build_embedded_dataset(
    snippets: Sequence[GoldSnippet],
    filler_docs: Sequence[str],
    seed: int,
    n_negatives: int = 100,
) -> list[GoldSnippet]:
    """Embed sensitive snippets inside benign filler text.

    Long realistic context degrades detector performance, so each sensitive
    snippet lands at a seeded-random word offset inside a random filler
    document, followed by *n_negatives* pure-filler entries labeled OTHER.
    Deterministic for a fixed seed, down to the byte.
    """
    if not filler_docs:
        raise ValueError("need at least one filler document")
    rng = random.Random(seed)
    dataset: list[GoldSnippet] = []
    for snippet in snippets:
        filler = filler_docs[rng.randrange(len(filler_docs))]
        words = filler.split()
        cut = rng.randint(0, len(words))
        text = " ".join(words[:cut] + [snippet.text] + words[cut:])
        dataset.append(GoldSnippet(id=snippet.id, text=text, gold=snippet.gold))
    for i in range(n_negatives):
        filler = filler_docs[rng.randrange(len(filler_docs))]
        dataset.append(
            GoldSnippet(
                id=f"neg-{i:04d}",
                text=filler,
                gold=frozenset({CategoryLabel.OTHER}),
            )
        )
    return dataset


def load_dataset(path: Path | str) -> list[GoldSnippet]:
    """Load a gold dataset from JSONL with id/text/gold fields.

    Accepts ``labels`` or ``label`` as field aliases so published snippet
    datasets drop in without conversion.
    """
    dataset = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            item = json.loads(line)
            raw = item.get("gold", item.get("labels", item.get("label", [])))
            if isinstance(raw, str):
                raw = [raw]
            dataset.append(
                GoldSnippet(
                    id=str(item.get("id", line_no)),
                    text=item["text"],
                    gold=normalize_labels(raw),
                )
            )
    return dataset


def save_dataset(dataset: Sequence[GoldSnippet], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for snippet in dataset:
            fh.write(json.dumps(snippet.as_dict(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Leaderboard rendering
# ---------------------------------------------------------------------------


def render_leaderboard(
    reports: Sequence[EvalReport],
    corpus_tokens: int = DEFAULT_CORPUS_TOKENS,
    cost_overhead: float = DEFAULT_COST_OVERHEAD,
) -> str:
    """Aligned text table, sorted by EMA.

    MT is the price per million input tokens; ALL projects that price onto
    the full-corpus token volume times the overhead factor (prompt
    scaffolding and output tokens).
    """
    header = ["Model", "EMA", "ONE"]
    for label in SCORED_CATEGORIES:
        header += [f"{label.value} TP", "FP", "FN"]
    header += ["MT", "ALL"]

    rows = []
    for report in sorted(reports, key=lambda r: -r.ema):
        row = [report.backend, f"{report.ema:.1%}", f"{report.one:.1%}"]
        for label in SCORED_CATEGORIES:
            counts = report.per_category[label.value]
            row += [str(counts.tp), str(counts.fp), str(counts.fn)]
        all_cost = estimate_cost(int(corpus_tokens * cost_overhead), report.price_per_m_input)
        row += [f"${report.price_per_m_input:.2f}", f"${all_cost:,.0f}"]
        rows.append(row)

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    fmt_row = lambda cells: "  ".join(c.ljust(widths[i]) for i, c in enumerate(cells))
    lines = [fmt_row(header), fmt_row(["-" * w for w in widths])]
    lines += [fmt_row(r) for r in rows]
    return "\n".join(lines)
