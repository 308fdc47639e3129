"""Unify detections into findings: severity, redaction, aggregation, output.

Every finding carries redacted evidence only; the full matched secret never
leaves the scanning stage.  The severity policy is data (an editable JSON
map), not code, so operators can tune risk categories without touching the
scanner.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from urllib.parse import parse_qsl, urlsplit, urlunsplit

from .classify import CategoryLabel, normalize_labels
from .patterns import Locus, RawMatch

logger = logging.getLogger(__name__)

METHOD_PM = "PM"  # pattern matching
METHOD_EE = "EE"  # entity extraction
METHOD_LF = "LF"  # logical filtering

SEVERITIES = ("Critical", "High", "Medium", "Low")

#: Category keys for findings produced outside the pattern engine.
CATEGORY_EXIF_GPS = "Image location EXIF data"
CATEGORY_EXIF_DEVICE = "Image device metadata"
CATEGORY_SQLITE = "SQLite databases"
CATEGORY_CONFIG_FILES = "Structured configuration files and metadata (JSON, YAML)"
CATEGORY_SOURCE_CODE = "Private source code"
CATEGORY_MODEL_WEIGHTS = "Private model weights and training data"

EE_CATEGORIES: dict[CategoryLabel, str] = {
    CategoryLabel.PII: "PII Exposure",
    CategoryLabel.CRED: "Login credentials (username/password)",
    CategoryLabel.NETID: "Network & Device Identifiers (e.g., MAC, Host ID)",
    CategoryLabel.PEER: "Peer reviews disputes / disagreements",
    CategoryLabel.CONF: "Author conflicts and admission of false results",
}


@dataclass(frozen=True)
class Finding:
    paper_id: str
    method: str
    category: str
    severity: str
    locus: Locus
    evidence_redacted: str
    rule_or_backend: str
    labels: frozenset = frozenset()
    host: str | None = None

    def as_dict(self) -> dict:
        data = {
            "paper_id": self.paper_id,
            "method": self.method,
            "category": self.category,
            "severity": self.severity,
            "locus": self.locus.as_dict(),
            "evidence_redacted": self.evidence_redacted,
            "rule_or_backend": self.rule_or_backend,
            "labels": sorted(l.value for l in self.labels),
        }
        if self.host:
            data["host"] = self.host
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Finding":
        locus = data.get("locus", {})
        return cls(
            paper_id=data["paper_id"],
            method=data["method"],
            category=data["category"],
            severity=data["severity"],
            locus=Locus(
                locus.get("paper_id", data["paper_id"]),
                locus.get("file", ""),
                locus.get("line", 0),
            ),
            evidence_redacted=data["evidence_redacted"],
            rule_or_backend=data["rule_or_backend"],
            labels=normalize_labels(data["labels"]) if data.get("labels") else frozenset(),
            host=data.get("host"),
        )


# ---------------------------------------------------------------------------
# Severity policy
# ---------------------------------------------------------------------------


class SeverityMap:
    """Category key -> severity, loaded from editable JSON data."""

    def __init__(self, mapping: Mapping[str, str]):
        for category, severity in mapping.items():
            if severity not in SEVERITIES:
                raise ValueError(f"unknown severity {severity!r} for {category!r}")
        self.mapping = dict(mapping)

    @classmethod
    def from_file(cls, path: Path | str) -> "SeverityMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def default(cls) -> "SeverityMap":
        return cls.from_file(Path(__file__).resolve().parent / "data" / "severity_map.json")

    def severity_for(self, category: str) -> str:
        severity = self.mapping.get(category)
        if severity is None:
            logger.warning("category %r not in severity map, defaulting to Low", category)
            return "Low"
        return severity


def assign_severity(finding: Finding, severity_map: SeverityMap) -> Finding:
    """Finding with severity set from the map; otherwise unchanged."""
    return replace(finding, severity=severity_map.severity_for(finding.category))


# ---------------------------------------------------------------------------
# Redaction
# ---------------------------------------------------------------------------

_EMAIL_SHAPE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_SCHEME_SHAPE = re.compile(r"^[a-zA-Z][a-zA-Z0-9+.-]*://")


def _redact_generic(text: str) -> str:
    keep = min(4, max(0, len(text) - 4))
    return text[:keep] + "*" * (len(text) - keep)


def _redact_email(text: str) -> str:
    local, _, domain = text.partition("@")
    labels = domain.split(".")
    first = labels[0][:1] + "****" if labels[0] else "****"
    rest = ".".join(labels[1:])
    masked_local = local[:1] + "*****"
    return f"{masked_local}@{first}" + (f".{rest}" if rest else "")


def _redact_url(text: str) -> str:
    try:
        parts = urlsplit(text)
    except ValueError:
        return _redact_generic(text)
    segments = []
    for seg in parts.path.split("/"):
        segments.append(seg[:4] + "****" if len(seg) > 8 else seg)
    query_pairs = parse_qsl(parts.query, keep_blank_values=True)
    masked_query = "&".join(
        f"{k}={v[:2] + '****' if len(v) > 4 else v}" for k, v in query_pairs
    )
    return urlunsplit(
        (parts.scheme, parts.netloc, "/".join(segments), masked_query, "")
    )


_TOKEN_SPLIT = re.compile(r"(\s+)")
_TWO_DIGITS = re.compile(r"\d.*\d")


def _redact_snippet(text: str) -> str:
    """Mask long tokens and digit-bearing tokens, keeping structure.

    Short numeric groups must be masked too: an account number split into
    four-character groups would otherwise survive token-wise masking intact.
    """
    out = []
    for token in _TOKEN_SPLIT.split(text):
        if token.isspace():
            out.append(token)
        elif len(token) >= 5 or (len(token) >= 2 and _TWO_DIGITS.search(token)):
            out.append(token[:2] + "****")
        else:
            out.append(token)
    return "".join(out)


def redact(evidence: str, kind: str = "") -> str:
    """Redact *evidence* so no full secret survives; idempotent.

    Secrets keep at most four leading characters; emails keep the first
    character and the domain tail; URLs keep the host with masked path and
    query; multi-word snippets are masked token-wise.  ``kind="secret"``
    forces the generic leading-characters rule regardless of shape.
    """
    kind = kind.lower()
    if kind == "secret":
        return _redact_generic(evidence)
    if kind == "email" or (_EMAIL_SHAPE.match(evidence) and "://" not in evidence):
        return _redact_email(evidence)
    if kind == "url" or _SCHEME_SHAPE.match(evidence):
        return _redact_url(evidence)
    if kind == "snippet" or (" " in evidence.strip()):
        return _redact_snippet(evidence)
    return _redact_generic(evidence)


# ---------------------------------------------------------------------------
# Finding construction
# ---------------------------------------------------------------------------


#: How evidence for each analyzer's matches is masked; default is the
#: generic secret rule (URLs keep their host, emails their shape).
_RULE_REDACTION_KINDS = {
    "analyzer:email": "email",
    "analyzer:url": "url",
    "analyzer:git-http": "url",
    "analyzer:git-ssh": "url",
}


def finding_from_match(
    match: RawMatch,
    severity_map: SeverityMap,
    method: str = METHOD_PM,
) -> Finding | None:
    """Convert one raw match into a redacted finding.

    Suppressed matches and matches without a reportable category yield None;
    this is the chokepoint that keeps placeholders out of every report.
    """
    if match.suppressed:
        logger.debug("dropping suppressed match %s (%s)", match.rule_id, match.suppress_reason)
        return None
    if match.category_hint is None:
        return None
    labels = (
        frozenset({CategoryLabel(match.label_hint)}) if match.label_hint else frozenset()
    )
    kind = _RULE_REDACTION_KINDS.get(match.rule_id, "secret")
    finding = Finding(
        paper_id=match.locus.paper_id,
        method=method,
        category=match.category_hint,
        severity="Low",
        locus=match.locus,
        evidence_redacted=redact(match.matched, kind=kind),
        rule_or_backend=match.rule_id,
        labels=labels,
        host=match.host,
    )
    return assign_severity(finding, severity_map)


def findings_from_labels(
    paper_id: str,
    labels: frozenset,
    locus: Locus,
    backend_name: str,
    severity_map: SeverityMap,
    excerpt: str = "",
) -> list[Finding]:
    """Entity-extraction findings: one per non-OTHER label on a comment block."""
    findings = []
    evidence = redact(excerpt, kind="snippet") if excerpt else ""
    for label in sorted(labels, key=lambda l: l.value):
        if label == CategoryLabel.OTHER:
            continue
        finding = Finding(
            paper_id=paper_id,
            method=METHOD_EE,
            category=EE_CATEGORIES[label],
            severity="Low",
            locus=locus,
            evidence_redacted=evidence,
            rule_or_backend=backend_name,
            labels=labels,
        )
        findings.append(assign_severity(finding, severity_map))
    return findings


_CANDIDATE_FILE_CATEGORIES: tuple[tuple[frozenset, str], ...] = (
    (frozenset({".db", ".sqlite", ".sqlite3"}), CATEGORY_SQLITE),
    (frozenset({".json", ".yaml", ".yml", ".xml", ".toml", ".ini", ".cfg"}), CATEGORY_CONFIG_FILES),
    (
        frozenset({".pt", ".pth", ".ckpt", ".h5", ".onnx", ".safetensors", ".npz", ".pkl"}),
        CATEGORY_MODEL_WEIGHTS,
    ),
    (frozenset({".py", ".js", ".c", ".cpp", ".java", ".go", ".rs", ".sh", ".m", ".r"}),
     CATEGORY_SOURCE_CODE),
)


def finding_from_candidate_file(
    paper_id: str, path: str, severity_map: SeverityMap
) -> Finding | None:
    """Logical-filtering finding for an unreferenced file, by extension class."""
    suffix = ("." + path.rsplit(".", 1)[-1].lower()) if "." in path.rsplit("/", 1)[-1] else ""
    for extensions, category in _CANDIDATE_FILE_CATEGORIES:
        if suffix in extensions:
            finding = Finding(
                paper_id=paper_id,
                method=METHOD_LF,
                category=category,
                severity="Low",
                locus=Locus(paper_id, path, 0),
                evidence_redacted=f"unreferenced file {path}",
                rule_or_backend="refgraph",
            )
            return assign_severity(finding, severity_map)
    return None


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class AggregateStats:
    total: int
    by_category: dict[str, int]
    by_severity: dict[str, int]
    by_method: dict[str, int]
    top_domains: list[tuple[str, int]]
    label_combinations: dict[str, int]
    flagged_papers: int = 0

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "by_category": self.by_category,
            "by_severity": self.by_severity,
            "by_method": self.by_method,
            "top_domains": [{"domain": d, "count": c} for d, c in self.top_domains],
            "label_combinations": self.label_combinations,
            "flagged_papers": self.flagged_papers,
        }


def aggregate(findings: Sequence[Finding], top_n: int = 10) -> AggregateStats:
    """Counts per category/severity/method, top URL domains, label combos.

    Label combinations are counted once per paper (a paper predicted
    {CONF, PEER} is one row of that combination, however many findings it
    produced).
    """
    by_category = Counter(f.category for f in findings)
    by_severity = Counter(f.severity for f in findings)
    by_method = Counter(f.method for f in findings)
    domains = Counter(f.host for f in findings if f.host)

    per_paper_labels: dict[str, frozenset] = {}
    for f in findings:
        if f.method == METHOD_EE and f.labels:
            per_paper_labels.setdefault(f.paper_id, f.labels)
    combos = Counter(
        ", ".join(sorted(l.value for l in labels))
        for labels in per_paper_labels.values()
    )

    return AggregateStats(
        total=len(findings),
        by_category=dict(by_category.most_common()),
        by_severity={s: by_severity.get(s, 0) for s in SEVERITIES},
        by_method={m: by_method.get(m, 0) for m in (METHOD_PM, METHOD_EE, METHOD_LF)},
        top_domains=domains.most_common(top_n),
        label_combinations=dict(combos.most_common()),
        flagged_papers=len({f.paper_id for f in findings}),
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def sort_findings(findings: Iterable[Finding]) -> list[Finding]:
    return sorted(
        findings,
        key=lambda f: (f.paper_id, f.locus.file, f.locus.line, f.rule_or_backend, f.category),
    )


def write_findings_jsonl(findings: Iterable[Finding], path: Path | str) -> int:
    """Stable-sorted JSONL, one finding per line, line-atomic writes."""
    ordered = sort_findings(findings)
    with open(path, "w", encoding="utf-8") as fh:
        for finding in ordered:
            fh.write(json.dumps(finding.as_dict(), ensure_ascii=False) + "\n")
    return len(ordered)


def append_finding_jsonl(finding: Finding, path: Path | str) -> None:
    line = json.dumps(finding.as_dict(), ensure_ascii=False) + "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line)


def load_findings_jsonl(path: Path | str) -> list[Finding]:
    findings = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                findings.append(Finding.from_dict(json.loads(line)))
    return findings


def write_summary_json(stats: AggregateStats, path: Path | str) -> None:
    payload = dict(stats.as_dict())
    payload["generated_at"] = datetime.now(timezone.utc).isoformat()
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def render_summary_md(findings: Sequence[Finding], stats: AggregateStats) -> str:
    """Human summary table in severity order, counts per category."""
    severity_rank = {s: i for i, s in enumerate(SEVERITIES)}
    rows: dict[tuple[str, str, str], int] = {}
    for f in findings:
        key = (f.category, f.method, f.severity)
        rows[key] = rows.get(key, 0) + 1
    ordered = sorted(rows.items(), key=lambda kv: (severity_rank[kv[0][2]], -kv[1], kv[0][0]))

    lines = [
        "# Sensitive information disclosures",
        "",
        f"Total findings: {stats.total} across {stats.flagged_papers} papers",
        "",
        "| Description | Detection | Count | Severity |",
        "|---|---|---:|---|",
    ]
    for (category, method, severity), count in ordered:
        lines.append(f"| {category} | {method} | {count} | {severity} |")
    if stats.top_domains:
        lines += ["", "## Most common domains in flagged URLs", ""]
        for domain, count in stats.top_domains:
            lines.append(f"- {domain}: {count}")
    if stats.label_combinations:
        lines += ["", "## Label combination distribution", ""]
        lines.append("| Combination | Papers |")
        lines.append("|---|---:|")
        for combo, count in stats.label_combinations.items():
            lines.append(f"| {combo} | {count} |")
    return "\n".join(lines) + "\n"
