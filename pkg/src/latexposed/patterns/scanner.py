"""Rule scanning, structural sweeps, and placeholder suppression.

Matches that are clearly illustrative (example.com addresses, loopback IPs,
vendor documentation keys) are kept in the match stream but marked
suppressed; downstream reporting refuses suppressed matches, so the findings
never contain them.
"""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .analyzers import (
    IP_LOOPBACK,
    IP_RESERVED,
    analyze_jwt,
    classify_ip,
    classify_url,
    iban_shape_ok,
    validate_iban,
)
from .rules import RuleSet

logger = logging.getLogger(__name__)

CONTEXT_CHARS = 80

LABEL_PII = "PII"
LABEL_CRED = "CRED"
LABEL_NETID = "NETID"


@dataclass(frozen=True)
class Locus:
    paper_id: str
    file: str
    line: int

    def as_dict(self) -> dict:
        return {"paper_id": self.paper_id, "file": self.file, "line": self.line}

    def sort_key(self) -> tuple:
        return (self.paper_id, self.file, self.line)


@dataclass
class RawMatch:
    rule_id: str
    locus: Locus
    matched: str
    context: str
    start: int = 0
    suppressed: bool = False
    suppress_reason: str | None = None
    category_hint: str | None = None
    label_hint: str | None = None
    host: str | None = None

    def as_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "locus": self.locus.as_dict(),
            "matched": self.matched,
            "context": self.context,
            "suppressed": self.suppressed,
            "suppress_reason": self.suppress_reason,
            "category_hint": self.category_hint,
        }


# ---------------------------------------------------------------------------
# Suppression
# ---------------------------------------------------------------------------


class SuppressionList:
    """Literal placeholder markers, one per line in the data file.

    An entry suppresses a match when it occurs inside the matched text at a
    non-alphanumeric boundary (so ``test.com`` does not fire on
    ``latest.com``).  Matching is case-insensitive.
    """

    def __init__(self, entries: Iterable[str]):
        self.entries = [e.strip() for e in entries if e.strip() and not e.startswith("#")]
        if self.entries:
            alternation = "|".join(
                f"(?<![A-Za-z0-9]){re.escape(e)}(?![A-Za-z0-9])" for e in self.entries
            )
            self._regex = re.compile(alternation, re.IGNORECASE)
        else:
            self._regex = None

    @classmethod
    def from_file(cls, path: Path | str) -> "SuppressionList":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(fh.readlines())

    @classmethod
    def default(cls) -> "SuppressionList":
        return cls.from_file(Path(__file__).resolve().parent.parent / "data" / "suppression.txt")

    def reason_for(self, text: str) -> str | None:
        if self._regex is None:
            return None
        m = self._regex.search(text)
        return m.group(0) if m else None


def _apply_suppression(match: RawMatch, suppression: SuppressionList | None) -> None:
    if match.suppressed or suppression is None:
        return
    reason = suppression.reason_for(match.matched)
    if reason is not None:
        match.suppressed = True
        match.suppress_reason = f"placeholder marker {reason!r}"


# ---------------------------------------------------------------------------
# Rule scanning
# ---------------------------------------------------------------------------


class _LineIndex:
    def __init__(self, text: str):
        self.starts = [0]
        pos = text.find("\n")
        while pos != -1:
            self.starts.append(pos + 1)
            pos = text.find("\n", pos + 1)

    def line_of(self, offset: int) -> int:
        return bisect.bisect_right(self.starts, offset)


def _context(text: str, start: int, end: int) -> str:
    return text[max(0, start - CONTEXT_CHARS) : end + CONTEXT_CHARS]


def scan(
    text: str,
    rules: RuleSet,
    paper_id: str = "",
    file: str = "",
    suppression: SuppressionList | None = None,
    line_offset: int = 0,
) -> list[RawMatch]:
    """Run every compiled rule over *text*.

    Reports all non-overlapping leftmost matches per rule, in deterministic
    (position, rule id) order.  Rules carrying a required literal that does
    not occur in the text are skipped without a regex pass, which is what
    keeps full-database scans fast; the result is identical to scanning
    every rule.
    """
    lines = _LineIndex(text)
    lowered: str | None = None
    matches: list[RawMatch] = []
    for compiled in rules:
        if compiled.literal is not None:
            if compiled.ignorecase:
                if lowered is None:
                    lowered = text.lower()
                if compiled.literal not in lowered:
                    continue
            elif compiled.literal not in text:
                continue
        for m in compiled.regex.finditer(text):
            matched = m.group(0)
            if not matched:
                continue
            rm = RawMatch(
                rule_id=compiled.rule.id,
                locus=Locus(paper_id, file, line_offset + lines.line_of(m.start())),
                matched=matched,
                context=_context(text, m.start(), m.end()),
                start=m.start(),
                category_hint=compiled.rule.category_hint,
                label_hint=LABEL_CRED,
            )
            _apply_suppression(rm, suppression)
            matches.append(rm)
    matches.sort(key=lambda r: (r.start, r.rule_id))
    return matches


# ---------------------------------------------------------------------------
# Structural sweep
# ---------------------------------------------------------------------------

_URL = re.compile(r"""https?://[^\s<>"'{}\\|^`]+""")
_EMAIL = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")
_IPV4 = re.compile(r"(?<![\d.])\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}(?::\d{1,5})?(?![\d.\w])")
_IBAN_COMPACT = re.compile(r"\b[A-Z]{2}\d{2}[A-Za-z0-9]{11,30}\b")
_IBAN_SPACED = re.compile(r"\b[A-Z]{2}\d{2}(?: [A-Z0-9]{4}){2,7}(?: [A-Z0-9]{1,4})?\b")
_JWT = re.compile(r"\beyJ[A-Za-z0-9_-]{4,}\.[A-Za-z0-9_-]{2,}\.[A-Za-z0-9_-]*")
_MD5 = re.compile(r"(?<![0-9A-Fa-f])[0-9a-fA-F]{32}(?![0-9A-Fa-f])")
_SHA1 = re.compile(r"(?<![0-9A-Fa-f])[0-9a-fA-F]{40}(?![0-9A-Fa-f])")
_SHA256 = re.compile(r"(?<![0-9A-Fa-f])[0-9a-fA-F]{64}(?![0-9A-Fa-f])")
_PO_BOX = re.compile(r"(?i)\bP\.?\s?O\.?\s?Box\s+\d+")
_GIT_SCP = re.compile(r"\bgit@[\w.-]+:[\w./~-]+")
_GIT_SSH = re.compile(r"\bssh://git@[^\s<>\"']+")
_GIT_HTTP = re.compile(r"https?://[^\s<>\"']+\.git\b")
_URL_TRAIL = ".,;:!?)]}\"'"

CATEGORY_EMAIL = "Unique email addresses"
CATEGORY_IP = "Unintended Public Exposure of IP addresses"
CATEGORY_IBAN = "Validated IBANs"
CATEGORY_JWT_NO_EXPIRY = "JSON Web Tokens (JWTs) without expiry date"
CATEGORY_HASH = "Hashes with unknown content (MD5, SHA1, SHA256)"
CATEGORY_CLOUD = "Private documents and folders"
CATEGORY_CASA = "CASA tokens (publication access)"
CATEGORY_TOKEN_URL = "Signed URLs (token-like access)"
CATEGORY_GIT = "Private Git repository addresses (HTTP/SSH)"
CATEGORY_PO_BOX = "P.O Box addresses"
CATEGORY_SSN = "Social security numbers (US, UK)"
CATEGORY_PHONE = "Phone numbers (not publicly accessible by design)"
CATEGORY_NETID = "Network & Device Identifiers (e.g., MAC, Host ID)"


@dataclass(frozen=True)
class ContextRule:
    """A pattern that only counts near a context word.

    Bare digit shapes are false-positive storms; requiring a nearby cue word
    ("phone", "ssn") keeps precision workable.
    """

    rule_id: str
    pattern: re.Pattern
    context: re.Pattern
    window: int
    category: str
    label: str


CONTEXT_RULES: tuple[ContextRule, ...] = (
    ContextRule(
        rule_id="analyzer:us-ssn",
        pattern=re.compile(r"\b\d{3}-\d{2}-\d{4}\b"),
        context=re.compile(r"(?i)\b(?:ssn|social security)\b"),
        window=40,
        category=CATEGORY_SSN,
        label=LABEL_PII,
    ),
    ContextRule(
        rule_id="analyzer:uk-nino",
        pattern=re.compile(r"\b[A-CEGHJ-PR-TW-Z]{2}\s?\d{2}\s?\d{2}\s?\d{2}\s?[A-D]\b"),
        context=re.compile(r"(?i)\bnational insurance\b|\bnino\b"),
        window=40,
        category=CATEGORY_SSN,
        label=LABEL_PII,
    ),
    ContextRule(
        rule_id="analyzer:us-phone",
        pattern=re.compile(r"\(?\b\d{3}\)?[-. ]\d{3}[-. ]\d{4}\b"),
        context=re.compile(r"(?i)\b(?:phone|tel|cell|mobile|fax|call)\b"),
        window=40,
        category=CATEGORY_PHONE,
        label=LABEL_PII,
    ),
    ContextRule(
        rule_id="analyzer:uk-phone",
        pattern=re.compile(r"\b(?:\+44|0)\d{3,4}[ -]?\d{3,4}[ -]?\d{3,4}\b"),
        context=re.compile(r"(?i)\b(?:phone|tel|cell|mobile|fax|call)\b"),
        window=40,
        category=CATEGORY_PHONE,
        label=LABEL_PII,
    ),
    ContextRule(
        rule_id="analyzer:hostname",
        pattern=re.compile(r"(?i)\b(?:host(?:name)?|machine[_ ]?id|workstation)\s*[:=]\s*\S+"),
        context=re.compile(r""),
        window=0,
        category=CATEGORY_NETID,
        label=LABEL_NETID,
    ),
    ContextRule(
        rule_id="analyzer:username",
        pattern=re.compile(r"(?i)\b(?:username|login|account)\s*[:=]\s*\S+"),
        context=re.compile(r""),
        window=0,
        category=CATEGORY_NETID,
        label=LABEL_NETID,
    ),
    ContextRule(
        rule_id="analyzer:mac-address",
        pattern=re.compile(r"\b(?:[0-9A-Fa-f]{2}:){5}[0-9A-Fa-f]{2}\b"),
        context=re.compile(r""),
        window=0,
        category=CATEGORY_NETID,
        label=LABEL_NETID,
    ),
)

_HASH_RULES = (
    ("analyzer:sha256-hash", _SHA256),
    ("analyzer:sha1-hash", _SHA1),
    ("analyzer:md5-hash", _MD5),
)


@dataclass
class UrlHeuristics:
    min_token_len: int = 20
    min_token_entropy: float = 3.5


def scan_structures(
    text: str,
    paper_id: str = "",
    file: str = "",
    suppression: SuppressionList | None = None,
    url_heuristics: UrlHeuristics | None = None,
    line_offset: int = 0,
) -> list[RawMatch]:
    """Sweep *text* with the structural analyzers.

    Emits matches for URLs worth reporting (cloud shares, CASA tokens,
    token-like links, git remotes), emails, IPs, validated IBANs, JWTs,
    hashes, and the context-gated phone/SSN/NETID shapes.
    """
    heur = url_heuristics or UrlHeuristics()
    lines = _LineIndex(text)
    matches: list[RawMatch] = []
    claimed_hex: list[tuple[int, int]] = []

    def add(
        rule_id: str,
        m_start: int,
        m_end: int,
        matched: str,
        category: str | None,
        label: str | None,
        host: str | None = None,
        suppressed: bool = False,
        reason: str | None = None,
    ) -> None:
        rm = RawMatch(
            rule_id=rule_id,
            locus=Locus(paper_id, file, line_offset + lines.line_of(m_start)),
            matched=matched,
            context=_context(text, m_start, m_end),
            start=m_start,
            suppressed=suppressed,
            suppress_reason=reason,
            category_hint=category,
            label_hint=label,
            host=host,
        )
        _apply_suppression(rm, suppression)
        matches.append(rm)

    # URLs
    for m in _URL.finditer(text):
        url = m.group(0).rstrip(_URL_TRAIL)
        record = classify_url(
            url, min_token_len=heur.min_token_len, min_token_entropy=heur.min_token_entropy
        )
        category = None
        if record.cloud_provider is not None:
            category = CATEGORY_CLOUD
        elif record.casa_token:
            category = CATEGORY_CASA
        elif record.token_like:
            category = CATEGORY_TOKEN_URL
        if category is None and not record.suppressed:
            continue  # ordinary link, not a finding
        add(
            "analyzer:url",
            m.start(),
            m.start() + len(url),
            url,
            category,
            None,
            host=record.host,
            suppressed=record.suppressed,
            reason="example or loopback host" if record.suppressed else None,
        )

    # Git remotes
    for rule_id, pattern in (
        ("analyzer:git-scp", _GIT_SCP),
        ("analyzer:git-ssh", _GIT_SSH),
        ("analyzer:git-http", _GIT_HTTP),
    ):
        for m in pattern.finditer(text):
            add(rule_id, m.start(), m.end(), m.group(0), CATEGORY_GIT, None)

    # Emails
    for m in _EMAIL.finditer(text):
        add("analyzer:email", m.start(), m.end(), m.group(0), CATEGORY_EMAIL, LABEL_PII)

    # IPs
    for m in _IPV4.finditer(text):
        try:
            record = classify_ip(m.group(0))
        except ValueError:
            continue
        suppressed = record.kind in (IP_LOOPBACK, IP_RESERVED)
        add(
            "analyzer:ip-address",
            m.start(),
            m.end(),
            m.group(0),
            CATEGORY_IP,
            LABEL_NETID,
            suppressed=suppressed,
            reason=f"{record.kind} address" if suppressed else None,
        )

    # IBANs: compact and space-grouped presentation forms
    seen_iban_spans: set[tuple[int, int]] = set()
    for pattern in (_IBAN_SPACED, _IBAN_COMPACT):
        for m in pattern.finditer(text):
            span = (m.start(), m.end())
            if any(s <= span[0] and span[1] <= e for s, e in seen_iban_spans):
                continue
            candidate = m.group(0)
            if not iban_shape_ok(candidate):
                continue
            if validate_iban(candidate):
                seen_iban_spans.add(span)
                add("analyzer:iban", m.start(), m.end(), candidate, CATEGORY_IBAN, LABEL_PII)

    # JWTs
    for m in _JWT.finditer(text):
        valid, has_expiry = analyze_jwt(m.group(0))
        if not valid:
            continue
        category = CATEGORY_JWT_NO_EXPIRY if not has_expiry else None
        add("analyzer:jwt", m.start(), m.end(), m.group(0), category, LABEL_CRED)
        claimed_hex.append((m.start(), m.end()))

    # Hashes: exact 64/40/32 hex runs, longest first so a SHA256 is not
    # also reported as two MD5-sized substrings.
    for rule_id, pattern in _HASH_RULES:
        for m in pattern.finditer(text):
            if any(s <= m.start() and m.end() <= e for s, e in claimed_hex):
                continue
            claimed_hex.append((m.start(), m.end()))
            add(rule_id, m.start(), m.end(), m.group(0), CATEGORY_HASH, None)

    # P.O. boxes
    for m in _PO_BOX.finditer(text):
        add("analyzer:po-box", m.start(), m.end(), m.group(0), CATEGORY_PO_BOX, LABEL_PII)

    # Context-gated shapes
    for rule in CONTEXT_RULES:
        for m in rule.pattern.finditer(text):
            if rule.window:
                window = text[max(0, m.start() - rule.window) : m.end() + rule.window]
                if not rule.context.search(window):
                    continue
            add(rule.rule_id, m.start(), m.end(), m.group(0), rule.category, rule.label)

    matches.sort(key=lambda r: (r.start, r.rule_id))
    return matches


def scan_text(
    text: str,
    rules: RuleSet,
    paper_id: str = "",
    file: str = "",
    suppression: SuppressionList | None = None,
    url_heuristics: UrlHeuristics | None = None,
    line_offset: int = 0,
) -> list[RawMatch]:
    """Rule scan plus structural sweep, merged deterministically."""
    combined = scan(text, rules, paper_id, file, suppression, line_offset)
    combined.extend(
        scan_structures(text, paper_id, file, suppression, url_heuristics, line_offset)
    )
    combined.sort(key=lambda r: (r.start, r.rule_id))
    return combined
