"""Secret pattern rules: loading, compilation, and prefilter extraction.

Rule files use the secrets-patterns-db YAML layout (a ``patterns`` list of
entries with name/regex/confidence).  Third-party databases mix in
engine-specific syntax, so a pattern that will not compile is skipped with a
named warning instead of aborting the set.

Scanning ~1,750 rules over corpus-sized text one regex at a time is too slow
in pure Python, so each compiled rule gets a *required literal* extracted
from its regex where possible: a substring that every match must contain.
Rules whose literal is absent from the text are skipped wholesale, which is
what makes the full database tractable at 100 MB scale.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import yaml

try:  # renamed to re._parser in 3.11; sre_parse still importable everywhere
    import re._parser as sre_parse  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - Python 3.10 path
    import sre_parse  # type: ignore[no-redef]

logger = logging.getLogger(__name__)

CONFIDENCE_HIGH = "high"
CONFIDENCE_LOW = "low"

_MIN_LITERAL_LEN = 4


@dataclass(frozen=True)
class PatternRule:
    """One scanning rule as declared in a rule file."""

    id: str
    name: str
    pattern: str
    confidence: str = CONFIDENCE_HIGH
    category_hint: str = "Secrets and API tokens (pattern match)"
    severity_hint: str = "Medium"


@dataclass(frozen=True)
class CompiledRule:
    rule: PatternRule
    regex: re.Pattern
    literal: str | None  # required substring of every match, if extractable
    ignorecase: bool


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "rule"


def required_literal(pattern: str, flags: int = 0) -> str | None:
    """Longest literal substring every match of *pattern* must contain.

    Conservative: alternations and optional groups contribute nothing, so
    the result is sound (a text without the literal cannot match).  Returns
    None when no literal of useful length is mandatory.
    """
    try:
        parsed = sre_parse.parse(pattern, flags)
    except Exception:
        return None

    runs: list[str] = []

    def walk(seq) -> None:
        current: list[str] = []

        def flush() -> None:
            if current:
                runs.append("".join(current))
                current.clear()

        for op, arg in seq:
            name = str(op)
            if name == "LITERAL":
                try:
                    current.append(chr(arg))
                except (ValueError, OverflowError):
                    flush()
            elif name == "SUBPATTERN":
                # (group, add_flags, del_flags, subpattern)
                group, add_flags, del_flags, sub = arg
                flush()
                if add_flags or del_flags:
                    continue  # scoped flags change semantics; treat as opaque
                walk(sub)
            elif name in ("MAX_REPEAT", "MIN_REPEAT"):
                min_count, _max_count, sub = arg
                flush()
                if min_count >= 1:
                    walk(sub)
            else:
                # IN, ANY, BRANCH, AT, GROUPREF, ... end any literal run and
                # contribute nothing mandatory.
                flush()
        flush()

    walk(parsed)
    best = max(runs, key=len, default="")
    return best if len(best) >= _MIN_LITERAL_LEN else None


class RuleSet:
    """An immutable compiled rule collection, shared across scan workers."""

    def __init__(self, compiled: list[CompiledRule]):
        self.rules = compiled
        self._by_id = {c.rule.id: c for c in compiled}

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def get(self, rule_id: str) -> CompiledRule | None:
        return self._by_id.get(rule_id)

    @classmethod
    def compile(cls, rules: Iterable[PatternRule]) -> "RuleSet":
        compiled: list[CompiledRule] = []
        skipped = 0
        for rule in rules:
            try:
                regex = re.compile(rule.pattern)
            except re.error as exc:
                skipped += 1
                logger.warning("skipping rule %r: pattern does not compile (%s)", rule.name, exc)
                continue
            ignorecase = bool(regex.flags & re.IGNORECASE)
            literal = required_literal(rule.pattern, re.IGNORECASE if ignorecase else 0)
            if ignorecase and literal is not None:
                literal = literal.lower()
            compiled.append(
                CompiledRule(rule=rule, regex=regex, literal=literal, ignorecase=ignorecase)
            )
        logger.info("compiled %d rules (%d skipped)", len(compiled), skipped)
        return cls(compiled)


def load_rules(path: Path | str) -> list[PatternRule]:
    """Load a secrets-patterns-db style YAML rule file.

    Every entry is compile-checked here; non-compiling patterns are dropped
    with the offending rule named, and the final count is logged.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict) or "patterns" not in data:
        raise ValueError(f"{path}: expected a mapping with a 'patterns' list")

    rules: list[PatternRule] = []
    seen_ids: set[str] = set()
    skipped = 0
    for item in data["patterns"] or []:
        entry = item.get("pattern", item) if isinstance(item, dict) else None
        if not isinstance(entry, dict) or "regex" not in entry:
            skipped += 1
            logger.warning("%s: malformed rule entry %r", path, item)
            continue
        name = str(entry.get("name", "unnamed"))
        pattern = str(entry["regex"])
        try:
            re.compile(pattern)
        except re.error as exc:
            skipped += 1
            logger.warning("%s: rule %r rejected, regex does not compile (%s)", path, name, exc)
            continue
        rule_id = _slug(name)
        n = 2
        while rule_id in seen_ids:
            rule_id = f"{_slug(name)}-{n}"
            n += 1
        seen_ids.add(rule_id)
        rules.append(
            PatternRule(
                id=rule_id,
                name=name,
                pattern=pattern,
                confidence=str(entry.get("confidence", CONFIDENCE_HIGH)),
                category_hint=str(
                    entry.get("category", "Secrets and API tokens (pattern match)")
                ),
                severity_hint=str(entry.get("severity", "Medium")),
            )
        )
    logger.info("%s: loaded %d rules (%d rejected)", path, len(rules), skipped)
    return rules


def builtin_rules_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "secret_rules.yaml"


def load_builtin_rules() -> list[PatternRule]:
    """The rule set shipped with the package."""
    return load_rules(builtin_rules_path())
