"""LaTeX comment extraction with correct lexical semantics.

A ``%`` starts a line comment only when it is not escaped, i.e. not preceded
by an odd run of backslashes (``\\%`` is a literal percent; ``\\\\%`` is the
control symbol ``\\\\`` followed by a real comment).  Text inside
verbatim-like environments and ``\\verb`` delimiters is never a comment, and
``\\begin{comment}...\\end{comment}`` blocks are emitted as a single
environment-kind comment.

Catcode reassignment is deliberately not honored: this is a lexical pass over
default catcodes, which is what makes corpus-scale extraction tractable.
"""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .cleaning import normalize

logger = logging.getLogger(__name__)

KIND_LINE = "line"
KIND_ENVIRONMENT = "environment"

#: Environments whose body is typeset literally; ``%`` inside them is text.
VERBATIM_ENVIRONMENTS = ("verbatim", "Verbatim", "lstlisting", "minted")

COMMENT_ENVIRONMENT = "comment"

_ENV_OPEN = re.compile(r"\s*\{\s*([A-Za-z]+\*?)\s*\}")


@dataclass(frozen=True)
class CommentRecord:
    """One extracted comment with file/line provenance.

    ``line`` (1-based) and ``col`` (0-based) point at the ``%`` marker, or at
    the backslash of ``\\begin{comment}`` for environment comments.  ``raw``
    is the text after the marker (line kind, never contains a newline) or the
    block interior (environment kind).
    """

    paper_id: str
    file: str
    line: int
    col: int
    raw: str
    kind: str

    def as_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "file": self.file,
            "line": self.line,
            "col": self.col,
            "raw": self.raw,
            "kind": self.kind,
        }


@dataclass
class ExtractionResult:
    """Comments plus the non-comment remainder of one source file.

    ``spans`` holds ``(start_offset, removed_text)`` pairs in source order;
    re-inserting each removed text at its offset reproduces the input
    byte-for-byte (see :func:`reconstruct`).
    """

    records: list[CommentRecord]
    stripped: str
    spans: list[tuple[int, str]]
    warnings: list[str] = field(default_factory=list)


def _line_starts(source: str) -> list[int]:
    starts = [0]
    for m in re.finditer("\n", source):
        starts.append(m.end())
    return starts


def _position(starts: Sequence[int], offset: int) -> tuple[int, int]:
    """Map a character offset to (1-based line, 0-based column)."""
    idx = bisect.bisect_right(starts, offset) - 1
    return idx + 1, offset - starts[idx]


def _is_verbatim_env(name: str, verbatim_envs: Sequence[str]) -> bool:
    return name in verbatim_envs or (name.endswith("*") and name[:-1] in verbatim_envs)


def _find_env_close(source: str, start: int, env: str) -> tuple[int, int] | None:
    """Locate the literal ``\\end{env}`` at or after *start*.

    Returns (content_end, close_end) offsets, or None when unterminated.
    Verbatim-like environments do not nest; the first closer wins, matching
    engine behavior.
    """
    pattern = re.compile(r"\\end\s*\{\s*" + re.escape(env) + r"\s*\}")
    m = pattern.search(source, start)
    if m is None:
        return None
    return m.start(), m.end()


def _skip_verb(source: str, pos: int) -> int:
    """Skip the argument of ``\\verb``/``\\verb*`` starting at *pos*.

    *pos* is the offset just past the control word.  The next character is
    the delimiter; everything up to its repetition is literal.  A missing
    closer ends at end-of-line (``\\verb`` cannot span lines).
    """
    n = len(source)
    if pos < n and source[pos] == "*":
        pos += 1
    if pos >= n or source[pos] == "\n":
        return pos
    delim = source[pos]
    eol = source.find("\n", pos + 1)
    if eol == -1:
        eol = n
    close = source.find(delim, pos + 1)
    if close == -1 or close > eol:
        return eol
    return close + 1


def extract(
    source: str,
    file: str,
    paper_id: str = "",
    verbatim_envs: Sequence[str] = VERBATIM_ENVIRONMENTS,
) -> ExtractionResult:
    """Single-pass lexer over *source*; total on any input."""
    n = len(source)
    starts = _line_starts(source)
    records: list[CommentRecord] = []
    spans: list[tuple[int, str]] = []
    pieces: list[str] = []
    warnings: list[str] = []
    i = 0
    kept = 0  # offset up to which non-comment text has been flushed

    def emit(start: int, end: int, raw: str, kind: str) -> None:
        nonlocal kept
        pieces.append(source[kept:start])
        kept = end
        line, col = _position(starts, start)
        records.append(
            CommentRecord(
                paper_id=paper_id, file=file, line=line, col=col, raw=raw, kind=kind
            )
        )
        spans.append((start, source[start:end]))

    while i < n:
        ch = source[i]
        if ch == "\\":
            j = i
            while j < n and source[j] == "\\":
                j += 1
            run = j - i
            if run % 2 == 0:
                # Pairs of backslashes are \\ control symbols; scanning
                # resumes fresh after them.
                i = j
                continue
            # The pairs are ordinary content; the control sequence proper
            # begins at the run's last backslash.
            marker = j - 1
            if j >= n:
                break
            nxt = source[j]
            if not nxt.isalpha():
                # Control symbol: \%, \{, \$, ... consumes one character.
                i = j + 1
                continue
            k = j
            while k < n and source[k].isalpha():
                k += 1
            word = source[j:k]
            if word == "verb":
                i = _skip_verb(source, k)
                continue
            if word == "begin":
                m = _ENV_OPEN.match(source, k)
                if m is None:
                    i = k
                    continue
                env = m.group(1)
                if env == COMMENT_ENVIRONMENT:
                    close = _find_env_close(source, m.end(), env)
                    if close is None:
                        warnings.append(
                            f"{file}: unterminated comment environment at "
                            f"line {_position(starts, marker)[0]}, closing at EOF"
                        )
                        emit(marker, n, source[m.end() : n], KIND_ENVIRONMENT)
                        i = n
                        continue
                    content_end, close_end = close
                    emit(marker, close_end, source[m.end() : content_end], KIND_ENVIRONMENT)
                    i = close_end
                    continue
                if _is_verbatim_env(env, verbatim_envs):
                    close = _find_env_close(source, m.end(), env)
                    if close is None:
                        warnings.append(
                            f"{file}: unterminated {env} environment at "
                            f"line {_position(starts, marker)[0]}, closing at EOF"
                        )
                        i = n
                        continue
                    i = close[1]
                    continue
                i = m.end()
                continue
            i = k
            continue
        if ch == "%":
            eol = source.find("\n", i)
            if eol == -1:
                eol = n
            emit(i, eol, source[i + 1 : eol], KIND_LINE)
            i = eol
            continue
        i += 1

    pieces.append(source[kept:])
    for w in warnings:
        logger.warning(w)
    return ExtractionResult(
        records=records, stripped="".join(pieces), spans=spans, warnings=warnings
    )


def extract_comments(
    source: str,
    file: str,
    paper_id: str = "",
    verbatim_envs: Sequence[str] = VERBATIM_ENVIRONMENTS,
) -> list[CommentRecord]:
    """Extract all comments from one decoded source file."""
    return extract(source, file, paper_id, verbatim_envs).records


def strip_comments(
    source: str,
    file: str = "",
    verbatim_envs: Sequence[str] = VERBATIM_ENVIRONMENTS,
) -> str:
    """Return *source* with all comment text removed (newlines kept)."""
    return extract(source, file, verbatim_envs=verbatim_envs).stripped


def reconstruct(stripped: str, spans: Iterable[tuple[int, str]]) -> str:
    """Re-insert removed spans at their original offsets.

    Inverse of :func:`extract`: ``reconstruct(r.stripped, r.spans)`` equals
    the original source byte-for-byte.
    """
    out: list[str] = []
    pos = 0  # position in stripped
    removed = 0  # total removed characters re-inserted so far
    for start, text in spans:
        cut = start - removed
        out.append(stripped[pos:cut])
        out.append(text)
        pos = cut
        removed += len(text)
    out.append(stripped[pos:])
    return "".join(out)


# ---------------------------------------------------------------------------
# Usability assessment
# ---------------------------------------------------------------------------

STATUS_HAS_COMMENTS = "has-comments"
STATUS_LATEX_NO_COMMENTS = "latex-no-comments"
STATUS_NO_LATEX = "no-latex"
STATUS_NO_SOURCE = "no-source"

USABILITY_STATUSES = (
    STATUS_HAS_COMMENTS,
    STATUS_LATEX_NO_COMMENTS,
    STATUS_NO_LATEX,
    STATUS_NO_SOURCE,
)


@dataclass(frozen=True)
class CommentUsability:
    paper_id: str
    status: str


def assess_usability(record, comments: Sequence[CommentRecord]) -> CommentUsability:
    """Classify one submission by whether it yields usable comments.

    A comment counts as usable when its normalized text is non-empty, so a
    submission whose only comments are bare ``%`` markers lands in the
    deliberately-sanitized class.
    """
    from .ingest import KIND_LATEX_SOURCE, KIND_NO_SOURCE, KIND_PDF_ONLY

    if record.kind == KIND_NO_SOURCE:
        status = STATUS_NO_SOURCE
    elif record.kind == KIND_PDF_ONLY:
        status = STATUS_NO_LATEX
    elif record.kind == KIND_LATEX_SOURCE and any(normalize(c.raw) for c in comments):
        status = STATUS_HAS_COMMENTS
    else:
        status = STATUS_LATEX_NO_COMMENTS
    return CommentUsability(paper_id=record.paper_id, status=status)


def usability_ratios(assessments: Sequence[CommentUsability]) -> dict[str, float]:
    """Corpus-level ratio of each usability status."""
    total = len(assessments)
    counts = {status: 0 for status in USABILITY_STATUSES}
    for a in assessments:
        counts[a.status] += 1
    return {s: (c / total if total else 0.0) for s, c in counts.items()}
