"""File-inclusion graph over LaTeX sources and unreferenced-file discovery.

References are parsed lexically from comment-stripped text rather than by
running a TeX engine; at corpus scale a lexical pass is the only tractable
option, and the recognized directive set covers what real submissions use.
Files never reached from a document root are leak candidates, minus classes
(figure sources, bibliographies, style artifacts) that are unlikely to
expose anything.
"""

from __future__ import annotations

import json
import logging
import posixpath
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .comments import strip_comments
from .ingest import SubmissionRecord, classify_file, read_text_lossy

logger = logging.getLogger(__name__)

#: Extension inference for bare reference names, tried in this order.
EXTENSION_ORDER = ("", ".tex", ".pdf", ".png", ".jpg", ".jpeg", ".eps")

#: Unreferenced files in these extensions are dropped from the candidate set.
DEFAULT_CANDIDATE_EXCLUDE = frozenset(
    {".eps", ".bib", ".bbl", ".pygtex", ".sty", ".cls", ".bst"}
)

_DOCUMENTCLASS = re.compile(r"\\documentclass\b")

# Single-argument file commands: \cmd[opts]{name}
_SINGLE_ARG = re.compile(
    r"\\(input|include|includegraphics|includepdf|lstinputlisting|"
    r"verbatiminput|addbibresource)\s*(?:\[[^\]]*\]\s*)?\{([^{}]*)\}"
)
# Plain-TeX form: \input name (no braces)
_BARE_INPUT = re.compile(r"\\input\s+([^\s{}\\%\[\]]+)")
# Comma-separated lists: \bibliography{a,b}, \usepackage{x,y}, \documentclass{z}
_LIST_ARG = re.compile(
    r"\\(bibliography|usepackage|documentclass)\s*(?:\[[^\]]*\]\s*)?\{([^{}]*)\}"
)
# Two-argument import forms: \import{dir}{file}, \subimport{dir}{file}
_IMPORT = re.compile(r"\\(import|subimport)\*?\s*\{([^{}]*)\}\s*\{([^{}]*)\}")
_GRAPHICSPATH = re.compile(r"\\graphicspath\s*\{((?:\s*\{[^{}]*\}\s*)+)\}")
_GRAPHICSPATH_DIR = re.compile(r"\{([^{}]*)\}")


@dataclass(frozen=True)
class ReferenceEdge:
    """A resolved inclusion: *source* file pulls in *target*."""

    source: str
    target: str
    directive: str

    def as_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "directive": self.directive}


@dataclass(frozen=True)
class UnresolvedReference:
    source: str
    name: str
    directive: str


@dataclass
class ReachabilityReport:
    roots: list[str]
    reachable: set[str]
    unreferenced: set[str]
    candidates: set[str]

    def as_dict(self, file_classes: Mapping[str, str] | None = None) -> dict:
        return {
            "roots": self.roots,
            "reachable_count": len(self.reachable),
            "unreferenced_count": len(self.unreferenced),
            "candidates": [
                {"path": p, "file_class": classify_file(p, file_classes)}
                for p in sorted(self.candidates)
            ],
        }


def parse_graphicspath(source: str) -> list[str]:
    """Directories declared via ``\\graphicspath{{a/}{b/}}`` in *source*."""
    dirs: list[str] = []
    for m in _GRAPHICSPATH.finditer(source):
        for d in _GRAPHICSPATH_DIR.findall(m.group(1)):
            d = d.strip()
            if d:
                dirs.append(d.rstrip("/"))
    return dirs


def _normalize(path: str) -> str:
    parts: list[str] = []
    for piece in path.replace("\\", "/").split("/"):
        if piece in ("", "."):
            continue
        if piece == "..":
            if parts:
                parts.pop()
            continue
        parts.append(piece)
    return "/".join(parts)


def _resolve(
    name: str,
    inventory: frozenset[str],
    base_dirs: Sequence[str],
    extensions: Sequence[str] = EXTENSION_ORDER,
) -> str | None:
    """Try *name* against the inventory under each base dir and extension."""
    name = name.strip()
    if not name:
        return None
    for ext in extensions:
        for base in base_dirs:
            candidate = _normalize(f"{base}/{name}{ext}" if base else name + ext)
            if candidate in inventory:
                return candidate
    return None


def parse_references(
    source: str,
    file: str,
    inventory: Iterable[str],
    graphics_dirs: Sequence[str] = (),
) -> tuple[list[ReferenceEdge], list[UnresolvedReference]]:
    """Extract inclusion edges from one comment-stripped source file.

    Resolution is against the submission inventory, first relative to the
    submission root (how engines resolve, compilation happens at the root)
    and then relative to the including file's directory, which Overleaf
    projects sometimes rely on.  Targets that resolve nowhere are returned
    separately, never dropped.
    """
    inv = frozenset(inventory)
    file_dir = _normalize(file).rsplit("/", 1)[0] if "/" in _normalize(file) else ""
    base_dirs = [""] + ([file_dir] if file_dir else [])

    edges: list[ReferenceEdge] = []
    unresolved: list[UnresolvedReference] = []

    def attempt(directive: str, name: str, extensions: Sequence[str], bases: Sequence[str]) -> None:
        name = name.strip()
        if not name:
            return
        target = _resolve(name, inv, bases, extensions)
        if target is not None:
            edges.append(ReferenceEdge(source=file, target=target, directive=directive))
        else:
            unresolved.append(UnresolvedReference(source=file, name=name, directive=directive))

    for m in _SINGLE_ARG.finditer(source):
        directive, name = m.group(1), m.group(2)
        bases = list(base_dirs)
        if directive == "includegraphics":
            bases += [d for d in graphics_dirs if d]
        attempt(directive, name, EXTENSION_ORDER, bases)

    for m in _BARE_INPUT.finditer(source):
        attempt("input", m.group(1), EXTENSION_ORDER, base_dirs)

    for m in _LIST_ARG.finditer(source):
        directive = m.group(1)
        ext = {"bibliography": ".bib", "usepackage": ".sty", "documentclass": ".cls"}[directive]
        for name in m.group(2).split(","):
            name = name.strip()
            if not name:
                continue
            exts = ("",) if name.endswith(ext) else ("", ext)
            target = _resolve(name, inv, base_dirs, exts)
            if target is not None:
                edges.append(ReferenceEdge(source=file, target=target, directive=directive))
            elif directive == "bibliography":
                unresolved.append(
                    UnresolvedReference(source=file, name=name, directive=directive)
                )
            # A package or class with no local .sty/.cls is simply installed
            # system-wide; that is not an unresolved local reference.

    for m in _IMPORT.finditer(source):
        directive, imp_dir, name = m.group(1), m.group(2).strip(), m.group(3)
        if directive == "subimport" and file_dir:
            base = _normalize(f"{file_dir}/{imp_dir}")
        else:
            base = _normalize(imp_dir)
        attempt(directive, name, EXTENSION_ORDER, [base] if base else [""])

    return edges, unresolved


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------


def find_roots(sources: Mapping[str, str], record: SubmissionRecord) -> list[str]:
    """Document roots: tex files containing ``\\documentclass``.

    Falls back to the largest tex file when no file declares a class, which
    happens with plain-TeX era submissions.
    """
    roots = sorted(f for f, text in sources.items() if _DOCUMENTCLASS.search(text))
    if roots:
        return roots
    tex_files = record.by_class("tex")
    if not tex_files:
        return []
    largest = max(tex_files, key=lambda f: (f.byte_size, f.path))
    logger.info(
        "%s: no \\documentclass found, using largest tex file %s as root",
        record.paper_id,
        largest.path,
    )
    return [largest.path]


def compute_unreferenced(
    record: SubmissionRecord,
    edges: Sequence[ReferenceEdge],
    roots: Sequence[str],
    exclude_extensions: frozenset[str] = DEFAULT_CANDIDATE_EXCLUDE,
) -> ReachabilityReport:
    """Transitive closure from the roots; the rest is unreferenced.

    Cycles are tolerated (plain worklist closure).  Candidates are the
    unreferenced files minus excluded extensions.
    """
    inventory = record.paths()
    adjacency: dict[str, list[str]] = {}
    for e in edges:
        adjacency.setdefault(e.source, []).append(e.target)

    reachable: set[str] = set()
    stack = [r for r in roots if r in inventory]
    while stack:
        node = stack.pop()
        if node in reachable:
            continue
        reachable.add(node)
        stack.extend(t for t in adjacency.get(node, ()) if t not in reachable)

    unreferenced = inventory - reachable
    candidates = {
        p for p in unreferenced if posixpath.splitext(p)[1].lower() not in exclude_extensions
    }
    return ReachabilityReport(
        roots=sorted(roots),
        reachable=reachable,
        unreferenced=unreferenced,
        candidates=candidates,
    )


def analyze_submission(
    record: SubmissionRecord,
    exclude_extensions: frozenset[str] = DEFAULT_CANDIDATE_EXCLUDE,
) -> ReachabilityReport:
    """Read, comment-strip, and graph one submission from disk."""
    sources: dict[str, str] = {}
    for entry in record.by_class("tex"):
        text = read_text_lossy(record.root_dir / entry.path)
        sources[entry.path] = strip_comments(text, entry.path)

    graphics_dirs: list[str] = []
    for text in sources.values():
        graphics_dirs.extend(parse_graphicspath(text))

    inventory = record.paths()
    edges: list[ReferenceEdge] = []
    for path, text in sources.items():
        found, unresolved = parse_references(text, path, inventory, graphics_dirs)
        edges.extend(found)
        for ref in unresolved:
            logger.debug(
                "%s: unresolved %s target %r in %s",
                record.paper_id,
                ref.directive,
                ref.name,
                ref.source,
            )

    roots = find_roots(sources, record)
    return compute_unreferenced(record, edges, roots, exclude_extensions)


def write_report(report: ReachabilityReport, path: Path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
