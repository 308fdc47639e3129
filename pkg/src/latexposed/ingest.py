"""Corpus ingestion: download planning and submission unpacking.

Bulk-archive manifests (XML or JSON) map paper ids to the tar archives that
contain them; the planner picks the minimal archive set covering a wanted id
list.  Individual submission payloads are gzip streams whose payload is
either a tar container or a single bare TeX file, both of which occur in the
wild; a few per-cent are PDF-only.
"""

from __future__ import annotations

import gzip
import io
import json
import logging
import posixpath
import shutil
import tarfile
import xml.etree.ElementTree as ET
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

KIND_LATEX_SOURCE = "latex-source"
KIND_PDF_ONLY = "pdf-only"
KIND_NO_SOURCE = "no-source"

CLASS_TEX = "tex"
CLASS_GRAPHIC = "graphic"
CLASS_BIB = "bib"
CLASS_STYLE = "style"
CLASS_DATA = "data"
CLASS_CODE = "code"
CLASS_LOG = "log"
CLASS_PDF = "pdf"
CLASS_OTHER = "other"

#: Extension -> file class.  Loaded as the default; a config may override or
#: extend it, and downstream filtering relies on these classes staying stable.
DEFAULT_FILE_CLASSES: dict[str, str] = {
    ".tex": CLASS_TEX,
    ".ltx": CLASS_TEX,
    ".latex": CLASS_TEX,
    ".eps": CLASS_GRAPHIC,
    ".ps": CLASS_GRAPHIC,
    ".png": CLASS_GRAPHIC,
    ".jpg": CLASS_GRAPHIC,
    ".jpeg": CLASS_GRAPHIC,
    ".gif": CLASS_GRAPHIC,
    ".tif": CLASS_GRAPHIC,
    ".tiff": CLASS_GRAPHIC,
    ".bmp": CLASS_GRAPHIC,
    ".svg": CLASS_GRAPHIC,
    ".pgf": CLASS_GRAPHIC,
    ".bib": CLASS_BIB,
    ".bbl": CLASS_BIB,
    ".sty": CLASS_STYLE,
    ".cls": CLASS_STYLE,
    ".bst": CLASS_STYLE,
    ".clo": CLASS_STYLE,
    ".def": CLASS_STYLE,
    ".pygtex": CLASS_STYLE,
    ".csv": CLASS_DATA,
    ".tsv": CLASS_DATA,
    ".json": CLASS_DATA,
    ".xml": CLASS_DATA,
    ".yaml": CLASS_DATA,
    ".yml": CLASS_DATA,
    ".dat": CLASS_DATA,
    ".txt": CLASS_DATA,
    ".md": CLASS_DATA,
    ".list": CLASS_DATA,
    ".html": CLASS_DATA,
    ".htm": CLASS_DATA,
    ".py": CLASS_CODE,
    ".js": CLASS_CODE,
    ".c": CLASS_CODE,
    ".cpp": CLASS_CODE,
    ".h": CLASS_CODE,
    ".java": CLASS_CODE,
    ".r": CLASS_CODE,
    ".m": CLASS_CODE,
    ".sh": CLASS_CODE,
    ".ipynb": CLASS_CODE,
    ".go": CLASS_CODE,
    ".rs": CLASS_CODE,
    ".log": CLASS_LOG,
    ".blg": CLASS_LOG,
    ".bak": CLASS_LOG,
    ".bkp": CLASS_LOG,
    ".old": CLASS_LOG,
    ".db": CLASS_LOG,
    ".sqlite": CLASS_LOG,
    ".pdf": CLASS_PDF,
}


def classify_file(path: str, table: Mapping[str, str] | None = None) -> str:
    table = table if table is not None else DEFAULT_FILE_CLASSES
    suffix = posixpath.splitext(path)[1].lower()
    return table.get(suffix, CLASS_OTHER)


@dataclass(frozen=True)
class FileEntry:
    path: str  # relative, normalized, no parent traversal
    byte_size: int
    file_class: str

    def as_dict(self) -> dict:
        return {
            "path": self.path,
            "byte_size": self.byte_size,
            "file_class": self.file_class,
        }


@dataclass
class SubmissionRecord:
    """One unpacked preprint source package."""

    paper_id: str
    kind: str
    root_dir: Path
    files: list[FileEntry] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def paths(self) -> set[str]:
        return {f.path for f in self.files}

    def by_class(self, file_class: str) -> list[FileEntry]:
        return [f for f in self.files if f.file_class == file_class]

    def as_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "kind": self.kind,
            "root_dir": str(self.root_dir),
            "files": [f.as_dict() for f in self.files],
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Manifest parsing
# ---------------------------------------------------------------------------


class ManifestError(ValueError):
    """Malformed manifest, with line context where the parser provides it."""


@dataclass
class ArchiveManifest:
    """Archive id -> member paper ids; each paper lives in exactly one archive."""

    entries: list[tuple[str, list[str]]]

    def __post_init__(self) -> None:
        seen_archives: set[str] = set()
        seen_papers: dict[str, str] = {}
        for archive_id, papers in self.entries:
            if archive_id in seen_archives:
                raise ManifestError(f"duplicate archive id {archive_id!r}")
            seen_archives.add(archive_id)
            for pid in papers:
                if pid in seen_papers:
                    raise ManifestError(
                        f"paper {pid!r} listed in both "
                        f"{seen_papers[pid]!r} and {archive_id!r}"
                    )
                seen_papers[pid] = archive_id
        self._paper_to_archive = seen_papers

    @property
    def paper_ids(self) -> set[str]:
        return set(self._paper_to_archive)

    def archive_for(self, paper_id: str) -> str | None:
        return self._paper_to_archive.get(paper_id)


def parse_manifest_xml(text: str) -> ArchiveManifest:
    """Parse the bulk-index XML shape::

        <archive-index>
          <archive id="arXiv_src_0001">
            <paper>2301.00001</paper>
            ...
          </archive>
        </archive-index>
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ManifestError(f"XML parse error at line {line}, column {col}: {exc}") from exc
    entries: list[tuple[str, list[str]]] = []
    for node in root.iter("archive"):
        archive_id = node.get("id")
        if not archive_id:
            raise ManifestError("archive element without id attribute")
        papers = [p.text.strip() for p in node.iter("paper") if p.text and p.text.strip()]
        entries.append((archive_id, papers))
    return ArchiveManifest(entries)


def parse_manifest_json(text: str) -> ArchiveManifest:
    """Parse the JSON equivalent: {"archives": [{"id": ..., "papers": [...]}]}."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(
            f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict) or "archives" not in data:
        raise ManifestError('manifest JSON must be an object with an "archives" list')
    entries = []
    for item in data["archives"]:
        try:
            entries.append((str(item["id"]), [str(p) for p in item["papers"]]))
        except (TypeError, KeyError) as exc:
            raise ManifestError(f"malformed archive entry {item!r}") from exc
    return ArchiveManifest(entries)


def load_manifest(path: Path | str) -> ArchiveManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return parse_manifest_json(text)
    return parse_manifest_xml(text)


# ---------------------------------------------------------------------------
# Download planning
# ---------------------------------------------------------------------------


@dataclass
class DownloadPlan:
    """Minimal archive set covering the known wanted ids."""

    entries: list[tuple[str, list[str]]]  # (archive_id, sorted covered ids)
    unknown: list[str]  # wanted ids absent from the manifest

    @property
    def covered(self) -> set[str]:
        return {pid for _, papers in self.entries for pid in papers}

    def as_dict(self) -> dict:
        return {
            "archives": [{"id": a, "papers": p} for a, p in self.entries],
            "unknown": self.unknown,
        }


def plan_downloads(manifest: ArchiveManifest, wanted: Iterable[str]) -> DownloadPlan:
    """Pick the archives needed to retrieve *wanted* papers.

    Each paper id lives in exactly one archive, so the minimal cover is the
    set of archives containing at least one wanted id.  Unknown ids are
    reported, not fatal.  Output order is deterministic (sorted archive id).
    """
    wanted_set = set(wanted)
    unknown = sorted(pid for pid in wanted_set if manifest.archive_for(pid) is None)
    if unknown:
        logger.warning("%d wanted ids not present in manifest", len(unknown))
    by_archive: dict[str, list[str]] = {}
    for pid in wanted_set - set(unknown):
        by_archive.setdefault(manifest.archive_for(pid), []).append(pid)
    entries = [(a, sorted(papers)) for a, papers in sorted(by_archive.items())]
    return DownloadPlan(entries=entries, unknown=unknown)


# ---------------------------------------------------------------------------
# Submission extraction
# ---------------------------------------------------------------------------

_GZIP_MAGIC = b"\x1f\x8b"
_PDF_MAGIC = b"%PDF"


def _safe_member_path(name: str) -> str | None:
    """Normalize a tar member name; None when it would escape the root."""
    norm = posixpath.normpath(name.replace("\\", "/"))
    if norm in (".", ""):
        return None
    if norm.startswith("/") or norm == ".." or norm.startswith("../"):
        return None
    return norm


def _sanitize_paper_id(paper_id: str) -> str:
    # Old-style arXiv ids contain a slash (math/0211159).
    return paper_id.replace("/", "_") or "submission"


def classify_submission(record: SubmissionRecord) -> str:
    """Kind from the inventory: any tex file wins, then any pdf."""
    classes = {f.file_class for f in record.files}
    if CLASS_TEX in classes:
        return KIND_LATEX_SOURCE
    if CLASS_PDF in classes:
        return KIND_PDF_ONLY
    return KIND_NO_SOURCE


def inventory_submission(
    root_dir: Path,
    paper_id: str,
    file_classes: Mapping[str, str] | None = None,
) -> SubmissionRecord:
    """Build a record from files already on disk under *root_dir*."""
    root_dir = Path(root_dir)
    files = []
    for p in sorted(root_dir.rglob("*")):
        if not p.is_file():
            continue
        rel = p.relative_to(root_dir).as_posix()
        files.append(
            FileEntry(
                path=rel,
                byte_size=p.stat().st_size,
                file_class=classify_file(rel, file_classes),
            )
        )
    record = SubmissionRecord(paper_id=paper_id, kind=KIND_NO_SOURCE, root_dir=root_dir, files=files)
    record.kind = classify_submission(record)
    return record


def extract_submission(
    archive_bytes: bytes,
    paper_id: str,
    dest_root: Path,
    file_classes: Mapping[str, str] | None = None,
) -> SubmissionRecord:
    """Unpack one submission payload into an isolated directory.

    The payload is normally a gzip stream wrapping either a tar container or
    a single bare TeX file; bare PDF payloads are also recognized.  Corrupt
    input yields a no-source record with a diagnostic instead of an error,
    and member names that would escape the destination are rejected.
    Re-extraction wipes the previous directory, so the operation is
    idempotent.
    """
    dest_root = Path(dest_root)
    root_dir = dest_root / _sanitize_paper_id(paper_id)
    if root_dir.exists():
        shutil.rmtree(root_dir)
    root_dir.mkdir(parents=True)
    record = SubmissionRecord(paper_id=paper_id, kind=KIND_NO_SOURCE, root_dir=root_dir)

    payload = archive_bytes
    if archive_bytes[:2] == _GZIP_MAGIC:
        try:
            payload = gzip.decompress(archive_bytes)
        except (OSError, EOFError, zlib.error) as exc:
            record.diagnostics.append(f"corrupt gzip stream: {exc}")
            return record

    extracted = _try_extract_tar(payload, root_dir, record)
    if not extracted and not record.diagnostics:
        _write_single_payload(payload, paper_id, root_dir, record)

    refreshed = inventory_submission(root_dir, paper_id, file_classes)
    record.files = refreshed.files
    record.kind = refreshed.kind
    return record


def _try_extract_tar(payload: bytes, root_dir: Path, record: SubmissionRecord) -> bool:
    """Extract tar members; False when the payload is not a tar container."""
    try:
        tf = tarfile.open(fileobj=io.BytesIO(payload), mode="r:")
    except tarfile.TarError:
        return False
    try:
        with tf:
            for member in tf:
                if not member.isfile():
                    if member.issym() or member.islnk() or member.isdev():
                        record.diagnostics.append(
                            f"skipped non-regular member {member.name!r}"
                        )
                    continue
                safe = _safe_member_path(member.name)
                if safe is None:
                    record.diagnostics.append(
                        f"rejected path-traversal member {member.name!r}"
                    )
                    continue
                target = root_dir / safe
                target.parent.mkdir(parents=True, exist_ok=True)
                src = tf.extractfile(member)
                if src is None:
                    continue
                with open(target, "wb") as dst:
                    shutil.copyfileobj(src, dst)
    except tarfile.TarError as exc:
        record.diagnostics.append(f"corrupt tar container: {exc}")
    return True


def _write_single_payload(
    payload: bytes, paper_id: str, root_dir: Path, record: SubmissionRecord
) -> None:
    """Bare (non-tar) payload: a single TeX file, or a PDF by signature."""
    stem = _sanitize_paper_id(paper_id)
    suffix = ".pdf" if payload[:4] == _PDF_MAGIC else ".tex"
    (root_dir / (stem + suffix)).write_bytes(payload)


def extract_many(
    archives: Sequence[tuple[str, bytes]],
    dest_root: Path,
    file_classes: Mapping[str, str] | None = None,
    parallelism: int = 4,
) -> list[SubmissionRecord]:
    """Extract submissions in parallel; each owns its directory exclusively."""
    def work(item: tuple[str, bytes]) -> SubmissionRecord:
        paper_id, data = item
        return extract_submission(data, paper_id, dest_root, file_classes)

    if parallelism <= 1 or len(archives) <= 1:
        return [work(item) for item in archives]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(work, archives))


def read_text_lossy(path: Path) -> str:
    """Decode a source file as UTF-8 with replacement; never fails.

    Real corpora contain Latin-1 and worse; coverage beats strictness here,
    and the replacement is logged once per file.
    """
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        logger.warning("%s: not valid UTF-8, decoding with replacement", path)
        return data.decode("utf-8", errors="replace")
