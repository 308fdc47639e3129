"""Full pipeline orchestration: ingest through report in dependency order.

Stage selection gates which detection families run; comment extraction and
cleaning happen in memory whenever a downstream stage needs them.  The run
emits only redacted artifacts (findings.jsonl, summary.json, summary.md,
stats.json): raw comment dumps and raw match streams are available through
their dedicated subcommands, never from a pipeline run, so no secret byte
sequence survives into run output.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import comments as comments_mod
from . import exifprobe, refgraph
from .classify import (
    BackendError,
    BaselineBackend,
    DetectorBackend,
    RemoteBackend,
    resolve_api_key,
)
from .cleaning import clean_corpus
from .config import RunConfig
from .ingest import (
    KIND_LATEX_SOURCE,
    SubmissionRecord,
    classify_file,
    extract_submission,
    inventory_submission,
    read_text_lossy,
)
from .patterns import Locus, RuleSet, SuppressionList, UrlHeuristics, load_builtin_rules, load_rules, scan_text
from .report import (
    Finding,
    SeverityMap,
    aggregate,
    finding_from_candidate_file,
    finding_from_match,
    findings_from_labels,
    render_summary_md,
    sort_findings,
    write_findings_jsonl,
    write_summary_json,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2

_SCANNABLE_CANDIDATE_CLASSES = {"data", "code", "log", "other", "tex", "bib", "style"}
_MAX_CANDIDATE_BYTES = 2_000_000


@dataclass
class _PaperState:
    record: SubmissionRecord
    comments: list = field(default_factory=list)
    kept_comments: list = field(default_factory=list)  # surviving the cleaner
    kept_normalized: list[str] = field(default_factory=list)
    candidates: set[str] = field(default_factory=set)


class PipelineError(RuntimeError):
    pass


def _discover_submissions(config: RunConfig) -> list[SubmissionRecord]:
    corpus = config.corpus_dir
    if not corpus.is_dir():
        raise PipelineError(f"corpus dir {corpus} is not readable")
    records: list[SubmissionRecord] = []
    archives = sorted(
        p for p in corpus.iterdir() if p.is_file() and p.name.endswith((".gz", ".tgz"))
    )
    directories = sorted(p for p in corpus.iterdir() if p.is_dir())

    if archives and "ingest" in config.stages:
        dest = config.output_dir / "submissions"
        dest.mkdir(parents=True, exist_ok=True)

        def extract(path: Path) -> SubmissionRecord:
            paper_id = path.name
            for suffix in (".gz", ".tgz"):
                paper_id = paper_id.removesuffix(suffix)
            paper_id = paper_id.removesuffix(".tar")
            return extract_submission(path.read_bytes(), paper_id, dest)

        if config.parallelism > 1 and len(archives) > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                records.extend(pool.map(extract, archives))
        else:
            records.extend(extract(p) for p in archives)

    for directory in directories:
        records.append(inventory_submission(directory, directory.name))
    if not records:
        raise PipelineError(f"no submissions found under {corpus}")
    return sorted(records, key=lambda r: r.paper_id)


def _make_backend(config: RunConfig) -> DetectorBackend:
    if config.backend == "baseline":
        return BaselineBackend()
    if config.backend == "remote":
        return RemoteBackend(config.remote)
    raise PipelineError(f"unknown backend {config.backend!r}")


def _extract_paper_comments(state: _PaperState) -> None:
    record = state.record
    if record.kind != KIND_LATEX_SOURCE:
        return
    for entry in record.by_class("tex"):
        text = read_text_lossy(record.root_dir / entry.path)
        state.comments.extend(
            comments_mod.extract_comments(text, entry.path, paper_id=record.paper_id)
        )


def run(config: RunConfig) -> int:
    """Execute the configured stages; see module docstring for outputs."""
    try:
        return _run(config)
    except (PipelineError, BackendError, OSError) as exc:
        logger.error("pipeline failed: %s", exc)
        return EXIT_ERROR


def _run(config: RunConfig) -> int:
    stages = config.stages
    config.output_dir.mkdir(parents=True, exist_ok=True)

    # Fail before any work (and before any network call) on a classify run
    # with no credential for a remote backend.
    if "classify" in stages and config.backend == "remote" and resolve_api_key() is None:
        logger.error("classify stage enabled but no detector credential in environment")
        return EXIT_ERROR

    rules = RuleSet.compile(
        load_rules(config.rules_file) if config.rules_file else load_builtin_rules()
    )
    suppression = (
        SuppressionList.from_file(config.suppression_file)
        if config.suppression_file
        else SuppressionList.default()
    )
    severity_map = (
        SeverityMap.from_file(config.severity_map_file)
        if config.severity_map_file
        else SeverityMap.default()
    )
    url_heuristics = UrlHeuristics(
        min_token_len=config.token_min_len, min_token_entropy=config.token_min_entropy
    )

    records = _discover_submissions(config)
    states = [_PaperState(record=r) for r in records]
    needs_comments = bool(stages & {"comments", "clean", "patterns", "classify", "report"})

    def prepare(state: _PaperState) -> None:
        if needs_comments:
            _extract_paper_comments(state)
        if "graph" in stages:
            graph_report = refgraph.analyze_submission(state.record)
            state.candidates = graph_report.candidates
            graph_dir = config.output_dir / "graph"
            graph_dir.mkdir(exist_ok=True)
            refgraph.write_report(
                graph_report, graph_dir / f"{state.record.root_dir.name}.json"
            )

    if config.parallelism > 1 and len(states) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            list(pool.map(prepare, states))
    else:
        for state in states:
            prepare(state)

    # Corpus-wide cleaning: frequency counting needs the full comment stream.
    usability = [
        comments_mod.assess_usability(state.record, state.comments) for state in states
    ]
    if "clean" in stages:
        all_comments = [(state, c) for state in states for c in state.comments]
        result = clean_corpus([c.raw for _, c in all_comments], config.clean)
        for index, normalized in result.kept:
            state, comment = all_comments[index]
            state.kept_comments.append(comment)
            state.kept_normalized.append(normalized)
        stats_payload = result.stats.as_dict()
    else:
        for state in states:
            state.kept_comments = list(state.comments)
            state.kept_normalized = [c.raw for c in state.comments]
        stats_payload = None

    findings: list[Finding] = []

    if "patterns" in stages:
        for state in states:
            findings.extend(_scan_paper(state, rules, suppression, url_heuristics, severity_map))

    if "graph" in stages:
        for state in states:
            for path in sorted(state.candidates):
                finding = finding_from_candidate_file(
                    state.record.paper_id, path, severity_map
                )
                if finding is not None:
                    findings.append(finding)

    if "exif" in stages:
        for state in states:
            findings.extend(_probe_paper_images(state, severity_map, config))

    if "classify" in stages:
        findings.extend(_classify_papers(states, config, severity_map))

    findings = sort_findings(findings)
    findings_path = config.output_dir / "findings.jsonl"
    write_findings_jsonl(findings, findings_path)

    stats = aggregate(findings)
    if stats_payload is not None:
        (config.output_dir / "stats.json").write_text(
            json.dumps(
                {
                    "clean": stats_payload,
                    "usability": comments_mod.usability_ratios(usability),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    if "report" in stages:
        write_summary_json(stats, config.output_dir / "summary.json")
        (config.output_dir / "summary.md").write_text(
            render_summary_md(findings, stats), encoding="utf-8"
        )

    logger.info(
        "%d findings across %d papers (%d submissions scanned)",
        stats.total,
        stats.flagged_papers,
        len(states),
    )
    if config.fail_on == "critical" and stats.by_severity.get("Critical", 0) > 0:
        return EXIT_FINDINGS
    return EXIT_OK


def _scan_paper(
    state: _PaperState,
    rules: RuleSet,
    suppression: SuppressionList,
    url_heuristics: UrlHeuristics,
    severity_map: SeverityMap,
) -> list[Finding]:
    findings: list[Finding] = []
    record = state.record

    for comment in state.kept_comments:
        matches = scan_text(
            comment.raw,
            rules,
            paper_id=record.paper_id,
            file=comment.file,
            suppression=suppression,
            url_heuristics=url_heuristics,
            line_offset=comment.line - 1,
        )
        for match in matches:
            finding = finding_from_match(match, severity_map)
            if finding is not None:
                findings.append(finding)

    for path in sorted(state.candidates):
        full = record.root_dir / path
        if (
            classify_file(path) not in _SCANNABLE_CANDIDATE_CLASSES
            or not full.is_file()
            or full.stat().st_size > _MAX_CANDIDATE_BYTES
        ):
            continue
        text = read_text_lossy(full)
        matches = scan_text(
            text,
            rules,
            paper_id=record.paper_id,
            file=path,
            suppression=suppression,
            url_heuristics=url_heuristics,
        )
        for match in matches:
            finding = finding_from_match(match, severity_map)
            if finding is not None:
                findings.append(finding)
    return findings


def _probe_paper_images(
    state: _PaperState, severity_map: SeverityMap, config: RunConfig
) -> list[Finding]:
    findings: list[Finding] = []
    record = state.record
    for entry in record.by_class("graphic"):
        full = record.root_dir / entry.path
        if not full.is_file():
            continue
        meta = exifprobe.read_exif_file(full)
        meta.path = entry.path  # report submission-relative paths
        findings.extend(exifprobe.flag_image(meta, severity_map, paper_id=record.paper_id))
        if not config.keep_images:
            full.unlink()
    return findings


def _classify_papers(
    states: list[_PaperState], config: RunConfig, severity_map: SeverityMap
) -> list[Finding]:
    backend = _make_backend(config)
    blocks: list[tuple[_PaperState, str]] = []
    for state in states:
        if state.kept_normalized:
            blocks.append((state, "\n".join(state.kept_normalized)))
    if not blocks:
        return []
    try:
        predictions = backend.classify([text for _, text in blocks])
    except BackendError as exc:
        logger.error("detector backend failed: %s", exc)
        raise
    findings: list[Finding] = []
    for (state, text), labels in zip(blocks, predictions):
        first = state.kept_comments[0]
        locus = Locus(state.record.paper_id, first.file, first.line)
        findings.extend(
            findings_from_labels(
                state.record.paper_id,
                labels,
                locus,
                backend.name,
                severity_map,
                excerpt=text[:160],
            )
        )
    return findings
