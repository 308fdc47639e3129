"""Command-line entry point: one binary, one subcommand per stage."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from . import comments as comments_mod
from . import exifprobe, pipeline, refgraph
from .bench import evaluate, load_dataset, render_leaderboard
from .classify import BaselineBackend, RecordedBackend, RemoteBackend, RemoteModelConfig
from .config import ALL_STAGES, ConfigError, load_config
from .ingest import extract_submission, inventory_submission, load_manifest, plan_downloads
from .patterns import RuleSet, SuppressionList, UrlHeuristics, load_builtin_rules, load_rules, scan_text
from .report import (
    SeverityMap,
    aggregate,
    finding_from_match,
    load_findings_jsonl,
    render_summary_md,
    write_findings_jsonl,
    write_summary_json,
)

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(__version__, message="%(version)s")
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Scan LaTeX preprint source packages for leaked sensitive information."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--want", "want_path", required=True, type=click.Path(exists=True),
              help="File with one wanted paper id per line.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--archives", "archives_dir", type=click.Path(exists=True),
              help="Directory of already-downloaded .gz payloads to unpack.")
@click.option("--parallelism", default=4, show_default=True)
def ingest(manifest_path: str, want_path: str, out_dir: str, archives_dir: str | None,
           parallelism: int) -> None:
    """Emit a download plan; optionally unpack downloaded payloads."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(manifest_path)
    wanted = {
        line.strip() for line in Path(want_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    }
    plan = plan_downloads(manifest, wanted)
    (out / "plan.json").write_text(json.dumps(plan.as_dict(), indent=2) + "\n",
                                   encoding="utf-8")
    click.echo(f"{len(plan.entries)} archives cover {len(plan.covered)} of "
               f"{len(wanted)} wanted ids ({len(plan.unknown)} unknown)")

    if archives_dir:
        from .ingest import extract_many

        payloads = []
        for path in sorted(Path(archives_dir).iterdir()):
            if path.suffix in (".gz", ".tgz"):
                paper_id = path.name.removesuffix(".gz").removesuffix(".tgz").removesuffix(".tar")
                payloads.append((paper_id, path.read_bytes()))
        records = extract_many(payloads, out / "submissions", parallelism=parallelism)
        with open(out / "submissions.jsonl", "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record.as_dict()) + "\n")
        click.echo(f"unpacked {len(records)} submissions")


# ---------------------------------------------------------------------------
# comments
# ---------------------------------------------------------------------------


@main.command("comments")
@click.argument("submission_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), default="-",
              help="Output JSONL path (default stdout).")
def comments_cmd(submission_dir: str, out_path: str) -> None:
    """Dump raw extracted comments as JSONL (contains unredacted text)."""
    from .ingest import read_text_lossy

    record = inventory_submission(Path(submission_dir), Path(submission_dir).name)
    records = []
    for entry in record.by_class("tex"):
        text = read_text_lossy(record.root_dir / entry.path)
        records.extend(comments_mod.extract_comments(text, entry.path, record.paper_id))
    lines = "".join(json.dumps(r.as_dict(), ensure_ascii=False) + "\n" for r in records)
    if out_path == "-":
        click.echo(lines, nl=False)
    else:
        Path(out_path).write_text(lines, encoding="utf-8")
        click.echo(f"{len(records)} comments -> {out_path}")


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------


@main.command()
@click.argument("submission_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), default="-")
def graph(submission_dir: str, out_path: str) -> None:
    """Reference-graph report for one submission directory."""
    record = inventory_submission(Path(submission_dir), Path(submission_dir).name)
    report = refgraph.analyze_submission(record)
    payload = json.dumps(report.as_dict(), indent=2) + "\n"
    if out_path == "-":
        click.echo(payload, nl=False)
    else:
        Path(out_path).write_text(payload, encoding="utf-8")


# ---------------------------------------------------------------------------
# exif
# ---------------------------------------------------------------------------


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), default="-")
@click.option("--strip", is_flag=True, help="Delete images after probing.")
def exif(directory: str, out_path: str, strip: bool) -> None:
    """Probe images under DIRECTORY for metadata; JSONL of per-image records."""
    metas = exifprobe.probe_directory(directory, strip=strip)
    lines = "".join(json.dumps(m.as_dict(), ensure_ascii=False) + "\n" for m in metas)
    if out_path == "-":
        click.echo(lines, nl=False)
    else:
        Path(out_path).write_text(lines, encoding="utf-8")
        click.echo(f"{len(metas)} images probed -> {out_path}")


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------


@main.command()
@click.argument("target", type=click.Path(exists=True))
@click.option("--rules", "rules_path", type=click.Path(exists=True),
              help="Rule database (YAML); default: bundled set.")
@click.option("--suppression", "suppression_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default="-")
@click.option("--raw", is_flag=True,
              help="Dump unredacted raw matches instead of findings (debug).")
def scan(target: str, rules_path: str | None, suppression_path: str | None,
         out_path: str, raw: bool) -> None:
    """Pattern-scan a file or directory; emits redacted findings JSONL."""
    ruleset = RuleSet.compile(load_rules(rules_path) if rules_path else load_builtin_rules())
    suppression = (
        SuppressionList.from_file(suppression_path)
        if suppression_path
        else SuppressionList.default()
    )
    severity_map = SeverityMap.default()
    target_path = Path(target)
    files = [target_path] if target_path.is_file() else sorted(
        p for p in target_path.rglob("*") if p.is_file()
    )

    out_lines: list[str] = []
    for path in files:
        from .ingest import read_text_lossy

        text = read_text_lossy(path)
        matches = scan_text(
            text, ruleset, file=str(path), suppression=suppression,
            url_heuristics=UrlHeuristics(),
        )
        if raw:
            out_lines.extend(json.dumps(m.as_dict(), ensure_ascii=False) + "\n" for m in matches)
        else:
            for match in matches:
                finding = finding_from_match(match, severity_map)
                if finding is not None:
                    out_lines.append(json.dumps(finding.as_dict(), ensure_ascii=False) + "\n")
    payload = "".join(out_lines)
    if out_path == "-":
        click.echo(payload, nl=False)
    else:
        Path(out_path).write_text(payload, encoding="utf-8")
        click.echo(f"{len(out_lines)} lines -> {out_path}")


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="JSONL with a text field per line.")
@click.option("--backend", "backend_name", default="baseline", show_default=True,
              type=click.Choice(["baseline", "remote"]))
@click.option("--model", default=None, help="Remote model id.")
@click.option("--out", "out_path", type=click.Path(), default="-")
def classify(input_path: str, backend_name: str, model: str | None, out_path: str) -> None:
    """Label snippets with the six-category taxonomy."""
    snippets = []
    with open(input_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                item = json.loads(line)
                snippets.append(item.get("text", item.get("raw", "")))
    if backend_name == "remote":
        config = RemoteModelConfig()
        if model:
            config.model = model
        backend = RemoteBackend(config)
    else:
        backend = BaselineBackend()
    labels = backend.classify(snippets)
    lines = "".join(
        json.dumps({"index": i, "labels": sorted(l.value for l in labelset)}) + "\n"
        for i, labelset in enumerate(labels)
    )
    if out_path == "-":
        click.echo(lines, nl=False)
    else:
        Path(out_path).write_text(lines, encoding="utf-8")


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_name", default="baseline", show_default=True)
@click.option("--predictions", "predictions_path", type=click.Path(exists=True),
              help="Recorded predictions JSONL for offline scoring.")
@click.option("--model", default=None, help="Remote model id.")
@click.option("--report", "report_path", type=click.Path(),
              help="Write the full report JSON here.")
def bench(dataset_path: str, backend_name: str, predictions_path: str | None,
          model: str | None, report_path: str | None) -> None:
    """Score a detector backend on a gold dataset; prints the leaderboard row."""
    dataset = load_dataset(dataset_path)
    if predictions_path:
        backend = RecordedBackend.from_jsonl(predictions_path)
    elif backend_name == "remote":
        config = RemoteModelConfig()
        if model:
            config.model = model
        backend = RemoteBackend(config)
    elif backend_name == "baseline":
        backend = BaselineBackend()
    else:
        raise click.UsageError(f"unknown backend {backend_name!r}")
    result = evaluate(backend, dataset)
    click.echo(render_leaderboard([result]))
    if result.failed_snippets:
        click.echo(f"note: {len(result.failed_snippets)} snippets hit backend failures")
    if report_path:
        Path(report_path).write_text(
            json.dumps(result.as_dict(), indent=2) + "\n", encoding="utf-8"
        )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@main.command("report")
@click.argument("findings_path", type=click.Path(exists=True))
@click.option("--out-dir", "out_dir", type=click.Path(), default=".")
def report_cmd(findings_path: str, out_dir: str) -> None:
    """Aggregate a findings.jsonl into summary.json and summary.md."""
    findings = load_findings_jsonl(findings_path)
    stats = aggregate(findings)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_json(stats, out / "summary.json")
    summary_md = render_summary_md(findings, stats)
    (out / "summary.md").write_text(summary_md, encoding="utf-8")
    click.echo(summary_md, nl=False)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@main.command("run")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "output_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--stages", default=None,
              help=f"Comma-separated subset of: {','.join(ALL_STAGES)}.")
@click.option("--backend", "backend_name", default=None,
              type=click.Choice(["baseline", "remote"]))
@click.option("--parallelism", type=int, default=None)
@click.option("--fail-on", "fail_on", type=click.Choice(["critical"]), default=None)
@click.option("--strip-images", is_flag=True, default=False,
              help="Delete images after the EXIF probe.")
def run_cmd(corpus_dir: str, output_dir: str, config_path: str | None, stages: str | None,
            backend_name: str | None, parallelism: int | None, fail_on: str | None,
            strip_images: bool) -> None:
    """Run the pipeline over a corpus directory of submissions."""
    overrides: dict = {
        "backend": backend_name,
        "parallelism": parallelism,
        "fail_on": fail_on,
    }
    if stages is not None:
        overrides["stages"] = {s.strip() for s in stages.split(",") if s.strip()}
    if strip_images:
        overrides["keep_images"] = False
    try:
        config = load_config(corpus_dir, output_dir, config_path, **overrides)
    except (ConfigError, TypeError) as exc:
        logger.error("bad configuration: %s", exc)
        sys.exit(pipeline.EXIT_ERROR)
    sys.exit(pipeline.run(config))


if __name__ == "__main__":
    main()
