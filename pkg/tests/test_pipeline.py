"""Pipeline orchestration over fixture corpora."""

from __future__ import annotations

import gzip
import json

import pytest

from helpers import PREAMBLE, CLOSING, build_planted_corpus

from latexposed.config import ConfigError, RunConfig, load_config
from latexposed.pipeline import EXIT_ERROR, EXIT_FINDINGS, EXIT_OK, run
from latexposed.report import load_findings_jsonl


def small_corpus(root):
    for i in range(4):
        sub = root / f"s{i:02d}"
        sub.mkdir(parents=True)
        (sub / "main.tex").write_text(
            PREAMBLE + f"% note number {i} about the experiment\n" + CLOSING
        )
    planted = root / "s99"
    planted.mkdir()
    (planted / "main.tex").write_text(
        PREAMBLE + "% portal password: Zq8!mmTT4x\n" + CLOSING
    )


class TestRun:
    def test_smoke_five_submissions(self, tmp_path):
        corpus = tmp_path / "corpus"
        out = tmp_path / "out"
        small_corpus(corpus)
        config = RunConfig(corpus_dir=corpus, output_dir=out, parallelism=2)
        assert run(config) == EXIT_OK
        assert (out / "findings.jsonl").exists()
        assert (out / "summary.json").exists()
        assert (out / "summary.md").exists()
        assert (out / "stats.json").exists()

    def test_fail_on_critical(self, tmp_path):
        corpus = tmp_path / "corpus"
        out = tmp_path / "out"
        small_corpus(corpus)
        config = RunConfig(corpus_dir=corpus, output_dir=out, fail_on="critical")
        assert run(config) == EXIT_FINDINGS
        findings = load_findings_jsonl(out / "findings.jsonl")
        assert any(f.severity == "Critical" for f in findings)

    def test_rerun_byte_identical_findings(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_planted_corpus(corpus)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert run(RunConfig(corpus_dir=corpus, output_dir=out1, parallelism=3)) == EXIT_OK
        assert run(RunConfig(corpus_dir=corpus, output_dir=out2, parallelism=1)) == EXIT_OK
        assert (out1 / "findings.jsonl").read_bytes() == (out2 / "findings.jsonl").read_bytes()

    def test_missing_remote_credential_exits_before_network(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LATEXPOSED_API_KEY", raising=False)
        monkeypatch.delenv("OPENROUTER_API_KEY", raising=False)
        corpus = tmp_path / "corpus"
        out = tmp_path / "out"
        small_corpus(corpus)
        config = RunConfig(corpus_dir=corpus, output_dir=out, backend="remote")
        assert run(config) == EXIT_ERROR
        assert not (out / "findings.jsonl").exists()

    def test_patterns_only_stage_gating(self, tmp_path, monkeypatch):
        # Remote backend configured but classify disabled: no credential
        # needed, no network touched.
        monkeypatch.delenv("LATEXPOSED_API_KEY", raising=False)
        monkeypatch.delenv("OPENROUTER_API_KEY", raising=False)

        def explode(*args, **kwargs):
            raise AssertionError("network transport must not be constructed")

        import latexposed.classify as classify_mod

        monkeypatch.setattr(classify_mod, "_requests_transport", explode)
        corpus = tmp_path / "corpus"
        out = tmp_path / "out"
        small_corpus(corpus)
        config = RunConfig(
            corpus_dir=corpus, output_dir=out, backend="remote",
            stages={"comments", "clean", "patterns"},
        )
        assert run(config) == EXIT_OK
        findings = load_findings_jsonl(out / "findings.jsonl")
        assert findings  # the planted password is a pattern hit
        assert all(f.method == "PM" for f in findings)
        assert not (out / "summary.json").exists()  # report stage disabled

    def test_archive_corpus_with_ingest(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        (corpus / "2301.00001.gz").write_bytes(
            gzip.compress((PREAMBLE + "% shared pw: Abc!9912x\n" + CLOSING).encode())
        )
        out = tmp_path / "out"
        config = RunConfig(corpus_dir=corpus, output_dir=out)
        assert run(config) == EXIT_OK
        findings = load_findings_jsonl(out / "findings.jsonl")
        assert any(f.paper_id == "2301.00001" for f in findings)
        assert (out / "submissions" / "2301.00001").is_dir()

    def test_unreadable_corpus_is_operational_error(self, tmp_path):
        config = RunConfig(corpus_dir=tmp_path / "missing", output_dir=tmp_path / "out")
        assert run(config) == EXIT_ERROR

    def test_strip_images(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_planted_corpus(corpus)
        out = tmp_path / "out"
        config = RunConfig(corpus_dir=corpus, output_dir=out, keep_images=False)
        assert run(config) == EXIT_OK
        assert not (corpus / "p10-gps" / "site_photo.jpg").exists()


class TestGraphOutputs:
    def test_graph_reports_written(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_planted_corpus(corpus)
        out = tmp_path / "out"
        config = RunConfig(corpus_dir=corpus, output_dir=out, stages={"graph"})
        assert run(config) == EXIT_OK
        report = json.loads((out / "graph" / "p13-notes.json").read_text())
        assert any(c["path"] == "notes.txt" for c in report["candidates"])


class TestConfig:
    def test_output_must_differ_from_corpus(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig(corpus_dir=tmp_path, output_dir=tmp_path)

    def test_parallelism_floor(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig(corpus_dir=tmp_path / "a", output_dir=tmp_path / "b", parallelism=0)

    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig(
                corpus_dir=tmp_path / "a", output_dir=tmp_path / "b",
                stages={"patterns", "bogus"},
            )

    def test_toml_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(
            'parallelism = 2\nbackend = "remote"\n\n[clean]\ndedup_threshold = 5\n'
        )
        config = load_config(
            tmp_path / "corpus", tmp_path / "out", cfg, backend="baseline"
        )
        assert config.parallelism == 2  # from file
        assert config.backend == "baseline"  # flag wins
        assert config.clean.dedup_threshold == 5

    def test_bad_toml_reports_error(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("not == valid toml")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "corpus", tmp_path / "out", cfg)
