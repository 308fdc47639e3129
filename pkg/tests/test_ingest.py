"""Ingestion: manifest parsing, download planning, archive extraction."""

from __future__ import annotations

import gzip
import io
import json
import random
import tarfile

import pytest

from latexposed.ingest import (
    ArchiveManifest,
    KIND_LATEX_SOURCE,
    KIND_NO_SOURCE,
    KIND_PDF_ONLY,
    ManifestError,
    classify_file,
    classify_submission,
    extract_submission,
    inventory_submission,
    parse_manifest_json,
    parse_manifest_xml,
    plan_downloads,
)


def tar_gz(files: dict[str, bytes]) -> bytes:
    """Reference archiver: plain tarfile + gzip."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        for name, data in files.items():
            info = tarfile.TarInfo(name)
            info.size = len(data)
            tf.addfile(info, io.BytesIO(data))
    return gzip.compress(buf.getvalue())


class TestManifest:
    def test_xml_roundtrip(self):
        text = """
        <archive-index>
          <archive id="A1"><paper>p1</paper><paper>p2</paper></archive>
          <archive id="A2"><paper>p3</paper></archive>
        </archive-index>
        """
        manifest = parse_manifest_xml(text)
        assert manifest.paper_ids == {"p1", "p2", "p3"}
        assert manifest.archive_for("p3") == "A2"

    def test_json_equivalent(self):
        text = json.dumps(
            {"archives": [{"id": "A1", "papers": ["p1"]}, {"id": "A2", "papers": ["p2"]}]}
        )
        manifest = parse_manifest_json(text)
        assert manifest.archive_for("p2") == "A2"

    def test_malformed_xml_reports_line(self):
        with pytest.raises(ManifestError, match="line"):
            parse_manifest_xml("<archive-index><archive id='A1'>")

    def test_malformed_json_reports_line(self):
        with pytest.raises(ManifestError, match="line"):
            parse_manifest_json('{"archives": [}')

    def test_duplicate_paper_rejected(self):
        with pytest.raises(ManifestError, match="both"):
            ArchiveManifest([("A1", ["p1"]), ("A2", ["p1"])])

    def test_duplicate_archive_rejected(self):
        with pytest.raises(ManifestError, match="duplicate"):
            ArchiveManifest([("A1", ["p1"]), ("A1", ["p2"])])


class TestPlanDownloads:
    def test_direct_cover(self):
        manifest = ArchiveManifest([("A1", ["p1", "p2"]), ("A2", ["p3"])])
        plan = plan_downloads(manifest, {"p1", "p3"})
        assert plan.entries == [("A1", ["p1"]), ("A2", ["p3"])]
        assert plan.unknown == []

    def test_empty_request(self):
        manifest = ArchiveManifest([("A1", ["p1"])])
        assert plan_downloads(manifest, set()).entries == []

    def test_unknown_ids_reported_not_fatal(self):
        manifest = ArchiveManifest([("A1", ["p1"])])
        plan = plan_downloads(manifest, {"p1", "ghost"})
        assert plan.unknown == ["ghost"]
        assert plan.entries == [("A1", ["p1"])]

    def test_cover_equals_known_wanted(self):
        rng = random.Random(42)
        entries = [
            (f"A{a:03d}", [f"p{a:03d}-{i}" for i in range(rng.randint(1, 9))])
            for a in range(60)
        ]
        manifest = ArchiveManifest(entries)
        all_ids = sorted(manifest.paper_ids)
        wanted = set(rng.sample(all_ids, 80)) | {"missing-1"}
        plan = plan_downloads(manifest, wanted)
        assert plan.covered == (wanted & manifest.paper_ids)

    def test_bulk_scale_planner(self):
        # 808 archives averaging ~125 papers covers >100,000 ids; wanting
        # everything must return all 808 archives.
        rng = random.Random(808)
        entries = []
        total = 0
        for a in range(808):
            count = rng.randint(120, 130)
            entries.append((f"arch_{a:04d}", [f"id{total + i:06d}" for i in range(count)]))
            total += count
        assert total > 100_000
        manifest = ArchiveManifest(entries)
        plan = plan_downloads(manifest, manifest.paper_ids)
        assert len(plan.entries) == 808
        assert plan.covered == manifest.paper_ids


class TestExtractSubmission:
    def test_tar_gz_with_tex_and_figure(self, tmp_path):
        data = tar_gz({"main.tex": b"\\documentclass{article}", "fig.png": b"\x89PNG"})
        record = extract_submission(data, "2301.00001", tmp_path)
        assert record.kind == KIND_LATEX_SOURCE
        assert len(record.files) == 2
        assert record.paths() == {"main.tex", "fig.png"}

    def test_bare_gzipped_tex(self, tmp_path):
        data = gzip.compress(b"\\documentclass{article}\n% note\n")
        record = extract_submission(data, "2301.00002", tmp_path)
        assert record.kind == KIND_LATEX_SOURCE
        assert len(record.files) == 1
        assert record.files[0].path.endswith(".tex")

    def test_pdf_only_archive(self, tmp_path):
        data = tar_gz({"paper.pdf": b"%PDF-1.5 fake"})
        record = extract_submission(data, "2301.00003", tmp_path)
        assert record.kind == KIND_PDF_ONLY

    def test_bare_gzipped_pdf(self, tmp_path):
        data = gzip.compress(b"%PDF-1.5 fake body")
        record = extract_submission(data, "2301.00004", tmp_path)
        assert record.kind == KIND_PDF_ONLY

    def test_corrupt_gzip_marks_no_source(self, tmp_path):
        data = b"\x1f\x8b" + b"\x00" * 30
        record = extract_submission(data, "2301.00005", tmp_path)
        assert record.kind == KIND_NO_SOURCE
        assert any("gzip" in d for d in record.diagnostics)

    def test_truncated_gzip(self, tmp_path):
        payload = random.Random(0).randbytes(10_000)  # incompressible
        data = gzip.compress(payload)
        assert len(data) > 200
        record = extract_submission(data[:200], "2301.00006", tmp_path)
        assert record.kind == KIND_NO_SOURCE
        assert record.diagnostics

    def test_hostile_member_names_rejected(self, tmp_path):
        hostile = {
            "../escape.tex": b"x",
            "/absolute.tex": b"x",
            "a/../../up.tex": b"x",
            "ok/notes.txt": b"fine",
        }
        record = extract_submission(tar_gz(hostile), "evil", tmp_path)
        assert record.paths() == {"ok/notes.txt"}
        assert len([d for d in record.diagnostics if "traversal" in d]) == 3
        # Nothing may land outside the submission root.
        outside = [
            p for p in tmp_path.parent.rglob("escape.tex")
        ] + [p for p in tmp_path.parent.rglob("up.tex")]
        assert outside == []

    def test_hostile_fuzz_never_escapes(self, tmp_path):
        rng = random.Random(99)
        parts = ["..", ".", "a", "b.tex", "/", "\\", "c"]
        for case in range(40):
            name = "/".join(rng.choice(parts) for _ in range(rng.randint(1, 5)))
            record = extract_submission(tar_gz({name: b"x"}), f"fz{case}", tmp_path)
            root = (tmp_path / f"fz{case}").resolve()
            for entry in record.files:
                resolved = (record.root_dir / entry.path).resolve()
                assert resolved.is_relative_to(root), name

    def test_symlink_members_skipped(self, tmp_path):
        buf = io.BytesIO()
        with tarfile.open(fileobj=buf, mode="w") as tf:
            link = tarfile.TarInfo("evil_link")
            link.type = tarfile.SYMTYPE
            link.linkname = "/etc/passwd"
            tf.addfile(link)
            info = tarfile.TarInfo("real.tex")
            info.size = 1
            tf.addfile(info, io.BytesIO(b"x"))
        record = extract_submission(gzip.compress(buf.getvalue()), "sym", tmp_path)
        assert record.paths() == {"real.tex"}
        assert any("non-regular" in d for d in record.diagnostics)

    def test_reextraction_idempotent(self, tmp_path):
        data = tar_gz({"main.tex": b"hello", "sub/data.csv": b"1,2"})
        first = extract_submission(data, "idem", tmp_path)
        second = extract_submission(data, "idem", tmp_path)
        assert first.as_dict() == second.as_dict()

    def test_inventory_matches_disk(self, tmp_path):
        data = tar_gz({"main.tex": b"hello", "sub/data.csv": b"1,2"})
        record = extract_submission(data, "inv", tmp_path)
        again = inventory_submission(record.root_dir, "inv")
        assert again.as_dict() == record.as_dict()


class TestClassify:
    def test_file_classes(self):
        assert classify_file("a/b/figure.EPS") == "graphic"
        assert classify_file("refs.bib") == "bib"
        assert classify_file("x.pygtex") == "style"
        assert classify_file("notes.txt") == "data"
        assert classify_file("weird.xyz") == "other"

    def test_kind_rules(self, tmp_path):
        def record_with(files):
            return extract_submission(tar_gz(files), "k", tmp_path)

        assert classify_submission(record_with({"main.tex": b"x"})) == KIND_LATEX_SOURCE
        assert classify_submission(record_with({"paper.pdf": b"%PDF"})) == KIND_PDF_ONLY
        assert classify_submission(record_with({"data.csv": b"1"})) == KIND_NO_SOURCE
