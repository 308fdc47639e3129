"""Findings report: severity policy, redaction, aggregation, emission."""

from __future__ import annotations

import json

import pytest

from latexposed.classify import CategoryLabel
from latexposed.patterns import Locus, RawMatch
from latexposed.report import (
    Finding,
    METHOD_EE,
    METHOD_LF,
    METHOD_PM,
    SeverityMap,
    aggregate,
    assign_severity,
    finding_from_candidate_file,
    finding_from_match,
    findings_from_labels,
    load_findings_jsonl,
    redact,
    render_summary_md,
    sort_findings,
    write_findings_jsonl,
)


@pytest.fixture(scope="module")
def severity_map():
    return SeverityMap.default()


def make_finding(category="Unique email addresses", method=METHOD_PM, paper="p1",
                 labels=frozenset(), host=None, severity="Low") -> Finding:
    return Finding(
        paper_id=paper,
        method=method,
        category=category,
        severity=severity,
        locus=Locus(paper, "main.tex", 3),
        evidence_redacted="x****",
        rule_or_backend="test",
        labels=labels,
        host=host,
    )


class TestSeverity:
    def test_credential_is_critical(self, severity_map):
        finding = make_finding("Login credentials (username/password)")
        assert assign_severity(finding, severity_map).severity == "Critical"

    def test_email_is_low(self, severity_map):
        finding = make_finding("Unique email addresses")
        assert assign_severity(finding, severity_map).severity == "Low"

    def test_exif_gps_is_high(self, severity_map):
        finding = make_finding("Image location EXIF data")
        assert assign_severity(finding, severity_map).severity == "High"

    def test_unknown_category_defaults_low(self, severity_map, caplog):
        finding = make_finding("Completely novel category")
        with caplog.at_level("WARNING"):
            assert assign_severity(finding, severity_map).severity == "Low"
        assert any("novel" in r.message for r in caplog.records)

    def test_map_is_total_over_known_severities(self, severity_map):
        assert set(severity_map.mapping.values()) <= {"Critical", "High", "Medium", "Low"}

    def test_bad_severity_in_file_rejected(self):
        with pytest.raises(ValueError):
            SeverityMap({"x": "Catastrophic"})


class TestRedact:
    def test_password_example(self):
        assert redact("Pass!4682") == "Pass*****"

    def test_short_secret_mostly_masked(self):
        assert redact("abcde") == "a****"

    def test_tiny_secret_fully_masked(self):
        assert redact("abcd") == "****"

    def test_email_mask_shape(self):
        # Keeps first character of local part and first domain label, plus
        # the domain tail.
        masked = redact("wei@pku-example-inst.org.cn", kind="email")
        assert masked == "w*****@p****.org.cn"

    def test_url_keeps_host_masks_path(self):
        masked = redact("https://docs.google.com/document/d/1jC2kT9vQwXyZa8LbN0fRgHs/edit")
        assert masked.startswith("https://docs.google.com/")
        assert "1jC2kT9vQwXyZa8LbN0fRgHs" not in masked
        assert "1jC2" in masked

    def test_url_query_masked(self):
        masked = redact("https://scholar.example-host.org/scholar?casa_token=AB12XY99ZZ")
        assert "AB12XY99ZZ" not in masked
        assert "casa_token=AB****" in masked

    def test_snippet_tokens_masked(self):
        masked = redact("password for portal is hunter2", kind="snippet")
        assert "hunter2" not in masked
        assert masked == "pa**** for po**** is hu****"

    def test_snippet_masks_short_digit_groups(self):
        # Grouped account numbers must not survive token-wise masking.
        masked = redact("pay to DE89 3704 0044 0532 0130 00", kind="snippet")
        assert "DE89 3704" not in masked
        assert masked == "pay to DE**** 37**** 00**** 05**** 01**** 00****"

    def test_secret_kind_forces_generic(self):
        masked = redact("DE89 3704 0044 0532 0130 00", kind="secret")
        assert masked == "DE89" + "*" * 23

    def test_idempotent_on_fixtures(self):
        fixtures = [
            "Pass!4682",
            "abcde",
            "wei@pku-example-inst.org.cn",
            "https://docs.google.com/document/d/1jC2kT9vQwXyZa8LbN0fRgHs/edit?x=longvalue99",
            "password for portal is hunter2",
            "AKIAIOSFODNN7EXAMPL0",
            "a@b.io",
            "",
        ]
        for text in fixtures:
            once = redact(text)
            assert redact(once) == once, text

    def test_kind_hints(self):
        assert "@" in redact("a.person@lab.org", kind="email")
        assert redact("ftp-like-token-1234567890").startswith("ftp-")


class TestFindingConstruction:
    def match(self, **kwargs) -> RawMatch:
        defaults = dict(
            rule_id="aws-access-key-id",
            locus=Locus("p1", "main.tex", 10),
            matched="AKIAIOSFODNN7EXAMPL0",
            context="key=AKIAIOSFODNN7EXAMPL0",
            start=4,
            category_hint="AWS access keys",
            label_hint="CRED",
        )
        defaults.update(kwargs)
        return RawMatch(**defaults)

    def test_match_to_finding(self, severity_map):
        finding = finding_from_match(self.match(), severity_map)
        assert finding.severity == "Critical"
        assert finding.method == METHOD_PM
        assert "AKIAIOSFODNN7EXAMPL0" not in finding.evidence_redacted
        assert finding.labels == frozenset({CategoryLabel.CRED})

    def test_suppressed_match_refused(self, severity_map):
        match = self.match(suppressed=True, suppress_reason="placeholder")
        assert finding_from_match(match, severity_map) is None

    def test_uncategorized_match_refused(self, severity_map):
        assert finding_from_match(self.match(category_hint=None), severity_map) is None

    def test_ee_findings_one_per_label(self, severity_map):
        labels = frozenset({CategoryLabel.PII, CategoryLabel.CRED})
        findings = findings_from_labels(
            "p2", labels, Locus("p2", "a.tex", 1), "model-x", severity_map,
            excerpt="login admin password hunter2",
        )
        categories = {f.category for f in findings}
        assert categories == {
            "PII Exposure",
            "Login credentials (username/password)",
        }
        for finding in findings:
            assert finding.method == METHOD_EE
            assert finding.labels == labels
            assert "hunter2" not in finding.evidence_redacted

    def test_other_label_produces_nothing(self, severity_map):
        findings = findings_from_labels(
            "p", frozenset({CategoryLabel.OTHER}), Locus("p", "a.tex", 1),
            "m", severity_map,
        )
        assert findings == []

    def test_candidate_file_categories(self, severity_map):
        cases = {
            "runs/cache.db": "SQLite databases",
            "config/settings.yaml":
                "Structured configuration files and metadata (JSON, YAML)",
            "scripts/train.py": "Private source code",
            "weights/model.ckpt": "Private model weights and training data",
        }
        for path, category in cases.items():
            finding = finding_from_candidate_file("p3", path, severity_map)
            assert finding.category == category
            assert finding.method == METHOD_LF
        assert finding_from_candidate_file("p3", "notes.txt", severity_map) is None


class TestAggregate:
    def test_category_histogram(self):
        findings = [make_finding("PII Exposure")] * 3 + [
            make_finding("Login credentials (username/password)")
        ] * 2
        stats = aggregate(findings)
        assert stats.by_category["PII Exposure"] == 3
        assert stats.by_category["Login credentials (username/password)"] == 2

    def test_top_domains_counting_oracle(self):
        findings = (
            [make_finding(host="a.com")] * 3 + [make_finding(host="b.org")]
        )
        from collections import Counter

        oracle = Counter(["a.com"] * 3 + ["b.org"]).most_common()
        stats = aggregate(findings)
        assert stats.top_domains == oracle
        assert stats.top_domains[0] == ("a.com", 3)

    def test_label_combinations_per_paper(self):
        pii = frozenset({CategoryLabel.PII})
        conf_peer = frozenset({CategoryLabel.CONF, CategoryLabel.PEER})
        findings = [
            make_finding("PII Exposure", METHOD_EE, paper="p1", labels=pii),
            make_finding("PII Exposure", METHOD_EE, paper="p2", labels=pii),
            make_finding("Author conflicts and admission of false results",
                         METHOD_EE, paper="p3", labels=conf_peer),
            make_finding("Peer reviews disputes / disagreements",
                         METHOD_EE, paper="p3", labels=conf_peer),
        ]
        stats = aggregate(findings)
        assert stats.label_combinations == {"PII": 2, "CONF, PEER": 1}

    def test_totals_partition_by_severity_and_method(self):
        findings = [
            make_finding("PII Exposure", METHOD_EE, severity="High"),
            make_finding("Unique email addresses", METHOD_PM, severity="Low"),
            make_finding("SQLite databases", METHOD_LF, severity="Medium"),
        ]
        stats = aggregate(findings)
        assert sum(stats.by_severity.values()) == stats.total == 3
        assert sum(stats.by_method.values()) == 3


class TestEmission:
    def sample_findings(self):
        return [
            make_finding("Unique email addresses", paper="p2"),
            make_finding("AWS access keys", paper="p1", severity="Critical"),
            make_finding("PII Exposure", METHOD_EE, paper="p1",
                         labels=frozenset({CategoryLabel.PII})),
        ]

    def test_jsonl_roundtrip(self, tmp_path):
        path = tmp_path / "findings.jsonl"
        write_findings_jsonl(self.sample_findings(), path)
        loaded = load_findings_jsonl(path)
        assert len(loaded) == 3
        assert loaded == sort_findings(self.sample_findings())

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_findings_jsonl(self.sample_findings(), a)
        write_findings_jsonl(list(reversed(self.sample_findings())), b)
        assert a.read_bytes() == b.read_bytes()

    def test_every_line_is_complete_json(self, tmp_path):
        path = tmp_path / "findings.jsonl"
        write_findings_jsonl(self.sample_findings(), path)
        for line in path.read_text().splitlines():
            json.loads(line)

    def test_summary_md_table(self):
        findings = self.sample_findings()
        stats = aggregate(findings)
        md = render_summary_md(findings, stats)
        assert "| AWS access keys | PM | 1 | Critical |" in md
        # Critical rows sort before Low rows.
        assert md.index("Critical") < md.index("Low")
