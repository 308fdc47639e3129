"""latexposed: find leaked sensitive information in LaTeX preprint sources.

The pipeline has four stages: ingest (bulk-archive planning and unpacking),
parse (comment extraction and cleaning), mine (pattern matching, logical
filtering, detector-backed entity extraction), and analyze (severity mapping
and redacted reporting).  A benchmark harness scores detector backends on
gold-labeled snippet datasets.
"""

__version__ = "0.1.0"

from .bench import EvalReport, GoldSnippet, build_embedded_dataset, evaluate
from .classify import (
    BaselineBackend,
    CategoryLabel,
    DetectorBackend,
    RemoteBackend,
    RemoteModelConfig,
    baseline_classify,
    build_prompt,
    estimate_cost,
    parse_response,
)
from .cleaning import (
    CleanConfig,
    CleanStats,
    clean_corpus,
    dedup_filter,
    estimate_tokens,
    is_boilerplate,
    normalize,
)
from .comments import (
    CommentRecord,
    CommentUsability,
    assess_usability,
    extract_comments,
    strip_comments,
)
from .exifprobe import ImageMeta, flag_image, read_exif
from .ingest import (
    ArchiveManifest,
    SubmissionRecord,
    classify_submission,
    extract_submission,
    load_manifest,
    plan_downloads,
)
from .patterns import (
    PatternRule,
    RawMatch,
    RuleSet,
    analyze_jwt,
    classify_ip,
    classify_url,
    load_rules,
    scan,
    validate_iban,
)
from .refgraph import ReachabilityReport, ReferenceEdge, compute_unreferenced, parse_references
from .report import Finding, SeverityMap, aggregate, assign_severity, redact

__all__ = [
    "ArchiveManifest",
    "BaselineBackend",
    "CategoryLabel",
    "CleanConfig",
    "CleanStats",
    "CommentRecord",
    "CommentUsability",
    "DetectorBackend",
    "EvalReport",
    "Finding",
    "GoldSnippet",
    "ImageMeta",
    "PatternRule",
    "RawMatch",
    "ReachabilityReport",
    "ReferenceEdge",
    "RemoteBackend",
    "RemoteModelConfig",
    "RuleSet",
    "SeverityMap",
    "SubmissionRecord",
    "__version__",
    "aggregate",
    "analyze_jwt",
    "assess_usability",
    "assign_severity",
    "baseline_classify",
    "build_embedded_dataset",
    "build_prompt",
    "classify_ip",
    "classify_submission",
    "classify_url",
    "clean_corpus",
    "compute_unreferenced",
    "dedup_filter",
    "estimate_cost",
    "estimate_tokens",
    "evaluate",
    "extract_comments",
    "extract_submission",
    "flag_image",
    "is_boilerplate",
    "load_manifest",
    "load_rules",
    "normalize",
    "parse_references",
    "parse_response",
    "plan_downloads",
    "read_exif",
    "redact",
    "scan",
    "strip_comments",
    "validate_iban",
]
