"""Pattern matching engine: rule sets, structural analyzers, suppression."""

from .analyzers import (
    CLOUD_PROVIDERS,
    IP_LOOPBACK,
    IP_PRIVATE,
    IP_PUBLIC,
    IP_RESERVED,
    IpRecord,
    UrlRecord,
    analyze_jwt,
    classify_ip,
    classify_url,
    iban_shape_ok,
    shannon_entropy,
    validate_iban,
)
from .rules import (
    CompiledRule,
    PatternRule,
    RuleSet,
    load_builtin_rules,
    load_rules,
    required_literal,
)
from .scanner import (
    Locus,
    RawMatch,
    SuppressionList,
    UrlHeuristics,
    scan,
    scan_structures,
    scan_text,
)

__all__ = [
    "CLOUD_PROVIDERS",
    "CompiledRule",
    "IP_LOOPBACK",
    "IP_PRIVATE",
    "IP_PUBLIC",
    "IP_RESERVED",
    "IpRecord",
    "Locus",
    "PatternRule",
    "RawMatch",
    "RuleSet",
    "SuppressionList",
    "UrlHeuristics",
    "UrlRecord",
    "analyze_jwt",
    "classify_ip",
    "classify_url",
    "iban_shape_ok",
    "load_builtin_rules",
    "load_rules",
    "required_literal",
    "scan",
    "scan_structures",
    "scan_text",
    "shannon_entropy",
    "validate_iban",
]
