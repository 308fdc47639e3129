from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from latexposed.patterns import RuleSet, SuppressionList, load_builtin_rules


@pytest.fixture(scope="session")
def builtin_ruleset() -> RuleSet:
    return RuleSet.compile(load_builtin_rules())


@pytest.fixture(scope="session")
def suppression() -> SuppressionList:
    return SuppressionList.default()
