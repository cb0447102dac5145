"""Acceptance criteria 1-12.

Each test runs one check from ``thinfilm.suites`` and prints a single
``criterion N [PASS|FAIL] ...`` line, also when output is captured.
"""

import pytest

from thinfilm.suites import CHECKS


@pytest.mark.parametrize("criterion", sorted(CHECKS))
def test_criterion(criterion, capsys, tmp_path):
    fn = CHECKS[criterion]
    result = fn(str(tmp_path)) if criterion == 12 else fn()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
