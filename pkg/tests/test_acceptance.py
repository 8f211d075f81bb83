"""Every acceptance criterion at its stated tolerance, one pass/fail line each.

The lines are printed as each check runs and repeated in the terminal summary.
"""

import pytest

from odlab import checks
from odlab.checks import PASS
from odlab.runner import determinism_probe

RESULTS: list = []


@pytest.fixture(scope="module")
def bench():
    return checks.Bench(seed=0)


@pytest.mark.parametrize("check", checks.CHECKS, ids=checks.CRITERIA)
def test_criterion(bench, check):
    if check is checks.check_determinism_convergence:
        verdict = check(bench, report_bytes=lambda: determinism_probe(0))
    else:
        verdict = check(bench)
    line = verdict.line()
    RESULTS.append(line)
    print(line)
    assert verdict.status == PASS, line
