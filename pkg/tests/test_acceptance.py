"""Acceptance battery: one PASS/FAIL line per criterion, repeated in the terminal summary."""

import pytest

from fdlab.acceptance import CRITERIA

LINES = []


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    res = CRITERIA[number]()
    LINES.append(res.line())
    print(res.line())
    assert res.passed, res.measured
