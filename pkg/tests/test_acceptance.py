"""Acceptance gate.

One test per criterion; each prints a ``[PASS]``/``[FAIL]`` line with the
measured values and thresholds.  The lines are repeated in the terminal
summary so they appear in plain ``pytest -v`` output.  Run this file
directly (``python tests/test_acceptance.py``) to print the lines alone.
"""

import sys

import pytest

from bcinverse.acceptance import CRITERIA, run_criteria

RESULTS = []


@pytest.mark.slow
@pytest.mark.parametrize("key", list(CRITERIA))
def test_criterion(key):
    res = CRITERIA[key]()
    RESULTS.append(res)
    print(res.line())
    assert res.passed, res.line()


if __name__ == "__main__":
    results = run_criteria(list(CRITERIA), stream=sys.stdout)
    sys.exit(0 if all(r.passed for r in results) else 5)
