"""All twelve acceptance criteria at their stated tolerances.

Each criterion prints one pass/fail line. The fixtures share the
session-wide suite with the unit tests, so expensive solves run once.
"""

import json

import pytest

from seglab.acceptance import CRITERIA, CriterionResult

IDS = sorted(CRITERIA)


@pytest.fixture(scope="module")
def results(suite):
    out = {}
    for i in IDS:
        try:
            out[i] = suite.cached(f"c{i}", getattr(suite, f"c{i}"))
        except Exception as exc:  # a crash is a failure with a reason
            out[i] = CriterionResult(i, f"criterion {i}", False, {"error": f"{type(exc).__name__}: {exc}"}, {}, {})
        print(out[i].line())
    return out


def test_twelve_criteria():
    assert IDS == list(range(1, 13))


@pytest.mark.parametrize("cid", IDS)
def test_criterion(results, cid):
    r = results[cid]
    print(r.line())
    assert r.passed, json.dumps({"measured": r.measured, "target": r.target, "tolerance": r.tolerance}, default=str)
