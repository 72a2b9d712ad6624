"""Acceptance suite: every gate at its stated tolerance, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or call
``medeq accept`` for the same gates with a manifest.
"""

import pytest

from medeq.acceptance import GATES, run_gate

_RESULTS = {}


@pytest.mark.parametrize("number", sorted(GATES))
def test_gate(number):
    res = run_gate(number)
    _RESULTS[number] = res
    print(res.line())
    if res.budget is not None and res.runtime > res.budget:
        print(f"       note: runtime {res.runtime:.1f} s exceeds budget {res.budget:.0f} s")
    assert res.passed, res.line() + f" thresholds={res.thresholds}"


def test_summary():
    if len(_RESULTS) < len(GATES):
        pytest.skip("summary needs the full gate run")
    print()
    for n in sorted(_RESULTS):
        print(_RESULTS[n].line())
    passed = sum(r.passed for r in _RESULTS.values())
    print(f"{passed}/{len(_RESULTS)} acceptance criteria passed")
    assert passed == len(GATES)
