"""Acceptance gate: every bundled criterion must hold on a fresh run."""

import pytest

from kel.acceptance import ALL_CRITERIA, run_selftest


@pytest.fixture(scope="session")
def selftest_report(tmp_path_factory):
    return run_selftest(tmp_path_factory.mktemp("selftest"))


def _result(report, cid):
    for r in report.results:
        if r.cid == cid:
            return r
    raise AssertionError(f"criterion {cid} missing from report")


@pytest.mark.parametrize("cid", range(1, 11))
def test_criterion(selftest_report, cid):
    r = _result(selftest_report, cid)
    detail = "; ".join(r.failures) if r.failures else ""
    assert r.passed, f"criterion {cid} ({r.title}): {detail}"


def test_every_criterion_is_registered():
    assert len(ALL_CRITERIA) == 9  # criterion 10 is the rerun check itself


def test_selftest_within_budget(selftest_report):
    assert selftest_report.elapsed < 60.0
