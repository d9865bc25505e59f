import numpy as np
import pytest

from acceptance_registry import RESULTS

import clusterfb.order_stats
import clusterfb.thresholds

NORMALIZATION_TOL = 1e-12
_evaluations = {"count": 0, "worst": 0.0}


def _checked(func):
    def wrapper(*args, **kwargs):
        probs = func(*args, **kwargs)
        err = abs(float(np.sum(probs)) - 1.0)
        _evaluations["count"] += 1
        _evaluations["worst"] = max(_evaluations["worst"], err)
        assert err <= NORMALIZATION_TOL, f"rank probabilities sum to 1 + {err:.3e}"
        assert np.all(probs >= -NORMALIZATION_TOL) and np.all(probs <= 1 + NORMALIZATION_TOL)
        return probs
    wrapper.__wrapped__ = func
    return wrapper


@pytest.fixture(autouse=True)
def rank_normalization_guard(monkeypatch):
    """Every rank-distribution evaluation anywhere in the suite must sum to one."""
    original = clusterfb.order_stats.rank_distribution
    wrapped = _checked(original)
    monkeypatch.setattr(clusterfb.order_stats, "rank_distribution", wrapped)
    monkeypatch.setattr(clusterfb.thresholds, "rank_distribution", wrapped)
    yield


@pytest.fixture
def normalization_stats():
    return _evaluations


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            passed, detail = RESULTS[number]
            terminalreporter.write_line(
                f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    terminalreporter.write_line(
        f"rank-probability evaluations checked: {_evaluations['count']}, "
        f"worst |sum - 1| = {_evaluations['worst']:.3e}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
