"""Acceptance criteria at their stated tolerances, one pass/fail line each."""
import pytest

from feedbacklab.harness import acceptance
from feedbacklab.harness.config import worker_pool

SEED = 42


@pytest.fixture(scope="module")
def pool():
    with worker_pool() as p:
        yield p


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, pool, capsys):
    res = acceptance.run_criterion(number, SEED, pool)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
