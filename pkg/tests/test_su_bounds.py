import math

import pytest

from feedbacklab.errors import DomainError, ParameterError
from feedbacklab.numerics import gaussian_capacity
from feedbacklab.su_bounds import (achievable_log_m, bound_point, converse_ingredients, converse_log_m,
                                   epsilon_capacity, sandwich_crossover, write_curve_csv)

# frozen from 50-digit mpmath evaluations at P=1, eps=0.1
CONVERSE = {10 ** 4: 5243.5153270136248, 10 ** 6: 384247.26864770649}
ACHIEVABLE = {10 ** 4: 3733.2909911679803, 10 ** 6: 373604.01447838177}


def test_epsilon_capacity():
    assert epsilon_capacity(1.0, 0.0) == pytest.approx(gaussian_capacity(1.0))
    assert epsilon_capacity(1.0, 0.5) == pytest.approx(gaussian_capacity(2.0))
    with pytest.raises(DomainError):
        epsilon_capacity(1.0, 1.0)


@pytest.mark.parametrize("n", sorted(CONVERSE))
def test_bounds_against_oracle(n):
    assert converse_log_m(n, 1.0, 0.1) == pytest.approx(CONVERSE[n], rel=1e-12)
    assert achievable_log_m(n, 1.0, 0.1) == pytest.approx(ACHIEVABLE[n], rel=1e-12)


def test_achievable_domain():
    with pytest.raises(DomainError):
        achievable_log_m(5, 1.0, 0.1)
    with pytest.raises(DomainError):
        achievable_log_m(10, 1.0, 0.5, L=2)
    with pytest.raises(ParameterError):
        achievable_log_m(100, 1.0, 0.1, L=0)
    with pytest.raises(ParameterError):
        achievable_log_m(100, -1.0, 0.1)


def test_converse_vacuous_at_small_n():
    assert converse_log_m(100, 1.0, 0.1) == math.inf
    assert converse_ingredients(100, 1.0, 0.1).vacuous


def test_converse_fixed_point_is_consistent():
    ing = converse_ingredients(10 ** 5, 1.0, 0.1)
    assert ing.q == pytest.approx(1.0 / (1 - 0.1 - ing.gamma / math.sqrt(10 ** 5)), rel=1e-12)
    assert not ing.vacuous


def test_converse_shift():
    assert converse_log_m(10 ** 5, 1.0, 0.1) == converse_log_m(10 ** 5 + 1, 1.0, 0.1, shift=0)


def test_sandwich():
    ns = [10 ** k for k in range(3, 9)]
    for P in (1.0, 10.0):
        for eps in (0.1, 0.5):
            assert sandwich_crossover(ns, P, eps) == 1000
            pt = bound_point(10 ** 8, P, eps)
            cap = epsilon_capacity(P, eps)
            assert pt.ln_m_lower <= pt.ln_m_upper
            assert abs(pt.ln_m_lower / 1e8 / cap - 1) < 0.01
            assert abs(pt.ln_m_upper / 1e8 / cap - 1) < 0.01


def test_sandwich_crossover_counts_undefined_points():
    # the upper curve is infinite where vacuous, so only undefined lower points violate
    assert sandwich_crossover([5, 100, 10 ** 4], 1.0, 0.1) == 100
    assert sandwich_crossover([5], 1.0, 0.1) is None


def test_bounds_per_use_approach_capacity():
    cap = epsilon_capacity(1.0, 0.1)
    gaps = [converse_log_m(n, 1.0, 0.1) / n - cap for n in (10 ** 4, 10 ** 6, 10 ** 8)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


@pytest.mark.xfail(strict=True, reason="the upper curve is about 3.2% above the limit at this n")
def test_converse_within_two_percent_at_one_million():
    cap = gaussian_capacity(1.0 / (1 - 0.2))
    assert abs(converse_log_m(10 ** 6, 1.0, 0.2) / 10 ** 6 / cap - 1) < 0.02


def test_curve_csv(tmp_path):
    path = tmp_path / "c.csv"
    rows = write_curve_csv(path, [5, 10 ** 4], 1.0, 0.1)
    assert math.isnan(rows[0]["lower"])
    lines = path.read_text().splitlines()
    assert lines[0] == "n,lower,upper,lower_per_n,upper_per_n,eps_capacity"
    assert lines[1].split(",")[1] == ""
