import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from armdp.ambiguity import (best_case_expectation, extreme_kernels, tv_extreme_row,
                             worst_case_expectation)
from armdp.errors import DimensionMismatch, ExplosionGuard
from armdp.generate import random_instance
from armdp.model import ControllerSet, FiniteKernels, RobustMdpInstance, SaTvBalls

from conftest import fixture


def _tv_instance(seed):
    return random_instance(seed, ambiguity="tv", max_radius=0.5)


def _grid_rows(p0, theta, step=0.05):
    """All grid points of the simplex that lie in the TV ball (brute force)."""
    n = len(p0)
    ticks = int(round(1 / step))
    for combo in itertools.product(range(ticks + 1), repeat=n - 1):
        if sum(combo) > ticks:
            continue
        row = np.array(list(combo) + [ticks - sum(combo)]) * step
        if 0.5 * np.abs(row - p0).sum() <= theta + 1e-12:
            yield row


def test_tv_row_example():
    row = tv_extreme_row([0.5, 0.3, 0.2], 0.25, [1.0, 2.0, 0.0])
    assert np.allclose(row, [0.5, 0.05, 0.45])


def test_tv_row_zero_radius_is_nominal():
    assert tv_extreme_row([0.2, 0.8], 0.0, [0, 1]).tolist() == [0.2, 0.8]


def test_tv_row_budget_exceeds_mass():
    assert np.allclose(tv_extreme_row([0.2, 0.3, 0.5], 1.0, [3, 2, 1]), [0, 0, 1])


def test_tv_row_ties_pick_lowest_index_receiver():
    assert np.allclose(tv_extreme_row([0.0, 0.0, 1.0], 0.4, [0, 0, 1]), [0.4, 0, 0.6])


@pytest.mark.parametrize("seed", range(25))
def test_tv_row_is_grid_optimal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    p0 = np.round(rng.dirichlet(np.ones(n)), 2)
    p0[-1] = 1 - p0[:-1].sum()
    theta = float(np.round(rng.uniform(0, 0.6), 2))
    w = rng.normal(size=n)
    lo = tv_extreme_row(p0, theta, w, worst=True)
    hi = tv_extreme_row(p0, theta, w, worst=False)
    for row in (lo, hi):
        assert abs(row.sum() - 1) < 1e-12 and row.min() >= -1e-15
        assert 0.5 * np.abs(row - p0).sum() <= theta + 1e-12
    grid = list(_grid_rows(p0, theta))
    assert grid
    assert min(r @ w for r in grid) >= lo @ w - 1e-12
    assert max(r @ w for r in grid) <= hi @ w + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(-5, 5))
def test_tv_monotone_translation_sandwich(seed, theta, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    p0 = rng.dirichlet(np.ones(n))
    w = rng.normal(size=n)
    w2 = w + rng.uniform(0, 1, n)
    lo = tv_extreme_row(p0, theta, w) @ w
    assert lo <= tv_extreme_row(p0, theta, w2) @ w2 + 1e-12
    assert abs(tv_extreme_row(p0, theta, w + c) @ (w + c) - (lo + c)) <= 1e-12
    assert lo <= p0 @ w + 1e-12 <= tv_extreme_row(p0, theta, w, worst=False) @ w + 2e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["finite", "tv"]), st.floats(-3, 3))
def test_response_properties(seed, amb, c):
    inst = random_instance(seed, ambiguity=amb)
    rng = np.random.default_rng(seed)
    S, A = inst.shape
    s = int(rng.integers(S))
    phi = rng.dirichlet(np.ones(A))
    w = rng.normal(size=S)
    w2 = w + rng.uniform(0, 1, S)
    lo = worst_case_expectation(s, phi, w, inst)
    assert lo.value <= worst_case_expectation(s, phi, w2, inst).value + 1e-12
    assert abs(worst_case_expectation(s, phi, w + c, inst).value - (lo.value + c)) <= 1e-12
    assert lo.value <= best_case_expectation(s, phi, w, inst).value + 1e-12
    # the reported arg reproduces the value
    assert abs(phi @ (lo.arg @ w) - lo.value) <= 1e-10
    if amb == "tv":
        nominal = inst.ambiguity[s].nominal
        assert lo.value <= phi @ (nominal @ w) + 1e-12
        assert all(inst.ambiguity[s].contains_row(a, lo.arg[a]) for a in range(A))


def test_finite_response_index():
    inst = fixture("d2_toggle")
    res = worst_case_expectation(0, np.array([0.0, 1.0]), np.array([0.0, 1.0]), inst)
    assert res.index == 0 and res.value == 0.5


def test_response_shape_checks():
    inst = fixture("d2_toggle")
    with pytest.raises(DimensionMismatch):
        worst_case_expectation(0, np.ones(3) / 3, np.zeros(2), inst)
    with pytest.raises(DimensionMismatch):
        worst_case_expectation(5, np.ones(2) / 2, np.zeros(2), inst)


def test_extreme_kernels_finite_are_the_kernels():
    inst = fixture("d2_toggle")
    ks = extreme_kernels(0, inst)
    assert len(ks) == 2 and np.array_equal(ks[1], inst.ambiguity[0].kernels[1])


def test_extreme_kernels_cap():
    inst = _tv_instance(3)
    with pytest.raises(ExplosionGuard):
        extreme_kernels(0, inst, cap=0)


def _tv_pattern_instance(p0, theta):
    S = len(p0)
    amb = [SaTvBalls([p0], [theta])] + [FiniteKernels([[np.eye(S)[i]]]) for i in range(1, S)]
    return RobustMdpInstance(S, 1, np.zeros((S, 1)), ControllerSet.dirac_only(), amb)


@pytest.mark.parametrize("p0,theta", [([0.5, 0.5, 0.0], 0.2), ([1.0, 0.0, 0.0], 0.3),
                                       ([0.2, 0.3, 0.5], 0.1), ([0.1, 0.9, 0.0], 0.6),
                                       ([0.4, 0.6], 0.4), ([0.0, 0.0, 1.0], 1.0)])
def test_pattern_completeness_against_grid(p0, theta):
    inst = _tv_pattern_instance(p0, theta)
    extreme = np.zeros(len(p0), bool)
    for k in extreme_kernels(0, inst):
        extreme |= k[0] > 0
    grid = np.zeros(len(p0), bool)
    for row in _grid_rows(np.array(p0), theta):
        grid |= row > 0
    assert extreme.tolist() == grid.tolist()
    # every extreme kernel is feasible
    for k in extreme_kernels(0, inst):
        assert 0.5 * np.abs(k[0] - p0).sum() <= theta + 1e-12
