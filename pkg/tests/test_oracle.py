import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from armdp.bellman import solve_discounted
from armdp.errors import EnumerationCapExceeded, OracleRefused, SingularSystem
from armdp.generate import random_instance
from armdp.model import ControllerSet
from armdp.oracle import (closed_classes, discounted_value, exact_chain_gain, exhaustive_values,
                          lu_solve, solve_average_mdp, stationary_distribution, worst_case_gain)

from conftest import FIXTURE_NAMES, fixture


def _random_chain(rng, n, sparsity=0.5):
    P = rng.random((n, n)) * (rng.random((n, n)) > sparsity)
    P[np.arange(n), rng.integers(n, size=n)] += 0.1
    return P / P.sum(axis=1, keepdims=True)


def _cesaro(P, r, log2_n=20):
    """(1/N) sum_{k<N} P^k r for N = 2^log2_n, by doubling."""
    power, acc = P.copy(), r.copy()  # acc = sum_{k<n} P^k r, power = P^n
    for _ in range(log2_n):
        acc = acc + power @ acc
        power = power @ power
    return acc / 2.0 ** log2_n


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_oracle_reproduces_frozen_values(name, oracle_golden):
    inst = fixture(name)
    ref = oracle_golden[name]
    S = inst.n_states
    mus = {f"unit{s}": np.eye(S)[s] for s in range(S)}
    mus["uniform"] = np.ones(S) / S
    for gamma in (0.9, 0.99):
        res = exhaustive_values(inst, gamma)
        assert np.allclose(res.supinf_discounted(), ref[f"supinf_discounted_{gamma}"], atol=1e-12)
        assert np.allclose(res.infsup_discounted(), ref[f"infsup_discounted_{gamma}"], atol=1e-12)
    res = exhaustive_values(inst)
    for key, mu in mus.items():
        assert abs(res.supinf_gain(mu) - ref["supinf_gain"][key]) < 1e-12
        assert abs(res.infsup_gain(mu) - ref["infsup_gain"][key]) < 1e-12


def test_mp_loop_gap_in_oracle():
    res = exhaustive_values(fixture("mp_loop"))
    mu = np.array([1.0, 0, 0])
    assert res.supinf_gain(mu) == 0.0 and abs(res.infsup_gain(mu) - 0.5) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 7))
def test_lu_matches_numpy(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    assert np.allclose(lu_solve(A, b), np.linalg.solve(A, b), rtol=1e-12, atol=1e-12)
    B = rng.normal(size=(n, 2))
    assert np.allclose(lu_solve(A, B), np.linalg.solve(A, B), rtol=1e-12, atol=1e-12)


def test_lu_needs_pivoting():
    assert np.allclose(lu_solve([[0.0, 1.0], [1.0, 0.0]], [2.0, 3.0]), [3.0, 2.0])


def test_lu_singular():
    with pytest.raises(SingularSystem):
        lu_solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


@pytest.mark.parametrize("seed", range(30))
def test_chain_gain_matches_cesaro(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    P = _random_chain(rng, n, sparsity=0.6)
    r = rng.random(n)
    g = exact_chain_gain(P, r)
    # the raw average at N = 2^20 carries a bias / N term of order 1e-6
    assert np.abs(g - _cesaro(P, r)).max() <= 1e-4
    # cancelling it with the N = 2^21 average leaves rounding only
    assert np.abs(g - (2 * _cesaro(P, r, 21) - _cesaro(P, r))).max() <= 1e-8
    assert g.min() >= 0 and g.max() <= 1


def test_periodic_chain_gain():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(exact_chain_gain(P, np.array([1.0, 0.0])), 0.5)
    assert np.abs(_cesaro(P, np.array([1.0, 0.0])) - 0.5).max() <= 1e-12


def test_multichain_with_transients():
    P = np.array([[0.5, 0.25, 0.25], [0, 1, 0], [0, 0, 1.0]])
    r = np.array([0.0, 1.0, 0.0])
    assert np.allclose(exact_chain_gain(P, r), [0.5, 1.0, 0.0])
    assert closed_classes(P) == [[1], [2]]


def test_stationary_distribution():
    P = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert np.allclose(stationary_distribution(P), [2 / 3, 1 / 3])


def test_discounted_value_closed_form():
    assert np.allclose(discounted_value(np.eye(1), np.array([0.7]), 0.9), [7.0])


@pytest.mark.parametrize("name", ["t1_single", "d2_toggle", "absorbing_pair", "d4_transient",
                                  "d6_overlap", "mp_loop"])
def test_cross_validation_with_bellman(name):
    inst = fixture(name)
    tol = 1e-8
    res = exhaustive_values(inst, 0.95)
    for orient, ref in (("supinf", res.supinf_discounted()), ("infsup", res.infsup_discounted())):
        vf = solve_discounted(0.95, orient, inst, tol=tol)
        assert np.abs(vf.values - ref).max() <= 2 * tol


def test_full_simplex_refuses_supinf_only():
    inst = dataclasses.replace(fixture("mp_loop"), controller_set=ControllerSet.full_simplex())
    res = exhaustive_values(inst, 0.9)
    with pytest.raises(OracleRefused):
        res.supinf_gain(np.ones(3) / 3)
    with pytest.raises(OracleRefused):
        res.supinf_discounted()
    ref = solve_discounted(0.9, "infsup", inst, tol=1e-10).values
    assert np.allclose(res.infsup_discounted(), ref, atol=1e-9)


def test_discounted_only():
    res = exhaustive_values(fixture("d2_toggle"), 0.9, gains=False)
    assert res.gains is None and res.supinf_discounted().shape == (2,)
    with pytest.raises(ValueError):
        res.supinf_gain(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        exhaustive_values(fixture("d2_toggle"), gains=False)


def test_enumeration_cap():
    with pytest.raises(EnumerationCapExceeded):
        exhaustive_values(fixture("mp_loop"), cap=3)


def test_worst_case_gain_mp():
    inst = fixture("mp_loop")
    D = np.array([[1.0, 0], [1, 0], [1, 0]])
    assert np.allclose(worst_case_gain(inst, D), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_average_mdp_is_optimal(seed):
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(2, 5)), int(rng.integers(1, 4))
    kernel = np.array([[_random_chain(rng, S)[0] for _ in range(A)] for _ in range(S)])
    reward = rng.random((S, A))
    best = solve_average_mdp(kernel, reward)
    idx = np.arange(S)
    g_best = exact_chain_gain(kernel[idx, list(best)], reward[idx, list(best)])
    # compare with every deterministic policy
    for code in range(A ** S):
        acts = [(code // A ** s) % A for s in range(S)]
        g = exact_chain_gain(kernel[idx, acts], reward[idx, acts])
        assert g.sum() <= g_best.sum() + 1e-9


def test_finite_q_uses_given_distributions():
    inst = random_instance(4, controller="finite")
    res = exhaustive_values(inst)
    assert len(res.controllers) == len(inst.controller_set.distributions) ** inst.n_states
