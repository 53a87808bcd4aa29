import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from armdp.errors import ExtractionFailed
from armdp.gain import (CONVERGED, INCONCLUSIVE, SPAN_UNBOUNDED, default_schedule, duality_report,
                        extract_policy, relative_value_iteration, solve_constant_gain,
                        verify_constant_gain)
from armdp.generate import random_instance
from armdp.oracle import exhaustive_values, worst_case_gain

from conftest import FIXTURE_NAMES, expected, fixture

TOL = 1e-6


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixture_gains(name):
    inst, exp = fixture(name), expected(name)
    for orient in ("supinf", "infsup"):
        sol = solve_constant_gain(orient, inst, tol=TOL)
        assert sol.verdict == exp["gain_verdict"]
        assert 0.0 <= sol.alpha <= 1.0
        if sol.converged:
            assert abs(sol.alpha - exp[f"alpha_{orient}"]) <= TOL
            assert sol.residual <= TOL
            assert verify_constant_gain(sol.u, sol.alpha, orient, inst) <= TOL
            assert sol.u.min() == 0.0


def test_t1_single_closed_form():
    sol = solve_constant_gain("supinf", fixture("t1_single"))
    assert abs(sol.alpha - 0.7) < 1e-12 and sol.u.tolist() == [0.0]


def test_d2_bias_difference():
    sol = solve_constant_gain("supinf", fixture("d2_toggle"))
    assert abs((sol.u[1] - sol.u[0]) - expected("d2_toggle")["u_R_minus_u_L"]) <= TOL


def test_mp_loop_bias():
    sol = solve_constant_gain("supinf", fixture("mp_loop"))
    assert np.allclose(sol.u, expected("mp_loop")["u_supinf"], atol=TOL)


@pytest.mark.parametrize("name", ["t1_single", "d2_toggle", "mp_loop"])
def test_extract_policy_fixtures(name):
    inst = fixture(name)
    sol = solve_constant_gain("supinf", inst)
    D = extract_policy(sol.u, sol.alpha, inst, 1e-4)
    names = [inst.action_labels[a] for a in D.actions]
    assert names == expected(name)["extract_policy"]


def test_extract_policy_rejects_bad_pair():
    inst = fixture("d2_toggle")
    with pytest.raises(ExtractionFailed):
        extract_policy(np.array([0.0, 1.0]), 0.9, inst, 1e-4)


def test_absorbing_pair_unbounded():
    sol = solve_constant_gain("supinf", fixture("absorbing_pair"))
    assert sol.verdict == SPAN_UNBOUNDED
    assert len(sol.span_records) == len(sol.gamma_trace) >= 4


def test_schedule_validation():
    with pytest.raises(ValueError):
        solve_constant_gain("supinf", fixture("t1_single"), gammas=[0.9, 0.8])
    with pytest.raises(ValueError):
        solve_constant_gain("supinf", fixture("t1_single"), gammas=[0.5, 1.0])
    assert default_schedule(4, 6) == [1 - 1 / 16, 1 - 1 / 32, 1 - 1 / 64]


def test_short_schedule_is_inconclusive():
    sol = solve_constant_gain("supinf", fixture("d4_transient"), gammas=[0.5])
    assert sol.verdict == INCONCLUSIVE


def test_json_report_keys():
    js = solve_constant_gain("infsup", fixture("d2_toggle")).to_json()
    assert set(js) == {"orientation", "alpha", "u", "residual", "verdict", "gamma_trace"}
    assert js["orientation"] == "infsup"


def test_mp_duality_report():
    rep = duality_report(fixture("mp_loop"), with_structure=True)
    assert rep.verdict == CONVERGED
    assert abs(rep.alpha_supinf) <= TOL and abs(rep.alpha_infsup - 0.5) <= TOL
    assert rep.stationary_optimal_hd_s is False
    assert rep.to_json()["structure"]["all_unichain"]["holds"]


def _case(seed, amb="finite", ctrl="dirac_only"):
    return random_instance(seed, ambiguity=amb, controller=ctrl, sparsity=0.6, max_pairs=400)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gain_uniqueness(seed):
    inst = _case(seed)
    a = solve_constant_gain("supinf", inst, tol=TOL)
    if not a.converged:
        return
    b = solve_constant_gain("supinf", inst, gammas=default_schedule(5, 21), tol=TOL,
                            ref_state=inst.n_states - 1)
    if b.converged:
        assert abs(a.alpha - b.alpha) <= 2 * TOL


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_initial_distribution_independence(seed):
    inst = _case(seed)
    sol = solve_constant_gain("supinf", inst, tol=TOL)
    if not sol.converged:
        return
    orc = exhaustive_values(inst)
    S = inst.n_states
    for mu in list(np.eye(S)) + [np.ones(S) / S]:
        assert abs(sol.alpha - orc.supinf_gain(mu)) <= TOL


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["finite", "tv"]),
       st.sampled_from(["dirac_only", "finite", "full_simplex"]))
def test_weak_duality(seed, amb, ctrl):
    if amb == "tv" and ctrl == "full_simplex":
        ctrl = "dirac_only"
    rep = duality_report(_case(seed, amb, ctrl), TOL)
    assert rep.gap >= -2 * TOL


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_sa_rectangular_collapse(seed):
    rep = duality_report(random_instance(seed, ambiguity="tv", n_states=3), TOL)
    if rep.verdict == CONVERGED:
        assert abs(rep.gap) <= 2 * TOL


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_strong_duality_propagates_to_oracle(seed):
    inst = _case(seed)
    rep = duality_report(inst, TOL)
    if rep.verdict != CONVERGED or abs(rep.gap) > TOL:
        return
    orc = exhaustive_values(inst)
    S = inst.n_states
    for mu in list(np.eye(S)) + [np.ones(S) / S]:
        assert abs(orc.supinf_gain(mu) - rep.alpha_supinf) <= TOL
        assert abs(orc.infsup_gain(mu) - rep.alpha_supinf) <= TOL


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_extracted_policy_guarantees_gain(seed):
    inst = _case(seed)
    sol = solve_constant_gain("supinf", inst, tol=TOL)
    if not sol.converged:
        return
    D = extract_policy(sol.u, sol.alpha, inst, 1e-4)
    assert worst_case_gain(inst, D.probs).min() >= sol.alpha - 1e-4


@pytest.mark.parametrize("name", ["t1_single", "d2_toggle", "d4_transient", "d6_overlap", "mp_loop"])
def test_experimental_rvi_agrees(name):
    inst = fixture(name)
    for orient in ("supinf", "infsup"):
        rvi = relative_value_iteration(orient, inst, tol=TOL)
        assert rvi.verdict == CONVERGED and rvi.residual <= TOL
        assert abs(rvi.alpha - solve_constant_gain(orient, inst, tol=TOL).alpha) <= 2 * TOL


def test_experimental_rvi_reports_failure():
    rvi = relative_value_iteration("supinf", fixture("absorbing_pair"), max_iters=200)
    assert rvi.verdict == INCONCLUSIVE and rvi.residual > TOL
