import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from armdp.ambiguity import extreme_kernels
from armdp.model import (StationaryAdversaryPolicy, StationaryControllerPolicy, induced_chain,
                         load_instance)
from armdp.oracle import closed_classes as oracle_classes
from armdp.structure import reachability_graph, transitive_closure

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
GOLDEN = ROOT / "tests" / "golden"
FIXTURE_NAMES = ["t1_single", "d2_toggle", "absorbing_pair", "d4_transient", "d6_overlap", "mp_loop"]


def deterministic_controllers(inst):
    S, A = inst.shape
    for acts in itertools.product(range(A), repeat=S):
        yield StationaryControllerPolicy.deterministic(list(acts), A)


def extreme_adversaries(inst):
    per_state = [extreme_kernels(s, inst) for s in range(inst.n_states)]
    for combo in itertools.product(*per_state):
        yield np.array(combo)


def revalidate_comm_witness(inst, res, side):
    """A 'no' witness names a policy and a pair (a, b), both recurrent for some
    opposing choice, with b unreachable from a in the union graph."""
    w = res.witness
    a, b = w["pair"]
    if side == "controller":
        masks = w["controller_support"]
        D = np.zeros(inst.shape)
        for s, supp in enumerate(masks):
            D[s, supp] = 1.0 / len(supp)
        adj = reachability_graph(inst, controller=D)
        opposing = [induced_chain(inst, D, StationaryAdversaryPolicy(k))[0]
                    for k in extreme_adversaries(inst)]
    else:
        K = np.array([extreme_kernels(s, inst)[k] for s, k in enumerate(w["adversary_kernels"])])
        adj = reachability_graph(inst, adversary=K)
        opposing = [induced_chain(inst, D.probs, StationaryAdversaryPolicy(K))[0]
                    for D in deterministic_controllers(inst)]
    assert not transitive_closure(adj)[a, b]
    recurrent = set()
    for P in opposing:
        for cls in oracle_classes(P):
            recurrent.update(cls)
    assert a in recurrent and b in recurrent


def revalidate_unichain_witness(inst, res):
    w = res.witness
    K = np.array([extreme_kernels(s, inst)[k] for s, k in enumerate(w["adversary_kernels"])])
    D = StationaryControllerPolicy.deterministic(w["controller_actions"], inst.n_actions)
    P, _ = induced_chain(inst, D, StationaryAdversaryPolicy(K))
    assert oracle_classes(P) == w["closed_classes"] and len(w["closed_classes"]) > 1


def revalidate_occcc_witness(res):
    comps = res.witness["components"]
    assert len(comps) > 1
    states = [set().union(*map(set, comp)) for comp in comps]
    for x, y in itertools.combinations(states, 2):
        assert not x & y


def fixture(name):
    return load_instance(FIXTURES / f"{name}.json")


def expected(name):
    return fixture(name).meta["expected"]


@pytest.fixture(scope="session")
def oracle_golden():
    return json.loads((GOLDEN / "oracle_fixtures.json").read_text())


# acceptance lines, printed once at the end of the session
ACCEPTANCE = []


def report(number, passed, detail):
    ACCEPTANCE.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
