"""Communication structure: weak communication, unichain, overlap-connected
recurrent classes, and constructive target-hitting policies with certificates.

Every "for all stationary policies" question is answered by enumerating
support patterns: reachability in a finite chain depends only on which
entries are positive, so a finite set of supports covers every policy.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .ambiguity import extreme_kernels, tv_margin_ok
from .errors import EnumerationCapExceeded, SingularSystem, TargetUnreachable
from .model import StationaryAdversaryPolicy, StationaryControllerPolicy, induced_chain

DEFAULT_POLICY_CAP = 4096
DEFAULT_COMBO_CAP = 100_000

COMMUNICATING = "communicating"
WEAKLY = "weakly_communicating"
NO = "no"


# ---------------------------------------------------------------------------
# Graph helpers


def scc_labels(adj):
    n_comp, labels = connected_components(csr_matrix(adj.astype(np.int8)), directed=True,
                                          connection="strong")
    return n_comp, labels


def closed_classes(adj):
    """Closed communicating classes (bottom SCCs) of a directed graph."""
    n_comp, labels = scc_labels(adj)
    closed = np.ones(n_comp, dtype=bool)
    src, dst = np.nonzero(adj)
    for a, b in zip(src, dst):
        if labels[a] != labels[b]:
            closed[labels[a]] = False
    return sorted(tuple(int(s) for s in np.flatnonzero(labels == c))
                  for c in range(n_comp) if closed[c])


def transitive_closure(adj):
    n = adj.shape[0]
    reach = adj.astype(bool) | np.eye(n, dtype=bool)
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    return reach


def _bfs_path(adj, start, targets):
    """Shortest path from start into ``targets`` through non-target states (lowest index first)."""
    prev = {start: None}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for nxt in np.flatnonzero(adj[x]):
            nxt = int(nxt)
            if nxt in prev:
                continue
            prev[nxt] = x
            if nxt in targets:
                path = [nxt]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(nxt)
    return None


def trim_path(path):
    """Cut out any segment between repeated visits to a state."""
    out = []
    for s in path:
        if s in out:
            out = out[: out.index(s) + 1]
        else:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# Enumerable supports


def controller_patterns(instance):
    """Per-state support patterns of elements of Q, as boolean |A| masks."""
    A = instance.n_actions
    out = []
    for supp in instance.controller_set.support_patterns(A):
        m = np.zeros(A, dtype=bool)
        m[list(supp)] = True
        out.append(m)
    return out


def deterministic_patterns(instance):
    return [np.eye(instance.n_actions, dtype=bool)[a] for a in range(instance.n_actions)]


def adversary_supports(instance, cap=DEFAULT_POLICY_CAP):
    """Per state: distinct support bundles (|A| x |S| bool) of the extreme kernels,
    paired with the index of the first extreme kernel realizing each."""
    out = []
    for s in range(instance.n_states):
        seen, bundles = set(), []
        for k, ker in enumerate(extreme_kernels(s, instance)):
            sup = ker > 0
            key = sup.tobytes()
            if key not in seen:
                seen.add(key)
                bundles.append((k, sup))
        out.append(bundles)
    return out


def _count(per_state):
    return int(np.prod([len(x) for x in per_state], dtype=float))


def _row_options(ctrl_masks, adv_bundles):
    """Distinct row supports at one state for all pairings of the given options."""
    seen, rows = set(), []
    for m in ctrl_masks:
        for _, sup in adv_bundles:
            row = sup[m].any(axis=0)
            key = row.tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(row)
    return rows


def _recurrent_union(row_options, cap):
    """States recurrent for at least one selection of rows, plus all closed classes seen."""
    if _count(row_options) > cap:
        raise EnumerationCapExceeded(f"{_count(row_options)} chain patterns exceed cap {cap}")
    n = len(row_options)
    rec = np.zeros(n, dtype=bool)
    classes = set()
    for combo in itertools.product(*row_options):
        for cls in closed_classes(np.array(combo)):
            rec[list(cls)] = True
            classes.add(cls)
    return rec, sorted(classes)


# ---------------------------------------------------------------------------
# Reachability


def reachability_graph(instance, controller=None, adversary=None):
    """Adjacency over S.

    With ``controller`` fixed, edges are unioned over the adversary's extreme
    kernels; with ``adversary`` fixed, over the actions Q can put mass on;
    with neither, over both.
    """
    S = instance.n_states
    adv = adversary_supports(instance)
    adj = np.zeros((S, S), dtype=bool)
    any_action = np.zeros(instance.n_actions, dtype=bool)
    for m in controller_patterns(instance):
        any_action |= m
    D = None if controller is None else np.asarray(getattr(controller, "probs", controller)) > 0
    K = None if adversary is None else np.asarray(getattr(adversary, "kernel", adversary)) > 0
    for s in range(S):
        mask = any_action if D is None else D[s]
        if K is not None:
            adj[s] = K[s][mask].any(axis=0)
        else:
            for _, sup in adv[s]:
                adj[s] |= sup[mask].any(axis=0)
    return adj


# ---------------------------------------------------------------------------
# Results


@dataclass
class CommResult:
    """Side-wise communication classification.

    ``classes`` maps each enumerated policy pattern (as a tuple key) to the
    class C found for it; ``witness`` describes the first failure.
    """

    classification: str
    classes: dict = field(default_factory=dict)
    witness: dict | None = None
    inconclusive: bool = False

    @property
    def weakly(self):
        return self.classification in (COMMUNICATING, WEAKLY)

    def to_json(self, witnesses=True):
        out = {"classification": self.classification, "inconclusive": self.inconclusive,
               "classes": sorted({tuple(c) for c in self.classes.values()})}
        out["classes"] = [list(c) for c in out["classes"]]
        if witnesses and self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class CheckResult:
    holds: bool
    witness: dict | None = None
    inconclusive: bool = False

    def __bool__(self):
        return self.holds

    def to_json(self, witnesses=True):
        out = {"holds": self.holds, "inconclusive": self.inconclusive}
        if witnesses and self.witness is not None:
            out["witness"] = self.witness
        return out


def _mask_key(masks):
    return tuple(tuple(int(a) for a in np.flatnonzero(m)) for m in masks)


def _classify(n_states, union_adj, rec):
    """(classification, C, failing pair) for one fixed policy on one side."""
    n_comp, _ = scc_labels(union_adj)
    if n_comp == 1:
        return COMMUNICATING, tuple(range(n_states)), None
    reach = transitive_closure(union_adj)
    R = [int(s) for s in np.flatnonzero(rec)]
    for a in R:
        for b in R:
            if not reach[a, b]:
                return NO, tuple(R), (a, b)
    return WEAKLY, tuple(R), None


def _combine(results):
    order = {COMMUNICATING: 0, WEAKLY: 1, NO: 2}
    return max(results, key=order.__getitem__) if results else COMMUNICATING


def check_controller_communication(instance, cap=DEFAULT_POLICY_CAP, combo_cap=DEFAULT_COMBO_CAP):
    S = instance.n_states
    patterns = controller_patterns(instance)
    if len(patterns) ** S > cap:
        raise EnumerationCapExceeded(f"{len(patterns)}^{S} controller patterns exceed cap {cap}")
    adv = adversary_supports(instance)
    classes, verdicts, witness = {}, [], None
    for masks in itertools.product(patterns, repeat=S):
        rows = [_row_options([masks[s]], adv[s]) for s in range(S)]
        union_adj = np.array([np.any(r, axis=0) for r in rows])
        rec, _ = _recurrent_union(rows, combo_cap)
        verdict, C, pair = _classify(S, union_adj, rec)
        key = _mask_key(masks)
        classes[key] = C
        verdicts.append(verdict)
        if verdict == NO and witness is None:
            witness = {"controller_support": [list(x) for x in key], "pair": list(pair),
                       "recurrent_somewhere": list(C)}
    return CommResult(_combine(verdicts), classes, witness, not tv_margin_ok(instance))


def _adversary_policies(instance, cap):
    adv = adversary_supports(instance)
    if _count(adv) > cap:
        raise EnumerationCapExceeded(f"{_count(adv)} adversary patterns exceed cap {cap}")
    return adv, itertools.product(*adv)


def check_adversary_communication(instance, cap=DEFAULT_POLICY_CAP, combo_cap=DEFAULT_COMBO_CAP):
    S = instance.n_states
    patterns = controller_patterns(instance)
    _, policies = _adversary_policies(instance, cap)
    classes, verdicts, witness = {}, [], None
    for choice in policies:
        rows = [_row_options(patterns, [choice[s]]) for s in range(S)]
        union_adj = np.array([np.any(r, axis=0) for r in rows])
        rec, _ = _recurrent_union(rows, combo_cap)
        verdict, C, pair = _classify(S, union_adj, rec)
        key = tuple(k for k, _ in choice)
        classes[key] = C
        verdicts.append(verdict)
        if verdict == NO and witness is None:
            witness = {"adversary_kernels": list(key), "pair": list(pair),
                       "recurrent_somewhere": list(C)}
    return CommResult(_combine(verdicts), classes, witness, not tv_margin_ok(instance))


def check_unichain(instance, cap=DEFAULT_POLICY_CAP):
    """Every deterministic controller x extreme adversary chain has one closed class."""
    S = instance.n_states
    det = deterministic_patterns(instance)
    if len(det) ** S > cap:
        raise EnumerationCapExceeded(f"{len(det)}^{S} controller policies exceed cap {cap}")
    adv, _ = _adversary_policies(instance, cap)
    for actions in itertools.product(range(instance.n_actions), repeat=S):
        for choice in itertools.product(*adv):
            adj = np.array([choice[s][1][actions[s]] for s in range(S)])
            cls = closed_classes(adj)
            if len(cls) != 1:
                return CheckResult(False, {"controller_actions": list(actions),
                                           "adversary_kernels": [k for k, _ in choice],
                                           "closed_classes": [list(c) for c in cls]},
                                   not tv_margin_ok(instance))
    return CheckResult(True, None, not tv_margin_ok(instance))


def _overlap_components(classes):
    parent = list(range(len(classes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(classes)), 2):
        if set(classes[i]) & set(classes[j]):
            parent[find(i)] = find(j)
    groups = {}
    for i in range(len(classes)):
        groups.setdefault(find(i), []).append(list(classes[i]))
    return list(groups.values())


def check_occcc(instance, side="controller", cap=DEFAULT_POLICY_CAP, combo_cap=DEFAULT_COMBO_CAP):
    """Closed classes reachable by the other side overlap-connect, for every policy on ``side``."""
    S = instance.n_states
    patterns = controller_patterns(instance)
    if side == "controller":
        if len(patterns) ** S > cap:
            raise EnumerationCapExceeded(f"{len(patterns)}^{S} controller patterns exceed cap {cap}")
        adv = adversary_supports(instance)
        fixed = itertools.product(patterns, repeat=S)
        rows_for = lambda masks: [_row_options([masks[s]], adv[s]) for s in range(S)]  # noqa: E731
        key_for = lambda masks: {"controller_support": [list(x) for x in _mask_key(masks)]}  # noqa: E731
    elif side == "adversary":
        _, fixed = _adversary_policies(instance, cap)
        rows_for = lambda choice: [_row_options(patterns, [choice[s]]) for s in range(S)]  # noqa: E731
        key_for = lambda choice: {"adversary_kernels": [k for k, _ in choice]}  # noqa: E731
    else:
        raise ValueError(f"side must be 'controller' or 'adversary', got {side!r}")
    chain = None
    for pol in fixed:
        _, classes = _recurrent_union(rows_for(pol), combo_cap)
        comps = _overlap_components(classes)
        if len(comps) != 1:
            return CheckResult(False, {**key_for(pol), "components": comps},
                               not tv_margin_ok(instance))
        if chain is None:
            chain = {**key_for(pol), "classes": [list(c) for c in classes]}
    return CheckResult(True, chain, not tv_margin_ok(instance))


# ---------------------------------------------------------------------------
# Target-hitting builders


@dataclass
class HittingCertificate:
    target: int
    policy: object
    delta_prime: float
    bound: float
    formula_delta: float
    paths: dict
    empirical_mean: float | None = None

    def to_json(self):
        return {"target": self.target, "delta_prime": self.delta_prime, "bound": self.bound,
                "formula_delta": self.formula_delta,
                "paths": {str(k): v for k, v in self.paths.items()},
                "empirical_mean": self.empirical_mean}


def _certify(target, policy, next_hop, prob, n_states):
    """delta' = min over start states of the designated path's probability."""
    paths, delta = {}, 1.0
    for w in range(n_states):
        path, p = [w], 1.0
        while path[-1] != target:
            x = path[-1]
            p *= prob[x]
            path.append(next_hop[x])
        paths[w] = path
        delta = min(delta, p)
    used = [prob[x] for x in range(n_states) if x != target]
    step = min(used) if used else 1.0
    formula = (step * n_states ** (-n_states)) ** n_states
    return HittingCertificate(target, policy, delta, n_states / delta, formula, paths)


def _check_reach(adj, y):
    reach = transitive_closure(adj)
    for w in range(adj.shape[0]):
        if not reach[w, y]:
            raise TargetUnreachable(w, y)


def build_adversary_to_target(instance, controller, y):
    """Stationary adversary q that drives the fixed controller into ``y``.

    States are assigned in index order: from each unassigned state a BFS path
    (through unassigned states) reaches the assigned set, and every state on it
    gets the extreme kernel putting the most mass on its successor.
    """
    S = instance.n_states
    D = np.asarray(getattr(controller, "probs", controller), dtype=float)
    if D.ndim == 1:
        D = StationaryControllerPolicy.deterministic([int(a) for a in D], instance.n_actions).probs
    ext = [extreme_kernels(s, instance) for s in range(S)]
    # rows of p_Delta for every extreme kernel at every state
    chain_rows = [[D[s] @ k for k in ext[s]] for s in range(S)]
    adj = np.array([np.any([row > 0 for row in chain_rows[s]], axis=0) for s in range(S)])
    _check_reach(adj, y)

    choice = [None] * S
    next_hop = [None] * S
    prob = [1.0] * S
    choice[y] = 0
    assigned = {y}
    for s0 in range(S):
        if s0 in assigned:
            continue
        path = trim_path(_bfs_path(adj, s0, assigned))
        for x, nxt in zip(path, path[1:]):
            if x in assigned:
                break
            probs = [row[nxt] for row in chain_rows[x]]
            k = int(np.argmax(probs))
            choice[x], next_hop[x], prob[x] = k, nxt, float(probs[k])
            assigned.add(x)
    kernel = np.array([ext[s][choice[s]] for s in range(S)])
    q = StationaryAdversaryPolicy(kernel, None)
    return q, _certify(y, q, next_hop, prob, S)


def build_controller_to_target(instance, adversary, y):
    """Stationary controller eta that drives the fixed adversary into ``y`` (mirror)."""
    S = instance.n_states
    K = np.asarray(getattr(adversary, "kernel", adversary), dtype=float)
    Q = instance.controller_set.vertices(instance.n_actions)
    chain_rows = [[q @ K[s] for q in Q] for s in range(S)]
    adj = np.array([np.any([row > 0 for row in chain_rows[s]], axis=0) for s in range(S)])
    _check_reach(adj, y)

    choice = [None] * S
    next_hop = [None] * S
    prob = [1.0] * S
    choice[y] = 0
    assigned = {y}
    for s0 in range(S):
        if s0 in assigned:
            continue
        path = trim_path(_bfs_path(adj, s0, assigned))
        for x, nxt in zip(path, path[1:]):
            if x in assigned:
                break
            probs = [row[nxt] for row in chain_rows[x]]
            q = int(np.argmax(probs))
            choice[x], next_hop[x], prob[x] = q, nxt, float(probs[q])
            assigned.add(x)
    eta = StationaryControllerPolicy(np.array([Q[choice[s]] for s in range(S)]))
    return eta, _certify(y, eta, next_hop, prob, S)


def expected_exit_time(instance, controller, adversary, C):
    """Expected steps to enter C from each state outside it, by (I - M) x = 1."""
    S = instance.n_states
    C = sorted(set(int(c) for c in C))
    if not C:
        raise ValueError("target set C must be non-empty")
    out = [s for s in range(S) if s not in C]
    P, _ = induced_chain(instance, controller, adversary)
    if not out:
        return np.zeros(0), out
    reach = transitive_closure(P > 0)
    for w in out:
        if not reach[w, C].any():
            raise SingularSystem(f"state {w} never enters C: the complement holds a closed class")
    M = P[np.ix_(out, out)]
    x = np.linalg.solve(np.eye(len(out)) - M, np.ones(len(out)))
    return x, out


# ---------------------------------------------------------------------------
# Report


@dataclass
class StructureReport:
    controller_comm: CommResult
    adversary_comm: CommResult
    all_unichain: CheckResult
    occcc_controller: CheckResult
    occcc_adversary: CheckResult

    def to_json(self, witnesses=False):
        return {
            "controller_comm": self.controller_comm.to_json(witnesses),
            "adversary_comm": self.adversary_comm.to_json(witnesses),
            "all_unichain": self.all_unichain.to_json(witnesses),
            "occcc_controller": self.occcc_controller.to_json(witnesses),
            "occcc_adversary": self.occcc_adversary.to_json(witnesses),
        }


def structure_report(instance):
    return StructureReport(
        check_controller_communication(instance),
        check_adversary_communication(instance),
        check_unichain(instance),
        check_occcc(instance, "controller"),
        check_occcc(instance, "adversary"),
    )
