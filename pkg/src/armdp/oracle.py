"""Brute-force ground truth for tiny instances.

Everything here is deliberately naive: policies are enumerated outright,
chains are decomposed with a transitive closure, and linear systems go
through a small in-house LU factorization. None of it shares code with the
iterative solvers it is meant to check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationCapExceeded, OracleRefused, SingularSystem
from .model import FiniteKernels

DEFAULT_PAIR_CAP = 200_000


# ---------------------------------------------------------------------------
# Linear algebra


def lu_factor(A):
    A = np.array(A, dtype=float)
    n = A.shape[0]
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if A[p, k] == 0.0:
            raise SingularSystem(f"zero pivot in column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        A[k + 1:, k] /= A[k, k]
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:])
    return A, piv


def _lu_apply(LU, piv, b):
    n = LU.shape[0]
    y = np.array(b, dtype=float)[piv]
    for i in range(n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in reversed(range(n)):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def lu_solve(A, b):
    """Solve A x = b by partial-pivoting LU plus one refinement step."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    LU, piv = lu_factor(A)
    if b.ndim == 1:
        x = _lu_apply(LU, piv, b)
        return x + _lu_apply(LU, piv, b - A @ x)
    cols = []
    for j in range(b.shape[1]):
        x = _lu_apply(LU, piv, b[:, j])
        cols.append(x + _lu_apply(LU, piv, b[:, j] - A @ x))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# Markov chains


def closed_classes(P):
    """Closed communicating classes of a stochastic matrix, each a sorted list."""
    n = P.shape[0]
    reach = (P > 0) | np.eye(n, dtype=bool)
    for k in range(n):  # Warshall
        reach |= reach[:, [k]] & reach[[k], :]
    classes, seen = [], set()
    for s in range(n):
        if s in seen:
            continue
        cls = [t for t in range(n) if reach[s, t] and reach[t, s]]
        seen.update(cls)
        # closed iff everything reachable from s is in the class
        if all(not reach[s, t] or t in cls for t in range(n)):
            classes.append(cls)
    return classes


def stationary_distribution(P):
    """Stationary law of an irreducible stochastic matrix."""
    n = P.shape[0]
    A = (np.eye(n) - P).T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return lu_solve(A, b)


def exact_chain_gain(P, r):
    """Cesaro-limit average reward from every start state."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    n = P.shape[0]
    g = np.zeros(n)
    recurrent = np.zeros(n, dtype=bool)
    for cls in closed_classes(P):
        idx = np.array(cls)
        pi = stationary_distribution(P[np.ix_(idx, idx)])
        g[idx] = pi @ r[idx]
        recurrent[idx] = True
    T = np.flatnonzero(~recurrent)
    if T.size:
        R = np.flatnonzero(recurrent)
        M = np.eye(T.size) - P[np.ix_(T, T)]
        g[T] = lu_solve(M, P[np.ix_(T, R)] @ g[R])
    return g


def discounted_value(P, r, gamma):
    return lu_solve(np.eye(P.shape[0]) - gamma * np.asarray(P), r)


# ---------------------------------------------------------------------------
# Policy enumeration


def _tv_vertex_rows(p0, theta):
    """Vertices of {p in simplex : TV(p, p0) <= theta}, one per ranking of states."""
    n = len(p0)
    out, seen = [], set()
    for order in itertools.permutations(range(n)):
        # order[0] is the receiver, donors drained from the back of the ranking
        row = np.array(p0, dtype=float)
        budget, moved = float(theta), 0.0
        for i in reversed(order[1:]):
            take = min(row[i], budget)
            row[i] -= take
            budget -= take
            moved += take
        row[order[0]] += moved
        key = tuple(np.round(row, 15))
        if key not in seen:
            seen.add(key)
            out.append(row)
    return out


def adversary_choices(instance, s):
    """Enumerated elements of P_s (TV balls: all vertex bundles)."""
    amb = instance.ambiguity[s]
    if isinstance(amb, FiniteKernels):
        return [np.array(k) for k in amb.kernels]
    per_action = [_tv_vertex_rows(amb.nominal[a], amb.radius[a]) for a in range(instance.n_actions)]
    return [np.array(combo) for combo in itertools.product(*per_action)]


def controller_choices(instance):
    cs = instance.controller_set
    if cs.variant == "finite":
        return [np.array(d) for d in cs.distributions]
    return [np.eye(instance.n_actions)[a] for a in range(instance.n_actions)]


@dataclass
class OracleResult:
    """Per-pair gains and discounted values, indexed [controller, adversary, state]."""

    controllers: list
    adversaries: list
    gains: np.ndarray
    discounted: np.ndarray | None
    gamma: float | None
    randomized_controller: bool = False

    def _need_gains(self):
        if self.gains is None:
            raise ValueError("gains were not computed")

    def supinf_gain(self, mu):
        self._need_gains()
        if self.randomized_controller:
            raise OracleRefused("sup-inf gain over the full simplex is not enumerable")
        x = self.gains @ np.asarray(mu, dtype=float)
        return float(x.min(axis=1).max())

    def infsup_gain(self, mu):
        self._need_gains()
        x = self.gains @ np.asarray(mu, dtype=float)
        return float(x.max(axis=0).min())

    def supinf_discounted(self):
        """Per-state max over controllers of min over adversaries."""
        if self.discounted is None:
            raise ValueError("no discount factor was requested")
        if self.randomized_controller:
            raise OracleRefused("sup-inf over the full simplex is not enumerable")
        return self.discounted.min(axis=1).max(axis=0)

    def infsup_discounted(self):
        if self.discounted is None:
            raise ValueError("no discount factor was requested")
        return self.discounted.max(axis=0).min(axis=0)


def exhaustive_values(instance, gamma=None, cap=DEFAULT_PAIR_CAP, gains=True):
    """Enumerate stationary controller x stationary adversary policies.

    Controllers range over deterministic selections from Q's enumerable
    elements (Diracs for DiracOnly and FullSimplex, the listed distributions
    for FiniteDistributions). Adversaries range over the finite kernel lists,
    or over all vertex bundles for TV balls. ``gains=False`` skips the
    average-reward evaluation when only discounted values are wanted.
    """
    if not gains and gamma is None:
        raise ValueError("nothing to compute: give gamma or keep gains")
    S = instance.n_states
    q_choices = controller_choices(instance)
    per_state_adv = [adversary_choices(instance, s) for s in range(S)]
    n_ctrl = len(q_choices) ** S
    n_adv = int(np.prod([len(c) for c in per_state_adv], dtype=float))
    if n_ctrl * n_adv > cap:
        raise EnumerationCapExceeded(f"{n_ctrl} x {n_adv} policy pairs exceed cap {cap}")
    controllers = list(itertools.product(range(len(q_choices)), repeat=S))
    adversaries = list(itertools.product(*[range(len(c)) for c in per_state_adv]))
    shape = (len(controllers), len(adversaries), S)
    g_out = np.zeros(shape) if gains else None
    disc = None if gamma is None else np.zeros(shape)
    for j, adv in enumerate(adversaries):
        kernel = np.array([per_state_adv[s][k] for s, k in enumerate(adv)])
        for i, ctrl in enumerate(controllers):
            D = np.array([q_choices[q] for q in ctrl])
            P = np.einsum("sa,sat->st", D, kernel)
            r = np.einsum("sa,sa->s", D, instance.reward)
            if gains:
                g_out[i, j] = exact_chain_gain(P, r)
            if gamma is not None:
                disc[i, j] = discounted_value(P, r, gamma)
    return OracleResult(
        controllers=[np.array([q_choices[q] for q in c]) for c in controllers],
        adversaries=[np.array([per_state_adv[s][k] for s, k in enumerate(a)]) for a in adversaries],
        gains=g_out,
        discounted=disc,
        gamma=gamma,
        randomized_controller=instance.controller_set.variant == "full_simplex",
    )


def worst_case_gain(instance, controller_probs, cap=DEFAULT_PAIR_CAP):
    """min over enumerated stationary adversaries of the gain vector of a fixed controller."""
    S = instance.n_states
    D = np.asarray(controller_probs, dtype=float)
    per_state_adv = [adversary_choices(instance, s) for s in range(S)]
    n_adv = int(np.prod([len(c) for c in per_state_adv], dtype=float))
    if n_adv > cap:
        raise EnumerationCapExceeded(f"{n_adv} adversary policies exceed cap {cap}")
    r = np.einsum("sa,sa->s", D, instance.reward)
    worst = np.full(S, np.inf)
    for adv in itertools.product(*per_state_adv):
        P = np.einsum("sa,sat->st", D, np.array(adv))
        worst = np.minimum(worst, exact_chain_gain(P, r))
    return worst


def solve_average_mdp(kernel, reward, tie_gamma=0.999):
    """Optimal deterministic stationary policy of an ordinary average-reward MDP.

    ``kernel`` is |S| x |A| x |S|. Policies are enumerated; the gain summed
    over start states is maximized, with discounted value as tie-breaker and
    lowest lexicographic index after that.
    """
    kernel = np.asarray(kernel, dtype=float)
    reward = np.asarray(reward, dtype=float)
    S, A = reward.shape
    best, best_key = None, None
    idx = np.arange(S)
    for actions in itertools.product(range(A), repeat=S):
        P = kernel[idx, list(actions)]
        r = reward[idx, list(actions)]
        g = exact_chain_gain(P, r)
        key = (round(float(g.sum()), 10), round(float(discounted_value(P, r, tie_gamma).sum()), 8))
        if best_key is None or key > best_key:
            best, best_key = actions, key
    return best
