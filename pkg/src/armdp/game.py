"""Per-state zero-sum games behind the robust Bellman operators.

The payoff of controller decision phi against adversary choice p_s at state s,
for a target vector w, gain shift alpha and discount gamma, is

    sum_a phi(a) * ( r(s, a) - alpha + gamma * <p_s(.|a), w> ).

Ties among optimal actions or kernels go to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ambiguity import tv_extreme_row
from .errors import ToleranceNotMet, UnsupportedCombination
from .lp import solve_matrix_game
from .model import FiniteKernels


class Orientation(str, Enum):
    SUPINF = "supinf"
    INFSUP = "infsup"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        return cls(key)


@dataclass(frozen=True)
class StateGameSolution:
    value: float
    controller_choice: np.ndarray
    adversary_choice: np.ndarray
    orientation: Orientation
    gap_bound: float = 0.0
    adversary_index: int | None = None


def payoff_matrix(s, w, alpha, gamma, instance):
    """M[a, k] for a finite P_s (actions x kernels)."""
    amb = instance.ambiguity[s]
    return (instance.reward[s][:, None] - alpha
            + gamma * np.einsum("kat,t->ak", amb.kernels, np.asarray(w, dtype=float)))


def evaluate(s, phi, rows, w, alpha, gamma, instance):
    """Payoff of a controller distribution against explicit rows (|A| x |S|)."""
    phi = np.asarray(phi, dtype=float)
    return float(phi @ (instance.reward[s] - alpha + gamma * (np.asarray(rows) @ w)))


def _tv_worst(s, w, alpha, gamma, instance):
    amb = instance.ambiguity[s]
    rows = np.array([tv_extreme_row(amb.nominal[a], amb.radius[a], w, worst=True)
                     for a in range(instance.n_actions)])
    per_action = instance.reward[s] - alpha + gamma * (rows @ w)
    return rows, per_action


def _solve(s, w, alpha, gamma, instance, tol, orientation):
    w = np.asarray(w, dtype=float)
    cs = instance.controller_set
    A = instance.n_actions
    amb = instance.ambiguity[s]

    if not isinstance(amb, FiniteKernels):
        if cs.variant == "full_simplex":
            raise UnsupportedCombination("full simplex controller set with TV-ball ambiguity")
        # SA-rectangular: each action's row is minimized independently, and every
        # element of Q weights actions nonnegatively, so both orders coincide.
        rows, per_action = _tv_worst(s, w, alpha, gamma, instance)
        Q = cs.vertices(A)
        vals = Q @ per_action
        q = int(np.argmax(vals))
        return StateGameSolution(float(vals[q]), Q[q].copy(), rows, orientation)

    M = payoff_matrix(s, w, alpha, gamma, instance)
    if cs.variant == "finite":
        V = cs.distributions @ M
        Q = cs.distributions
    else:
        V = M
        Q = np.eye(A)

    if orientation is Orientation.INFSUP:
        col_max = V.max(axis=0)
        k = int(np.argmin(col_max))
        q = int(np.argmax(V[:, k]))
        return StateGameSolution(float(col_max[k]), Q[q].copy(), amb.kernels[k].copy(),
                                 orientation, 0.0, k)

    row_min = V.min(axis=1)
    q = int(np.argmax(row_min))
    pure_value = float(row_min[q])
    if cs.variant != "full_simplex" or V.shape[1] == 1 or pure_value >= V.max(axis=0).min():
        k = int(np.argmin(V[q]))
        return StateGameSolution(pure_value, Q[q].copy(), amb.kernels[k].copy(),
                                 orientation, 0.0, k)

    value, phi = solve_matrix_game(M)
    # certify: the mixed value must dominate every pure row and not exceed any column
    gap = max(0.0, pure_value - value)
    if gap > tol:
        raise ToleranceNotMet(f"state {s}: matrix game gap {gap:.3g} exceeds {tol:.3g}")
    k = int(np.argmin(phi @ M))
    return StateGameSolution(value, phi, amb.kernels[k].copy(), orientation, gap, k)


def solve_supinf(s, w, alpha, gamma, instance, tol=1e-9):
    """sup over phi in Q, inf over p_s in P_s, of the one-step payoff."""
    return _solve(s, w, alpha, gamma, instance, tol, Orientation.SUPINF)


def solve_infsup(s, w, alpha, gamma, instance, tol=1e-9):
    """inf over p_s in P_s, sup over phi in Q, of the one-step payoff."""
    return _solve(s, w, alpha, gamma, instance, tol, Orientation.INFSUP)


def solve_state(s, w, alpha, gamma, instance, orientation, tol=1e-9):
    return _solve(s, w, alpha, gamma, instance, tol, Orientation.parse(orientation))
