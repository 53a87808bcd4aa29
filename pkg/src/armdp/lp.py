"""Small dense linear programs: a two-phase tableau simplex with Bland's rule.

Problem form::

    maximize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x >= 0

Sizes here are tiny (a few dozen variables), so a full tableau is fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleProgram, UnboundedProgram

EPS = 1e-12


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T, basis, n_cols, max_iters):
    """Maximize the objective in the last row of T (stored as -c, Bland's rule)."""
    it = 0
    m = T.shape[0] - 1
    while True:
        obj = T[-1, :n_cols]
        enter = next((j for j in range(n_cols) if obj[j] < -EPS), None)
        if enter is None:
            return it
        col = T[:m, enter]
        best, leave = None, None
        for i in range(m):
            if col[i] > EPS:
                ratio = T[i, -1] / col[i]
                if (best is None or ratio < best - EPS
                        or (abs(ratio - best) <= EPS and basis[i] < basis[leave])):
                    best, leave = ratio, i
        if leave is None:
            raise UnboundedProgram("objective is unbounded")
        _pivot(T, leave, enter)
        basis[leave] = enter
        it += 1
        if it > max_iters:
            raise RuntimeError("simplex iteration limit reached")


def linprog_max(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iters=10_000):
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq

    # columns: x (n) | slacks (m_ub) | artificials (m) | rhs
    n_slack = m_ub
    n_main = n + n_slack
    T = np.zeros((m + 1, n_main + m + 1))
    basis = [0] * m
    for i in range(m_ub):
        sign = 1.0 if b_ub[i] >= 0 else -1.0
        T[i, :n] = sign * A_ub[i]
        T[i, n + i] = sign
        T[i, -1] = sign * b_ub[i]
    for k in range(m_eq):
        i = m_ub + k
        sign = 1.0 if b_eq[k] >= 0 else -1.0
        T[i, :n] = sign * A_eq[k]
        T[i, -1] = sign * b_eq[k]
    for i in range(m):
        T[i, n_main + i] = 1.0
        basis[i] = n_main + i
    # a <= row with nonnegative rhs can start on its slack instead
    for i in range(m_ub):
        if b_ub[i] >= 0:
            basis[i] = n + i
            T[i, n_main + i] = 0.0

    iters = 0
    artificial_rows = [i for i in range(m) if basis[i] >= n_main]
    if artificial_rows:
        # phase 1: maximize -sum(artificials)
        T[-1, :] = 0.0
        for i in artificial_rows:
            T[-1, :] -= T[i, :]
            T[-1, basis[i]] += 1.0
        iters += _run(T, basis, n_main + m, max_iters)
        if T[-1, -1] < -1e-9:
            raise InfeasibleProgram(f"phase 1 optimum {-T[-1, -1]:.3g} > 0")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= n_main:
                j = next((j for j in range(n_main) if abs(T[i, j]) > 1e-9), None)
                if j is None:
                    continue
                _pivot(T, i, j)
                basis[i] = j
            keep.append(i)
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        m = len(keep)
    T = np.hstack([T[:, :n_main], T[:, -1:]])
    T[-1, :] = 0.0
    T[-1, :n] = -c
    for i in range(m):
        j = basis[i]
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[i]
    iters += _run(T, basis, n_main, max_iters)
    x = np.zeros(n_main)
    for i in range(m):
        x[basis[i]] = T[i, -1]
    x = x[:n]
    return LpSolution(x=x, objective=float(c @ x), iterations=iters)


def solve_matrix_game(M):
    """Row player's maximin mixed strategy for payoff matrix M (rows maximize).

    Returns (value, phi) where value = min_j phi @ M[:, j].
    """
    M = np.asarray(M, dtype=float)
    n_rows, n_cols = M.shape
    shift = 1.0 - M.min()
    Mp = M + shift  # strictly positive, so the game value is positive
    # variables (phi_1..phi_n, t); maximize t
    c = np.zeros(n_rows + 1)
    c[-1] = 1.0
    A_ub = np.hstack([-Mp.T, np.ones((n_cols, 1))])
    b_ub = np.zeros(n_cols)
    A_eq = np.zeros((1, n_rows + 1))
    A_eq[0, :n_rows] = 1.0
    sol = linprog_max(c, A_ub, b_ub, A_eq, np.ones(1))
    phi = np.clip(sol.x[:n_rows], 0.0, None)
    phi /= phi.sum()
    value = float((phi @ M).min())
    return value, phi
