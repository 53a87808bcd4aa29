"""Discounted robust Bellman operators, fixed-point solvers and span diagnostics."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .ambiguity import worst_case_expectation
from .errors import MaxItersExceeded
from .game import Orientation, solve_state
from .model import FiniteKernels


@dataclass(frozen=True)
class ValueFunction:
    values: np.ndarray
    gamma: float
    orientation: Orientation
    residual: float
    iterations: int
    method: str = "vi"


@dataclass(frozen=True)
class SpanRecord:
    gamma: float
    span: float
    alpha_proxy: float


def state_solutions(v, alpha, gamma, orientation, instance, tol=1e-9):
    orientation = Orientation.parse(orientation)
    return [solve_state(s, v, alpha, gamma, instance, orientation, tol)
            for s in range(instance.n_states)]


def apply_operator(v, gamma, orientation, instance, tol=1e-9):
    """One synchronous sweep of T_gamma: (T v)(s) = state game value with w = v."""
    v = np.asarray(v, dtype=float)
    sols = state_solutions(v, 0.0, gamma, orientation, instance, tol)
    return np.array([sol.value for sol in sols])


def span(v):
    v = np.asarray(v, dtype=float)
    return float(v.max() - v.min())


# ---------------------------------------------------------------------------
# Strategy iteration (exact up to linear-solve precision)


def _tie(gamma):
    return 1e-13 * max(1.0, 1.0 / (1.0 - gamma)) if gamma < 1.0 else 1e-10


def _evaluate_pair(instance, phis, rows, gamma):
    P = np.einsum("sa,sat->st", phis, rows)
    r = np.einsum("sa,sa->s", phis, instance.reward)
    return np.linalg.solve(np.eye(instance.n_states) - gamma * P, r)


def _adversary_rows_init(instance):
    rows = []
    for amb in instance.ambiguity:
        rows.append(amb.kernels[0] if isinstance(amb, FiniteKernels) else amb.nominal)
    return np.array(rows, dtype=float)


def _best_adversary_reply(instance, phis, gamma, rows=None, max_rounds=10_000):
    """Minimizing adversary against a fixed controller: policy iteration."""
    rows = _adversary_rows_init(instance) if rows is None else rows.copy()
    tie = _tie(gamma)
    for _ in range(max_rounds):
        v = _evaluate_pair(instance, phis, rows, gamma)
        changed = False
        for s in range(instance.n_states):
            resp = worst_case_expectation(s, phis[s], v, instance)
            current = float(phis[s] @ (rows[s] @ v))
            if gamma * resp.value < gamma * current - tie:
                rows[s] = resp.arg
                changed = True
        if not changed:
            return v, rows
    raise MaxItersExceeded("adversary policy iteration did not stabilize", iterations=max_rounds)


def _best_controller_reply(instance, rows, gamma, phis=None, max_rounds=10_000):
    """Maximizing controller against fixed adversary rows: policy iteration over Q."""
    Q = instance.controller_set.vertices(instance.n_actions)
    if phis is None:
        phis = np.tile(Q[0], (instance.n_states, 1))
    phis = phis.copy()
    tie = _tie(gamma)
    for _ in range(max_rounds):
        v = _evaluate_pair(instance, phis, rows, gamma)
        changed = False
        for s in range(instance.n_states):
            per_action = instance.reward[s] + gamma * (rows[s] @ v)
            vals = Q @ per_action
            q = int(np.argmax(vals))
            if vals[q] > float(phis[s] @ per_action) + tie:
                phis[s] = Q[q]
                changed = True
        if not changed:
            return v, phis
    raise MaxItersExceeded("controller policy iteration did not stabilize", iterations=max_rounds)


def strategy_iteration(gamma, orientation, instance, tol=1e-9, max_iters=10_000, warm=None):
    """Exact discounted solve; returns (v, controller phis, adversary rows).

    Sup-inf: the controller improves against the adversary's exact best reply.
    Inf-sup: the adversary improves against the controller's exact best reply.
    ``warm`` is an optional (phis, rows) pair to start from.
    """
    orientation = Orientation.parse(orientation)
    S = instance.n_states
    tie = _tie(gamma)
    if warm is not None:
        phis, rows = (np.array(x, dtype=float) for x in warm)
    else:
        sols = state_solutions(np.zeros(S), 0.0, gamma, orientation, instance, tol)
        phis = np.array([sol.controller_choice for sol in sols])
        rows = np.array([sol.adversary_choice for sol in sols])
    for it in range(1, max_iters + 1):
        if orientation is Orientation.SUPINF:
            v, rows = _best_adversary_reply(instance, phis, gamma, rows)
        else:
            v, phis = _best_controller_reply(instance, rows, gamma, phis)
        sols = state_solutions(v, 0.0, gamma, orientation, instance, tol)
        changed = False
        for s, sol in enumerate(sols):
            if orientation is Orientation.SUPINF and sol.value > v[s] + tie:
                phis[s] = sol.controller_choice
                changed = True
            elif orientation is Orientation.INFSUP and sol.value < v[s] - tie:
                rows[s] = sol.adversary_choice
                changed = True
        if not changed:
            return v, phis, rows, it
    raise MaxItersExceeded("strategy iteration did not stabilize", iterations=max_iters)


def solve_discounted(gamma, orientation, instance, tol=1e-8, max_iters=1_000_000,
                     method="vi", v0=None):
    """Fixed point of T_gamma.

    ``method="vi"`` runs synchronous value iteration from ``v0`` (default 0)
    until ||T v - v|| <= tol (1 - gamma) / (2 gamma). ``method="exact"`` runs
    strategy iteration and reports the final one-sweep residual.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    orientation = Orientation.parse(orientation)
    if method == "exact":
        v, _, _, it = strategy_iteration(gamma, orientation, instance)
        res = float(np.abs(apply_operator(v, gamma, orientation, instance) - v).max())
        return ValueFunction(v, gamma, orientation, res, it, "exact")
    if method != "vi":
        raise ValueError(f"unknown method {method!r}")
    threshold = tol * (1.0 - gamma) / (2.0 * gamma)
    v = np.zeros(instance.n_states) if v0 is None else np.array(v0, dtype=float)
    res = np.inf
    for it in range(1, max_iters + 1):
        tv = apply_operator(v, gamma, orientation, instance)
        res = float(np.abs(tv - v).max())
        v = tv
        if res <= threshold:
            return ValueFunction(v, gamma, orientation, res, it, "vi")
    raise MaxItersExceeded(f"value iteration: residual {res:.3g} after {max_iters} sweeps",
                           last_residual=res, iterations=max_iters)


def span_curve(gammas, orientation, instance, tol=1e-8, method="exact", ref_state=0):
    gammas = [float(g) for g in gammas]
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma grid must be strictly ascending")
    out = []
    for g in gammas:
        vf = solve_discounted(g, orientation, instance, tol=tol, method=method)
        out.append(SpanRecord(g, span(vf.values), (1.0 - g) * float(vf.values[ref_state])))
    return out


def span_growth_fit(records):
    """Least-squares fit span ~ a + c / (1 - gamma); returns (c, r_squared)."""
    x = np.array([1.0 / (1.0 - r.gamma) for r in records])
    y = np.array([r.span for r in records])
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 0.0
    return float(coef[1]), r2


def boundedness_verdict(records, tol=1e-6, window=4):
    """Heuristic verdict from the last ``window`` points: bounded, unbounded or inconclusive."""
    if len(records) < window:
        return "inconclusive"
    tail = records[-window:]
    c, r2 = span_growth_fit(tail)
    if r2 > 0.999 and c > 10 * tol:
        return "unbounded"
    spans = [r.span for r in tail]
    if max(spans) - min(spans) <= max(10 * tol, 1e-3 * max(1.0, max(spans))):
        return "bounded"
    return "inconclusive"


def span_curve_csv(records):
    buf = io.StringIO()
    buf.write("gamma,span,alpha_proxy\n")
    for r in records:
        buf.write(f"{r.gamma:.17g},{r.span:.17g},{r.alpha_proxy:.17g}\n")
    return buf.getvalue()
