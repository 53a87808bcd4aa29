"""Worst-case and best-case responses over one state's adversary set P_s."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ExplosionGuard
from .model import FiniteKernels, SaTvBalls

DEFAULT_VERTEX_CAP = 10_000


@dataclass(frozen=True)
class ResponseResult:
    """Optimal inner response at one state.

    ``arg`` holds the chosen rows (|A| x |S|); ``index`` is the kernel index
    for finite sets and ``None`` for TV balls.
    """

    value: float
    arg: np.ndarray
    exact: bool = True
    index: int | None = None


def tv_extreme_row(p0, theta, w, worst=True):
    """Minimizer (or maximizer) of <p, w> over the TV ball of radius theta.

    Mass is taken from the highest-w coordinates (strictly above the minimum)
    and moved onto the single lowest-w coordinate, lowest index first on ties.
    """
    p0 = np.asarray(p0, dtype=float)
    w = np.asarray(w, dtype=float)
    key = w if worst else -w
    row = p0.copy()
    if theta <= 0.0:
        return row
    target = int(np.argmin(key))
    # donors: descending key, stable so equal keys keep index order
    order = np.argsort(-key, kind="stable")
    budget = float(theta)
    moved = 0.0
    for i in order:
        if key[i] <= key[target] or budget <= 0.0:
            break
        take = min(row[i], budget)
        if take > 0.0:
            row[i] -= take
            budget -= take
            moved += take
    row[target] += moved
    return row


def _check(instance, s, phi, w):
    if not 0 <= s < instance.n_states:
        raise DimensionMismatch(f"state {s} out of range")
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    if phi.shape != (instance.n_actions,):
        raise DimensionMismatch(f"phi has shape {phi.shape}, expected ({instance.n_actions},)")
    if w.shape != (instance.n_states,):
        raise DimensionMismatch(f"w has shape {w.shape}, expected ({instance.n_states},)")
    return phi, w


def _response(s, phi, w, instance, worst):
    phi, w = _check(instance, s, phi, w)
    amb = instance.ambiguity[s]
    if isinstance(amb, FiniteKernels):
        vals = np.einsum("kat,t,a->k", amb.kernels, w, phi)
        k = int(np.argmin(vals) if worst else np.argmax(vals))
        return ResponseResult(float(vals[k]), amb.kernels[k].copy(), True, k)
    rows = np.array([tv_extreme_row(amb.nominal[a], amb.radius[a], w, worst)
                     for a in range(instance.n_actions)])
    value = float(phi @ (rows @ w))
    return ResponseResult(value, rows, True, None)


def worst_case_expectation(s, phi, w, instance):
    """inf over p_s in P_s of sum_a phi(a) <p_s(.|a), w>."""
    return _response(s, phi, w, instance, worst=True)


def best_case_expectation(s, phi, w, instance):
    """sup over p_s in P_s of sum_a phi(a) <p_s(.|a), w>."""
    return _response(s, phi, w, instance, worst=False)


def extreme_kernels(s, instance, cap=DEFAULT_VERTEX_CAP):
    """Finite generating set of P_s for support questions.

    For TV balls: the nominal bundle, plus for each action and each ordered
    pair (i, j) the bundle whose row ``a`` moves min(theta, p0(i)) from i to j.
    """
    amb = instance.ambiguity[s]
    if isinstance(amb, FiniteKernels):
        if amb.n_choices > cap:
            raise ExplosionGuard(f"state {s}: {amb.n_choices} kernels exceed cap {cap}")
        return [amb.kernels[k] for k in range(amb.n_choices)]
    assert isinstance(amb, SaTvBalls)
    out = [np.array(amb.nominal)]
    seen = {out[0].tobytes()}
    S = instance.n_states
    for a in range(instance.n_actions):
        theta = float(amb.radius[a])
        if theta <= 0.0:
            continue
        p0 = amb.nominal[a]
        for i in range(S):
            if p0[i] <= 0.0:
                continue
            for j in range(S):
                if j == i:
                    continue
                bundle = np.array(amb.nominal)
                take = min(theta, p0[i])
                bundle[a, i] -= take
                bundle[a, j] += take
                key = bundle.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                out.append(bundle)
                if len(out) > cap:
                    raise ExplosionGuard(f"state {s}: more than {cap} extreme kernels")
    return out


def tv_margin_ok(instance):
    """True when every TV radius is below the smallest positive nominal mass.

    Under that margin no feasible row can drop a nominal support entry, so
    extreme kernels represent every support pattern up to edge additions.
    """
    for amb in instance.ambiguity:
        if not isinstance(amb, SaTvBalls):
            continue
        for a in range(instance.n_actions):
            theta = amb.radius[a]
            if theta <= 0.0:
                continue
            pos = amb.nominal[a][amb.nominal[a] > 0]
            if theta >= pos.min():
                return False
    return True
