"""Constant-gain solutions by the vanishing-discount method, their verification,
epsilon-optimal policy extraction and duality reporting."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import worst_case_expectation
from .bellman import (SpanRecord, boundedness_verdict, span, state_solutions,
                      strategy_iteration)
from .errors import ExtractionFailed
from .game import Orientation, evaluate, solve_state
from .model import FiniteKernels, StationaryControllerPolicy
from .structure import structure_report

CONVERGED = "converged"
SPAN_UNBOUNDED = "span_unbounded"
INCONCLUSIVE = "inconclusive"


def default_schedule(k_min=4, k_max=20):
    return [1.0 - 2.0 ** (-k) for k in range(k_min, k_max + 1)]


@dataclass
class GainSolution:
    u: np.ndarray
    alpha: float
    orientation: Orientation
    residual: float
    gamma_trace: list
    verdict: str
    span_records: list = field(default_factory=list)

    @property
    def converged(self):
        return self.verdict == CONVERGED

    def to_json(self):
        return {"orientation": self.orientation.value, "alpha": self.alpha,
                "u": [float(x) for x in self.u], "residual": self.residual,
                "verdict": self.verdict, "gamma_trace": list(self.gamma_trace)}


def verify_constant_gain(u, alpha, orientation, instance):
    """max_s |u(s) - (state game with w = u, gamma = 1, gain shift alpha)|."""
    u = np.asarray(u, dtype=float)
    sols = state_solutions(u, alpha, 1.0, orientation, instance)
    return float(max(abs(u[s] - sol.value) for s, sol in enumerate(sols)))


def _evaluate_average(instance, phis, rows, ref):
    """Solve u - P u + alpha = r_Delta with u(ref) = 0 (least squares if singular)."""
    S = instance.n_states
    P = np.einsum("sa,sat->st", phis, rows)
    r = np.einsum("sa,sa->s", phis, instance.reward)
    A = np.zeros((S + 1, S + 1))
    A[:S, :S] = np.eye(S) - P
    A[:S, S] = 1.0
    A[S, ref] = 1.0
    b = np.append(r, 0.0)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x[:S], float(x[S])


def _greedy_pair(u, alpha, orientation, instance):
    sols = state_solutions(u, alpha, 1.0, orientation, instance)
    return (np.array([s.controller_choice for s in sols]),
            np.array([s.adversary_choice for s in sols]))


def _pick(candidates, orientation, instance):
    best = None
    for u, a in candidates:
        if not (np.all(np.isfinite(u)) and np.isfinite(a)):
            continue
        res = verify_constant_gain(u, a, orientation, instance)
        if best is None or res < best[2]:
            best = (u, a, res)
    return best


def _finish(u, alpha, orientation, residual, trace, verdict, records):
    u = np.asarray(u, dtype=float)
    return GainSolution(u - u.min(), float(np.clip(alpha, 0.0, 1.0)), orientation,
                        float(residual), list(trace), verdict, list(records))


def solve_constant_gain(orientation, instance, gammas=None, tol=1e-6, ref_state=0):
    """Vanishing-discount solve of the constant-gain equation.

    For each gamma the exact discounted fixed point v is found (warm-started
    strategy iteration) and three candidate pairs are scored by their
    constant-gain residual: the normalized pair (v - v(ref), (1 - gamma) v(ref)),
    its one-step Richardson extrapolation, and the exact average-reward
    evaluation of the policy pair the discounted solve settled on.
    """
    orientation = Orientation.parse(orientation)
    gammas = default_schedule() if gammas is None else [float(g) for g in gammas]
    if any(b <= a for a, b in zip(gammas, gammas[1:])) or not all(0 < g < 1 for g in gammas):
        raise ValueError("schedule must be ascending inside (0, 1)")
    trace, records = [], []
    warm, prev, prev_raw, best = None, None, None, None
    for g in gammas:
        v, phis, rows, _ = strategy_iteration(g, orientation, instance, warm=warm)
        warm = (phis, rows)
        trace.append(g)
        records.append(SpanRecord(g, span(v), (1.0 - g) * float(v[ref_state])))
        if boundedness_verdict(records, tol) == "unbounded":
            u_raw = v - v[ref_state]
            a_raw = (1.0 - g) * float(v[ref_state])
            res = verify_constant_gain(u_raw, a_raw, orientation, instance)
            return _finish(u_raw, a_raw, orientation, res, trace, SPAN_UNBOUNDED, records)

        raw = (v - v[ref_state], (1.0 - g) * float(v[ref_state]))
        candidates = [raw, _evaluate_average(instance, phis, rows, ref_state)]
        gp, gr = _greedy_pair(raw[0], raw[1], orientation, instance)
        candidates.append(_evaluate_average(instance, gp, gr, ref_state))
        if prev_raw is not None:
            # error is O(1 - gamma) and the schedule halves 1 - gamma
            ratio = (1.0 - g) / (1.0 - prev_raw[2])
            w = 1.0 / (1.0 - ratio)
            candidates.append((w * raw[0] + (1 - w) * prev_raw[0], w * raw[1] + (1 - w) * prev_raw[1]))
        prev_raw = (raw[0], raw[1], g)
        best = _pick(candidates, orientation, instance)
        if prev is not None:
            diff = max(float(np.abs(best[0] - prev[0]).max()), abs(best[1] - prev[1]))
            if diff < tol / 2 and best[2] < tol:
                return _finish(best[0], best[1], orientation, best[2], trace, CONVERGED, records)
        prev = best
    return _finish(best[0], best[1], orientation, best[2], trace, INCONCLUSIVE, records)


def relative_value_iteration(orientation, instance, tol=1e-6, max_iters=100_000, ref_state=0,
                             damping=0.5):
    """Experimental comparison solver; carries no convergence guarantee in the
    robust multichain setting, so the vanishing-discount path stays the default.

    Iterates h <- (1 - damping) h + damping (T h - (T h)(ref)) with T the
    undiscounted state-game operator; the damping removes periodicity.
    """
    orientation = Orientation.parse(orientation)
    h = np.zeros(instance.n_states)
    res = np.inf
    for it in range(1, max_iters + 1):
        th = np.array([sol.value for sol in state_solutions(h, 0.0, 1.0, orientation, instance)])
        diff = th - h
        res = span(diff)
        h = (1.0 - damping) * h + damping * (th - th[ref_state])
        if res <= tol * damping:
            alpha = 0.5 * (diff.max() + diff.min())
            r = verify_constant_gain(h, alpha, orientation, instance)
            verdict = CONVERGED if r <= tol else INCONCLUSIVE
            return _finish(h, alpha, orientation, r, [], verdict, [])
    diff_mid = 0.5 * (diff.max() + diff.min())
    return _finish(h, diff_mid, orientation, verify_constant_gain(h, diff_mid, orientation, instance),
                   [], INCONCLUSIVE, [])


def extract_policy(u, alpha, instance, eps, tie=1e-9):
    """Stationary controller whose worst-case one-step evaluation is eps-close to u.

    Each state takes the lowest-index element of Q within ``tie`` of the best
    worst-case value; the bound u(s) <= inf_p E[r - alpha + u(X1)] + eps is
    re-checked before returning.
    """
    u = np.asarray(u, dtype=float)
    cs = instance.controller_set
    probs = []
    for s in range(instance.n_states):
        if cs.variant == "full_simplex":
            sol = solve_state(s, u, alpha, 1.0, instance, Orientation.SUPINF)
            phi, worst = sol.controller_choice, sol.value
        else:
            Q = cs.vertices(instance.n_actions)
            vals = np.array([_worst_eval(s, q, u, alpha, instance) for q in Q])
            k = int(np.flatnonzero(vals >= vals.max() - tie)[0])
            phi, worst = Q[k], float(vals[k])
        if u[s] > worst + eps:
            raise ExtractionFailed(f"state {s}: best worst-case value {worst:.6g} is more than "
                                   f"{eps:.3g} below u = {u[s]:.6g}")
        probs.append(phi)
    return StationaryControllerPolicy(np.array(probs))


def _worst_eval(s, q, u, alpha, instance):
    amb = instance.ambiguity[s]
    if isinstance(amb, FiniteKernels):
        return min(evaluate(s, q, k, u, alpha, 1.0, instance) for k in amb.kernels)
    resp = worst_case_expectation(s, q, u, instance)
    return float(q @ instance.reward[s]) - alpha + resp.value


@dataclass
class DualityReport:
    alpha_supinf: float
    alpha_infsup: float
    gap: float
    stationary_optimal_hd_s: bool | None
    verdict: str
    supinf: GainSolution
    infsup: GainSolution
    structure: object = None

    def to_json(self):
        out = {"alpha_supinf": self.alpha_supinf, "alpha_infsup": self.alpha_infsup,
               "gap": self.gap, "stationary_optimal_hd_s": self.stationary_optimal_hd_s,
               "verdict": self.verdict, "supinf": self.supinf.to_json(),
               "infsup": self.infsup.to_json()}
        if self.structure is not None:
            out["structure"] = self.structure.to_json()
        return out


def duality_report(instance, tol=1e-6, gammas=None, with_structure=False):
    """Solve both orientations (concurrently) and compare their gains."""
    with ThreadPoolExecutor(max_workers=2) as pool:
        fut = {o: pool.submit(solve_constant_gain, o, instance, gammas, tol)
               for o in (Orientation.SUPINF, Orientation.INFSUP)}
        lo, hi = fut[Orientation.SUPINF].result(), fut[Orientation.INFSUP].result()
    gap = hi.alpha - lo.alpha
    both = lo.converged and hi.converged
    verdict = CONVERGED if both else INCONCLUSIVE
    structure = None
    if with_structure:
        structure = structure_report(instance)
    return DualityReport(lo.alpha, hi.alpha, gap, (abs(gap) <= tol) if both else None,
                         verdict, lo, hi, structure)
