"""Trajectory simulation of the controller-adversary dynamics.

Each trajectory draws from its own counter-based stream,
``Philox(key=seed, counter=[0, 0, 0, trajectory])``, so results do not depend
on how trajectories are scheduled. The inner stepping loop is compiled with
numba when it is importable and runs as plain Python otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import extreme_kernels
from .errors import PreconditionFailed, ValidationError
from .gain import duality_report
from .model import StationaryAdversaryPolicy, StationaryControllerPolicy
from .oracle import solve_average_mdp
from .structure import check_adversary_communication

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

HORIZON_CAP = 10**6
BLOCK = 1 << 15


# ---------------------------------------------------------------------------
# Policy specifications


@dataclass(frozen=True)
class Stationary:
    probs: np.ndarray


@dataclass(frozen=True)
class TwoPhaseController:
    """Play ``eta`` until the chain first sits at ``y``, then ``delta``."""

    eta: np.ndarray
    delta: np.ndarray
    y: int


@dataclass(frozen=True)
class LearnerConfig:
    initial_epoch: int = 32
    epsilon_scale: float = 10.0


@dataclass(frozen=True)
class ModelBasedLearner:
    config: LearnerConfig = field(default_factory=LearnerConfig)


@dataclass(frozen=True)
class StationaryAdversary:
    kernel: np.ndarray


@dataclass(frozen=True)
class TwoPhaseAdversary:
    """Play ``q`` until the chain first sits at ``y``, then ``p``."""

    q: np.ndarray
    p: np.ndarray
    y: int


def _probs(x):
    if isinstance(x, StationaryControllerPolicy):
        return np.asarray(x.probs, dtype=float)
    return np.asarray(x, dtype=float)


def _kernel(x):
    if isinstance(x, StationaryAdversaryPolicy):
        return np.asarray(x.kernel, dtype=float)
    return np.asarray(x, dtype=float)


def _controller_tables(spec, S, A):
    """(2, S, A) cumulative tables for the pre- and post-switch phase, plus y."""
    if isinstance(spec, Stationary):
        p = _probs(spec.probs)
        pre = post = p
        y = -1
    elif isinstance(spec, TwoPhaseController):
        pre, post, y = _probs(spec.eta), _probs(spec.delta), int(spec.y)
    else:
        raise TypeError(f"not a fixed controller spec: {spec!r}")
    if pre.shape != (S, A) or post.shape != (S, A):
        raise ValidationError(f"controller tables must be {S} x {A}", "controller")
    return np.cumsum(np.stack([pre, post]), axis=-1), y


def _adversary_tables(spec, S, A):
    if isinstance(spec, StationaryAdversary):
        k = _kernel(spec.kernel)
        pre = post = k
        y = -1
    elif isinstance(spec, TwoPhaseAdversary):
        pre, post, y = _kernel(spec.q), _kernel(spec.p), int(spec.y)
    else:
        raise TypeError(f"not an adversary spec: {spec!r}")
    if pre.shape != (S, A, S) or post.shape != (S, A, S):
        raise ValidationError(f"adversary kernels must be {S} x {A} x {S}", "adversary")
    return np.cumsum(np.stack([pre, post]), axis=-1), y


# ---------------------------------------------------------------------------
# Compiled kernels


@njit(cache=True)
def _pick(cdf, u):
    n = cdf.shape[0]
    for i in range(n):
        if u < cdf[i]:
            return i
    # guard against cumulative sums ending a hair below 1
    for i in range(n - 1, -1, -1):
        if i == 0 or cdf[i] > cdf[i - 1]:
            return i
    return n - 1


@njit(cache=True)
def _advance(x, phase, t0, n, uni, cdf_c, cdf_a, y_c, y_a, y_hit, reward, eps_scale, counts,
             acc, tail_start, thin, series, log):
    """Advance one trajectory by n steps.

    phase[0] / phase[1] are the controller / adversary switch flags.
    acc = [kahan sum, kahan carry, tail max, tail min, first step at y_hit or -1].
    log (n x 4, or empty) receives (state, action, controller phase, adversary phase).
    """
    A = cdf_c.shape[2]
    for i in range(n):
        t = t0 + i
        if acc[4] < 0 and x == y_hit:
            acc[4] = t
        if phase[0] == 0 and x == y_c:
            phase[0] = 1
        if phase[1] == 0 and x == y_a:
            phase[1] = 1
        if eps_scale > 0.0 and uni[3 * i] < min(1.0, eps_scale / math.sqrt(t + 1.0)):
            a = min(int(uni[3 * i + 1] * A), A - 1)
        else:
            a = _pick(cdf_c[phase[0], x], uni[3 * i + 1])
        nxt = _pick(cdf_a[phase[1], x, a], uni[3 * i + 2])
        if log.shape[0] > 0:
            log[i, 0] = x
            log[i, 1] = a
            log[i, 2] = phase[0]
            log[i, 3] = phase[1]
        counts[x, a, nxt] += 1
        yv = reward[x, a] - acc[1]
        s = acc[0] + yv
        acc[1] = (s - acc[0]) - yv
        acc[0] = s
        k = t + 1
        avg = acc[0] / k
        if k >= tail_start:
            if avg > acc[2]:
                acc[2] = avg
            if avg < acc[3]:
                acc[3] = avg
        if k % thin == 0:
            series[k // thin - 1] = avg
        x = nxt
    return x


@njit(cache=True)
def _until_hit(x, y, cdf_c, cdf_a, uni):
    """Step until x == y or the uniforms run out; returns (state, steps, hit)."""
    n = uni.shape[0] // 2
    for i in range(n):
        if x == y:
            return x, i, True
        a = _pick(cdf_c[x], uni[2 * i])
        x = _pick(cdf_a[x, a], uni[2 * i + 1])
    return x, n, x == y


# ---------------------------------------------------------------------------
# Running


def trajectory_rng(seed, trajectory):
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(trajectory)]))


@dataclass
class RunStats:
    n_steps: int
    n_trajectories: int
    seed: int
    final_means: np.ndarray
    tail_max: np.ndarray
    tail_min: np.ndarray
    series: np.ndarray
    thin: int
    hitting_times: np.ndarray

    @property
    def mean(self):
        return float(self.final_means.mean())

    @property
    def stderr(self):
        n = self.n_trajectories
        if n < 2:
            return float("nan")
        return float(self.final_means.std(ddof=1) / math.sqrt(n))

    def to_json(self):
        se = self.stderr
        return {"n_steps": self.n_steps, "n_trajectories": self.n_trajectories,
                "seed": self.seed, "mean": self.mean,
                "stderr": None if math.isnan(se) else se,
                "limsup_proxy": float(self.tail_max.max()),
                "liminf_proxy": float(self.tail_min.min()),
                "final_means": self.final_means.tolist(),
                "hitting_times": self.hitting_times.tolist()}

    def series_csv(self):
        lines = ["step," + ",".join(f"traj{j}" for j in range(self.n_trajectories))]
        for i in range(self.series.shape[1]):
            step = (i + 1) * self.thin
            lines.append(f"{step}," + ",".join(f"{v:.17g}" for v in self.series[:, i]))
        return "\n".join(lines) + "\n"


def _initial_state(rng, mu):
    return int(np.searchsorted(np.cumsum(mu), rng.random(), side="right").clip(0, len(mu) - 1))


def _check_mu(instance, mu):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (instance.n_states,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise ValidationError("initial distribution must be a probability vector over S", "mu")
    return mu


def _greedy_cdf(actions, S, A):
    probs = np.zeros((S, A))
    probs[np.arange(S), list(actions)] = 1.0
    c = np.cumsum(probs, axis=-1)
    return np.stack([c, c])


def _estimate_kernel(counts):
    tot = counts.sum(axis=2, keepdims=True)
    S = counts.shape[0]
    est = np.where(tot > 0, counts / np.maximum(tot, 1), 1.0 / S)
    return est


def run(instance, mu, controller, adversary, n_steps, n_trajectories=1, seed=0, thin=None,
        log=False, target=None):
    """Simulate ``n_trajectories`` independent runs of ``n_steps`` each.

    Hitting times are recorded for ``target`` (default: the switching state of
    a two-phase spec, if any).
    """
    if n_steps < 1 or n_trajectories < 1:
        raise ValueError("n_steps and n_trajectories must be positive")
    S, A = instance.shape
    mu = _check_mu(instance, mu)
    reward = np.ascontiguousarray(instance.reward, dtype=float)
    cdf_a, y_a = _adversary_tables(adversary, S, A)
    learner = isinstance(controller, ModelBasedLearner)
    if learner:
        if not instance.controller_set.contains_diracs(A):
            raise PreconditionFailed("the learner needs every Dirac decision to be in Q")
        cdf_c, y_c = _greedy_cdf([0] * S, S, A), -1
        eps_scale = float(controller.config.epsilon_scale)
    else:
        cdf_c, y_c = _controller_tables(controller, S, A)
        eps_scale = 0.0
    thin = thin or max(1, n_steps // 1000)
    n_points = n_steps // thin
    tail_start = n_steps - n_steps // 3

    finals = np.zeros(n_trajectories)
    tmax = np.zeros(n_trajectories)
    tmin = np.zeros(n_trajectories)
    series = np.zeros((n_trajectories, n_points))
    hits = np.full(n_trajectories, -1, dtype=np.int64)
    y_hit = int(target) if target is not None else (y_c if y_c >= 0 else y_a)
    logs = []
    for j in range(n_trajectories):
        rng = trajectory_rng(seed, j)
        x = _initial_state(rng, mu)
        phase = np.zeros(2, dtype=np.int64)
        acc = np.array([0.0, 0.0, -np.inf, np.inf, -1.0])
        counts = np.zeros((S, A, S), dtype=np.int64)
        cc = cdf_c.copy()
        epoch = controller.config.initial_epoch if learner else BLOCK
        t = 0
        log_rows = []
        while t < n_steps:
            n = min(epoch, n_steps - t)
            uni = rng.random(3 * n)
            lg = np.zeros((n if log else 0, 4), dtype=np.int64)
            x = _advance(x, phase, t, n, uni, cc, cdf_a, y_c, y_a, y_hit, reward, eps_scale,
                         counts, acc, tail_start, thin, series[j], lg)
            if log:
                log_rows.append(lg)
            t += n
            if learner:
                epoch *= 2
                cc = _greedy_cdf(solve_average_mdp(_estimate_kernel(counts), reward), S, A)
        finals[j] = acc[0] / n_steps
        tmax[j], tmin[j] = acc[2], acc[3]
        hits[j] = int(acc[4])
        if log:
            logs.append(np.vstack(log_rows))
    stats = RunStats(n_steps, n_trajectories, seed, finals, tmax, tmin, series, thin, hits)
    if log:
        return stats, logs
    return stats


def sample_path(instance, mu, controller, adversary, n_steps, seed=0):
    """Instrumented single trajectory: rows of (state, action, ctrl phase, adv phase)."""
    _, logs = run(instance, mu, controller, adversary, n_steps, 1, seed, thin=1, log=True)
    return logs[0]


# ---------------------------------------------------------------------------
# Hitting times


@dataclass
class HittingEstimate:
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    within_s_fraction: float
    horizon_exceeded: int
    times: np.ndarray


def estimate_hitting_time(instance, controller, adversary, y, n_trajectories=10_000, seed=0,
                          start=None, mu=None, max_steps=HORIZON_CAP):
    """Monte Carlo estimate of E tau_y with tau_y = inf{k >= 0 : X_k = y}.

    Trajectories exceeding ``max_steps`` are counted in ``horizon_exceeded``
    and enter the mean at the cap.
    """
    S, A = instance.shape
    D = _probs(controller)
    K = _kernel(adversary)
    cdf_c = np.cumsum(D, axis=-1)
    cdf_a = np.cumsum(K, axis=-1)
    if start is None and mu is None:
        raise ValueError("give a start state or an initial distribution")
    if mu is not None:
        mu = _check_mu(instance, mu)
    times = np.zeros(n_trajectories, dtype=np.int64)
    exceeded = 0
    for j in range(n_trajectories):
        rng = trajectory_rng(seed, j)
        x = int(start) if start is not None else _initial_state(rng, mu)
        steps, hit, block = 0, x == y, 64
        while not hit and steps < max_steps:
            n = min(block, max_steps - steps)
            x, used, hit = _until_hit(x, y, cdf_c, cdf_a, rng.random(2 * n))
            steps += used
            block = min(block * 4, BLOCK)
        if not hit:
            exceeded += 1
        times[j] = steps
    mean = float(times.mean())
    se = float(times.std(ddof=1) / math.sqrt(n_trajectories)) if n_trajectories > 1 else 0.0
    return HittingEstimate(mean, se, mean - 1.96 * se, mean + 1.96 * se,
                           float((times <= S).mean()), exceeded, times)


# ---------------------------------------------------------------------------
# HD-S demonstration


def stationary_adversaries(instance, cap=256):
    """All stationary adversaries built from per-state extreme kernels."""
    per_state = [extreme_kernels(s, instance) for s in range(instance.n_states)]
    total = int(np.prod([len(x) for x in per_state], dtype=float))
    if total > cap:
        raise PreconditionFailed(f"{total} stationary adversaries exceed the demo cap {cap}")
    return [np.array(c) for c in itertools.product(*per_state)]


def hd_s_gap_demo(instance, tol=1e-6, seed=0, n_steps=10**5, n_trajectories=4, mu=None,
                  config=None):
    """Play the learner against every extreme stationary adversary.

    The reported learner mean is the minimum over adversaries. On instances
    with a duality gap the demo passes when that minimum clears the midpoint
    between the sup-inf and inf-sup gains (less three standard errors).
    """
    comm = check_adversary_communication(instance)
    if not comm.weakly:
        raise PreconditionFailed("the adversary is not weakly communicating")
    rep = duality_report(instance, tol)
    S = instance.n_states
    mu = np.ones(S) / S if mu is None else mu
    learner = ModelBasedLearner(config or LearnerConfig())
    per_adv = []
    for k, kernel in enumerate(stationary_adversaries(instance)):
        st = run(instance, mu, learner, StationaryAdversary(kernel), n_steps, n_trajectories,
                 seed)
        se = st.stderr
        per_adv.append({"adversary": k, "mean": st.mean, "stderr": 0.0 if math.isnan(se) else se})
    worst = min(per_adv, key=lambda d: d["mean"])
    gap = rep.gap
    if rep.verdict == "converged" and gap > tol:
        threshold = rep.alpha_supinf + 0.5 * gap - 3 * worst["stderr"]
        passed = worst["mean"] >= threshold
        note = "gap instance"
    else:
        threshold = None
        passed = True
        note = "no duality gap: degenerate pass"
    return {
        "alpha_star": rep.alpha_supinf,
        "alpha_prime": rep.alpha_infsup,
        "gap": gap,
        "duality_verdict": rep.verdict,
        "stationary_optimal_hd_s": rep.stationary_optimal_hd_s,
        "learner_longrun_mean": worst["mean"],
        "learner_stderr": worst["stderr"],
        "worst_adversary": worst["adversary"],
        "per_adversary": per_adv,
        "threshold": threshold,
        "passed": bool(passed),
        "note": note,
        "seed": seed,
        "n_steps": n_steps,
        "n_trajectories": n_trajectories,
    }
