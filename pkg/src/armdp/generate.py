"""Random tiny instances for property tests and oracle comparisons."""

from __future__ import annotations

import math

import numpy as np

from .model import ControllerSet, FiniteKernels, RobustMdpInstance, SaTvBalls


def _random_row(rng, n, sparsity):
    row = rng.random(n)
    if sparsity > 0:
        keep = rng.random(n) >= sparsity
        keep[rng.integers(n)] = True
        row = row * keep
    row = row / row.sum()
    # snap to a coarse grid so rows are exactly representable-ish and sum to 1 exactly
    row = np.round(row, 3)
    row[np.argmax(row)] += 1.0 - row.sum()
    return np.clip(row, 0.0, 1.0)


def policy_pairs(S, A, K, ambiguity):
    """Deterministic controllers times enumerable adversaries (TV: at most S! vertex rows per action)."""
    per_state = K if ambiguity == "finite" else math.factorial(S) ** A
    return A ** S * per_state ** S


def random_instance(rng, n_states=None, n_actions=None, n_kernels=None, ambiguity="finite",
                    controller="dirac_only", sparsity=0.5, max_radius=0.3, max_pairs=1000):
    """Draw a small random instance.

    Sizes not given are drawn so that the number of stationary policy pairs an
    exhaustive enumeration would visit stays under ``max_pairs``; sizes that
    are all given are taken as they are.
    """
    rng = np.random.default_rng(rng)
    fixed = n_states and n_actions and (n_kernels or ambiguity != "finite")
    while True:
        S = n_states or int(rng.integers(2, 5))
        A = n_actions or int(rng.integers(1, 4))
        K = n_kernels or int(rng.integers(1, 4))
        if fixed or policy_pairs(S, A, K, ambiguity) <= max_pairs:
            break
    reward = np.round(rng.random((S, A)), 3)
    amb = []
    for _ in range(S):
        if ambiguity == "finite":
            kernels = np.array([[_random_row(rng, S, sparsity) for _ in range(A)] for _ in range(K)])
            amb.append(FiniteKernels(kernels))
        else:
            nominal = np.array([_random_row(rng, S, sparsity) for _ in range(A)])
            amb.append(SaTvBalls(nominal, np.round(rng.random(A) * max_radius, 3)))
    if controller == "finite":
        dists = [np.eye(A)[a] for a in range(A)]
        for _ in range(int(rng.integers(1, 3))):
            dists.append(_random_row(rng, A, 0.0))
        cs = ControllerSet.finite(np.array(dists))
    elif controller == "full_simplex":
        cs = ControllerSet.full_simplex()
    else:
        cs = ControllerSet.dirac_only()
    return RobustMdpInstance(S, A, reward, cs, amb)
