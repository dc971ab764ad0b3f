"""Seeded random Markov chains shared by the oracle and property tests."""

from __future__ import annotations

import numpy as np


def random_absorbing_chain(seed: int, n: int, n_absorbing: int = 2, dag: bool = False,
                           max_out: int = 4) -> tuple[np.ndarray, int]:
    """Row-stochastic matrix whose last ``n_absorbing`` states are absorbing.

    Every transient state has an edge to a strictly later state, so absorption
    happens with probability 1. With ``dag`` all edges point forward.
    """
    rng = np.random.default_rng(seed)
    n_absorbing = max(1, min(n_absorbing, n - 1))
    P = np.zeros((n, n))
    for i in range(n - n_absorbing):
        forward = rng.integers(i + 1, n)
        targets = {int(forward)}
        for _ in range(rng.integers(0, max_out)):
            lo = i + 1 if dag else 0
            targets.add(int(rng.integers(lo, n)))
        w = rng.random(len(targets)) + 0.05
        P[i, sorted(targets)] = w / w.sum()
    for j in range(n - n_absorbing, n):
        P[j, j] = 1.0
    perm = rng.permutation(n)
    return P[np.ix_(perm, perm)], int(np.argsort(perm)[0])


def random_rate_matrix(seed: int, n: int, n_absorbing: int = 1) -> tuple[np.ndarray, int]:
    """Rate matrix (zero diagonal) with absorbing tail states and rates in [0.2, 5]."""
    P, initial = random_absorbing_chain(seed, n, n_absorbing)
    rng = np.random.default_rng(seed + 1)
    R = np.where(P > 0, 0.2 + 4.8 * rng.random(P.shape), 0.0)
    np.fill_diagonal(R, 0.0)
    return R, initial
