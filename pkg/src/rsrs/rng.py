"""Seed derivation and the per-subsystem random streams.

One 64-bit root seed feeds a ``numpy.random.SeedSequence``; each subsystem
gets its own child stream so that, e.g., turning on per-tick jitter does
not perturb initial placement or sensor noise.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

from .config import PopulationDistribution

SUBSYSTEMS = ("placement", "idiosyncrasy", "sensing", "jitter", "rollout")


def streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(SUBSYSTEMS))
    return {name: np.random.Generator(np.random.PCG64(ss))
            for name, ss in zip(SUBSYSTEMS, children)}


def derive_seed(root: int, *key: int) -> int:
    """Positional child seed: depends only on ``root`` and ``key``, never on run order."""
    ss = np.random.SeedSequence(root, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def truncated_normal(pop: PopulationDistribution, u: np.ndarray) -> np.ndarray:
    """Map uniforms ``u`` through the inverse CDF of N(mu, sigma) truncated to (0, 2 mu].

    Inverse-CDF sampling keeps draws prefix-stable: the first k values of a
    larger batch equal a batch of size k from the same stream.
    """
    u = np.asarray(u, dtype=float)
    if pop.sigma == 0:
        return np.full(u.shape, pop.mu)
    lo = ndtr((0.0 - pop.mu) / pop.sigma)
    hi = ndtr(pop.mu / pop.sigma)
    x = pop.mu + pop.sigma * ndtri(lo + u * (hi - lo))
    return np.clip(x, np.nextafter(0.0, 1.0), 2.0 * pop.mu)
