"""Shared oracle helpers for the unit and acceptance suites."""

import itertools
import math

import numpy as np

from pmstair import Affine, Step


def random_instance(rng):
    """Small random chain instance: (n, label count, lo, hi, forcing, beta)."""
    n = int(rng.integers(2, 7))
    k = int(rng.integers(2, 7))
    lo = float(rng.uniform(-1.5, 0.5))
    hi = lo + float(rng.uniform(0.3, 2.0))
    if rng.random() < 0.5:
        f = Affine(float(rng.uniform(-2, 2)), float(rng.uniform(-1, 1)))
    else:
        pos = float(rng.uniform(0.15, 0.85))
        height = float(rng.uniform(0.2, 1.5)) * (1 if rng.random() < 0.5 else -1)
        f = Step(float(rng.uniform(-1, 1)), ((pos, height),))
    beta = float(rng.uniform(0.3, 8.0))
    return n, k, lo, hi, f, beta


def potts_oracle(f, alpha, beta, interval, resolution, bc=None):
    """Exhaustive jump-subset minimization with per-segment means/pins."""
    a, b = interval
    x = np.linspace(a, b, resolution + 1)
    best = math.inf
    for r in range(resolution):
        for subset in itertools.combinations(range(1, resolution), r):
            nodes = [0, *subset, resolution]
            cost = alpha * len(subset)
            for i, j in zip(nodes[:-1], nodes[1:]):
                lo, hi = x[i], x[j]
                m0, m1 = f.moments(lo, hi)
                if bc is not None and i == 0 and j == resolution and bc[0] != bc[1]:
                    cost = math.inf
                    break
                if bc is not None and i == 0:
                    c = bc[0]
                elif bc is not None and j == resolution:
                    c = bc[1]
                else:
                    c = m0 / (hi - lo)
                cost += beta * (c * c * (hi - lo) - 2 * c * m0 + m1)
            best = min(best, cost)
    return best
