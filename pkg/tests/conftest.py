import math
from itertools import product

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("lab")


def trial_primes(n):
    return [p for p in range(2, n + 1) if all(p % d for d in range(2, math.isqrt(p) + 1))]


def enumerate_law(primes, weights):
    """All 2^k outcomes of sum w_i X_i: (sums, probabilities), built with itertools.product."""
    bits = np.array(list(product((0, 1), repeat=len(primes))), dtype=float).reshape(-1, len(primes))
    q = 1.0 / np.asarray(primes, dtype=float)
    probs = np.prod(np.where(bits == 1, q, 1 - q), axis=1)
    sums = np.array([math.fsum(r) for r in bits * np.asarray(weights, dtype=float)])
    return sums, probs


def enumerate_tail(primes, weights, t, law=None):
    """P(sum w_i X_i >= t) by listing every outcome."""
    sums, probs = law if law is not None else enumerate_law(primes, weights)
    return math.fsum(probs[sums >= t - 1e-12 * max(1.0, abs(t))])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
