"""Thin wrappers around library special functions used throughout."""

import math

import numpy as np
from scipy import special

EULER_GAMMA = 0.5772156649015329


def normal_tail(delta):
    """P(N(0,1) >= delta)."""
    return float(special.ndtr(-float(delta)))


def log_normal_tail(delta):
    return float(special.log_ndtr(-float(delta)))


def lgamma(x):
    return math.lgamma(x)


def gamma(x):
    return math.gamma(x)


def expm1_over(y):
    """(e^y - 1)/y, continuous at 0."""
    y = np.asarray(y, dtype=float)
    out = np.ones_like(y)
    nz = y != 0
    out[nz] = np.expm1(y[nz]) / y[nz]
    return out


def _taylor(y, coef):
    acc = np.zeros_like(y)
    for c in coef[::-1]:
        acc = acc * y + c
    return acc


# (e^y - 1 - y)/y^2 = sum y^n/(n+2)!
_PHI2 = [1.0 / math.factorial(n + 2) for n in range(24)]
# h(y)/y^2 with h(y) = e^y - 1 - y e^y = -sum_{n>=2} (n-1) y^n / n!
_H2 = [-(n + 1) / math.factorial(n + 2) for n in range(24)]


def phi2(y):
    """(e^y - 1 - y)/y^2, stable near 0."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < 0.5
    out[small] = _taylor(y[small], _PHI2)
    yb = y[~small]
    out[~small] = (np.expm1(yb) - yb) / (yb * yb)
    return out


def h_over_y2(y):
    """(e^y - 1 - y e^y)/y^2, stable near 0."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < 0.5
    out[small] = _taylor(y[small], _H2)
    yb = y[~small]
    out[~small] = (np.expm1(yb) - yb * np.exp(yb)) / (yb * yb)
    return out


def h_fn(y):
    """e^y - 1 - y e^y."""
    y = np.asarray(y, dtype=float)
    return y * y * h_over_y2(y)
