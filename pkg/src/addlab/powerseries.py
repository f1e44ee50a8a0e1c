"""Truncated power-series arithmetic on coefficient arrays (index = power)."""

import numpy as np

from .errors import DomainError


def mul(a, b, n):
    """(a*b) truncated to n+1 coefficients."""
    out = np.convolve(np.asarray(a, float)[: n + 1], np.asarray(b, float)[: n + 1])[: n + 1]
    return np.pad(out, (0, n + 1 - out.size))


def reciprocal(a, n):
    a = np.asarray(a, float)
    if a[0] == 0:
        raise DomainError("series with zero constant term has no reciprocal")
    b = np.zeros(n + 1)
    b[0] = 1.0 / a[0]
    for k in range(1, n + 1):
        m = min(k, a.size - 1)
        b[k] = -np.dot(a[1 : m + 1], b[k - 1 :: -1][:m]) / a[0]
    return b


def compose(outer, inner, n):
    """outer(inner(z)) for inner with zero constant term."""
    inner = np.asarray(inner, float)
    if inner[0] != 0:
        raise DomainError("inner series must vanish at 0")
    out = np.zeros(n + 1)
    out[0] = outer[0]
    pw = np.zeros(n + 1)
    pw[0] = 1.0
    for k in range(1, min(len(outer) - 1, n) + 1):
        pw = mul(pw, inner, n)
        out += outer[k] * pw
    return out


def lagrange_reversion(a, n):
    """Coefficients of g with a(g(z)) = z, by Lagrange inversion.

    g_k = (1/k) [w^{k-1}] (w / a(w))^k, after scaling a to unit linear term.
    """
    a = np.zeros(n + 2) + np.pad(np.asarray(a, float), (0, max(0, n + 2 - len(a))))[: n + 2]
    if a[0] != 0:
        raise DomainError("series to revert must have zero constant term")
    if a[1] == 0:
        raise DomainError("series to revert has zero linear coefficient")
    a1 = a[1]
    phi = reciprocal(a[1:] / a1, n)  # w / a~(w)
    g = np.zeros(n + 1)
    pw = np.zeros(n + 1)
    pw[0] = 1.0
    for k in range(1, n + 1):
        pw = mul(pw, phi, n)
        g[k] = pw[k - 1] / k
    # a(g(z)) = z  <=>  a~(g(z)) = z / a1
    return g * (1.0 / a1) ** np.arange(n + 1)
