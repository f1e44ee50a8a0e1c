"""Coefficient recursions lambda_f / Lambda(Psi), reversion oracle and series-form tails."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _special as sp
from . import powerseries as ps
from .arith import threshold_counts
from .errors import DomainError, ResourceError
from .model import BernoulliEnsemble, _as_ens
from .psi import PsiDistribution

K_MAX = 24


@dataclass(frozen=True)
class CoefficientVector:
    kind: str
    values: np.ndarray
    growth: float

    @property
    def K(self):
        return self.values.size - 1

    def to_json(self):
        return {"kind": self.kind, "K": self.K, "growth_estimate": self.growth,
                "values": self.values.tolist()}


def growth_estimate(vals) -> float:
    """max_k |lambda_k|^(1/k), so |lambda_k| <= C^k holds for every k."""
    ks = np.arange(1, len(vals))
    if ks.size == 0:
        return 1.0
    return float(np.max(np.abs(np.asarray(vals[1:])) ** (1.0 / ks)))


def reversion_recursion(c, K):
    """Coefficients of G with G + sum_{i>=2} c_i G^i / i! = z.

    lambda_j = -sum_{i=2}^{j} (c_i / i!) [z^j] G^i, where [z^j] G^i needs only
    lambda_1..lambda_{j-i+1}. pw[i][n] holds [z^n] G^i, filled column by column.
    """
    K = int(K)
    if K > K_MAX:
        raise ResourceError(f"K={K} exceeds {K_MAX}")
    lam = [0.0] * (K + 1)
    if K >= 1:
        lam[1] = 1.0
    pw = [[0.0] * (K + 1) for _ in range(K + 1)]
    pw[0][0] = 1.0
    if K >= 1:
        pw[1][1] = 1.0
    for j in range(2, K + 1):
        for i in range(2, j + 1):
            pw[i][j] = math.fsum(lam[m] * pw[i - 1][j - m] for m in range(1, j - i + 2))
        lam[j] = -math.fsum(c[i] / math.factorial(i) * pw[i][j] for i in range(2, j + 1))
        pw[1][j] = lam[j]
    return np.array(lam)


def moment_sequence(ens, L, x=None) -> np.ndarray:
    """M_f(x;l) = B^-2 sum_p f(p)^{l+2}/p for l = 0..L (M_f(x;0) = 1)."""
    ens = _as_ens(ens, x)
    L = int(L)
    if L > K_MAX:
        raise ResourceError(f"L={L} exceeds {K_MAX}")
    w, q = ens.weights, ens.probs
    B2 = ens.B2
    out = np.array([math.fsum(w ** (l + 2) * q) / B2 for l in range(L + 1)])
    out[0] = 1.0
    return out


def lambda_f(ens, K, x=None) -> CoefficientVector:
    ens = _as_ens(ens, x)
    K = int(K)
    if K > K_MAX:
        raise ResourceError(f"K={K} exceeds {K_MAX}")
    M = moment_sequence(ens, max(K - 1, 0))
    c = [0.0] + [M[i - 1] for i in range(1, K + 1)]
    lam = reversion_recursion(c, K)
    return CoefficientVector("LAMBDA_F", lam, growth_estimate(lam))


def lambda_psi(psi: PsiDistribution, K) -> CoefficientVector:
    K = int(K)
    if K > K_MAX:
        raise ResourceError(f"K={K} exceeds {K_MAX}")
    c = [0.0] + [psi.moment(i - 1) for i in range(1, K + 1)]
    lam = reversion_recursion(c, K)
    return CoefficientVector("LAMBDA_PSI", lam, growth_estimate(lam))


def reversion_oracle(coeffs, K) -> np.ndarray:
    """(u')^{-1} by Lagrange inversion, independent of the recursion."""
    return ps.lagrange_reversion(coeffs, int(K))


def du_series_psi(psi: PsiDistribution, K) -> np.ndarray:
    """Taylor coefficients of u'(z) = integral (e^{zt} - 1) t^{-1} dPsi."""
    return np.array([0.0] + [psi.moment(k - 1) / math.factorial(k) for k in range(1, K + 1)])


def F_series(ens: BernoulliEnsemble, K) -> np.ndarray:
    """Taylor coefficients of F_f(x;z) = B^-2 sum_p f(p)(e^{f(p) z} - 1)/p."""
    w, q = ens.weights, ens.probs
    B2 = ens.B2
    return np.array([0.0] + [math.fsum(w ** (k + 1) * q) / B2 / math.factorial(k) for k in range(1, K + 1)])


@dataclass(frozen=True)
class SeriesTail:
    value: float
    log_value: float
    exponent: float
    exponent_remainder: float
    remainder_bound: float
    terms: int


def _coeffs_of(source, K):
    if isinstance(source, CoefficientVector):
        return source
    if isinstance(source, PsiDistribution):
        return lambda_psi(source, K)
    if isinstance(source, BernoulliEnsemble):
        return lambda_f(source, K)
    raise DomainError("series_tail source must be coefficients, a Psi or an ensemble")


def series_tail(source, B, delta, K=12) -> SeriesTail:
    """exp(-(Delta^3/B) sum_k lambda_{k+2}/(k+3) (Delta/B)^k) * P(N >= Delta).

    The Gaussian factor e^{Delta^2/2} of the saddle form is already inside the
    series exponent.
    """
    co = _coeffs_of(source, K + 2)
    lam = co.values
    B = float(B)
    delta = float(delta)
    r = delta / B
    C = co.growth
    if r * C > 0.5:
        raise DomainError(f"Delta/B = {r:.4g} outside the radius 1/(2C) = {0.5 / C:.4g}")
    n = lam.size - 3
    if n < 0:
        raise DomainError("need coefficients up to lambda_2")
    terms = [lam[k + 2] / (k + 3) * r**k for k in range(n + 1)]
    expo = -(delta**3 / B) * math.fsum(terms)
    rem = (delta**3 / B) * C * C * (C * r) ** (n + 1) / (1 - C * r)
    lv = expo + sp.log_normal_tail(delta)
    val = math.exp(lv)
    return SeriesTail(val, lv, expo, rem, val * math.expm1(rem), n + 1)


@dataclass(frozen=True)
class TransferCheck:
    delta: float
    count_B: int
    count_sigma: int
    series_B: float
    series_sigma: float

    @property
    def counts_equal(self):
        return self.count_B == self.count_sigma

    @property
    def series_ratio(self):
        return self.series_B / self.series_sigma


def transfer_check(f, x, delta, K=12, counts=True) -> TransferCheck:
    """Compare B- and sigma-normalised tails of f at the same Delta.

    Counts: {f(n) >= mu + Delta B} is literally {f(n) >= mu + (Delta B/sigma) sigma}.
    Series: series_tail with B against the same formula with sigma.
    """
    ens = _as_ens(f, x)
    mu, B, sig = ens.mu, ens.B, ens.sigma
    delta = float(delta)
    cB = cS = -1
    if counts:
        cB = int(threshold_counts(f, x, [mu + delta * B])[0])
        cS = int(threshold_counts(f, x, [mu + (delta * B / sig) * sig])[0])
    co = lambda_f(ens, K + 2)
    return TransferCheck(delta, cB, cS, series_tail(co, B, delta).value, series_tail(co, sig, delta).value)
