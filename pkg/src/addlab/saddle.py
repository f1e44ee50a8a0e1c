"""Saddle-point asymptotics: omega(f;z), v_f(x;Delta), S_f, L(f;z), c(f), A(f;z)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import _special as sp
from . import powerseries as ps
from .arith import AdditiveFunction, as_int_x, sieve_primes
from .errors import DomainError, NumericError, PreconditionError, RangeError
from .psi import PsiDistribution, closed_psi

EULER_GAMMA = sp.EULER_GAMMA
normal_tail = sp.normal_tail
NORMAL_GUARD = 1.0
FULL_DELTA = 0.5


@dataclass(frozen=True)
class OmegaSolution:
    omega: float
    iters: int
    residual: float
    trace: tuple = field(default=(), repr=False)


def solve_omega_full(psi: PsiDistribution, z: float, max_iter=200) -> OmegaSolution:
    """Root of g(w) = Psi'(w) - Psi'(0) - z Psi''(0) on w >= 0.

    g is increasing and convex with g(z) >= 0, so Newton started at an upper
    bound decreases monotonically onto the root; a bracket guards the steps.
    """
    z = float(z)
    if z < 0 or not math.isfinite(z):
        raise DomainError(f"solve_omega needs finite z >= 0, got {z}")
    m2 = psi.moment(2)
    if z == 0:
        return OmegaSolution(0.0, 0, 0.0)
    target = z * m2

    def g(w):
        return psi.tilt_gap(w) - target

    w_cap = min(psi_cap(psi), z)
    lo, hi = 0.0, w_cap
    g_hi = g(hi)
    if g_hi < 0:
        raise RangeError(f"saddle parameter beyond overflow bound for z={z}")
    w, gw = hi, g_hi
    trace = []
    tol = 1e-13 * m2
    for it in range(1, max_iter + 1):
        trace.append((w, gw))
        if abs(gw) <= 0.5 * tol:
            return OmegaSolution(w, it - 1, gw, tuple(trace))
        if gw > 0:
            hi = w
        else:
            lo = w
        d = psi.laplace(w, 2)
        step = gw / d
        w_new = w - step
        if not (lo < w_new < hi):
            w_new = 0.5 * (lo + hi)
        if abs(w_new - w) <= 4e-16 * max(w, 1e-300):
            # converged to working precision
            g_new = g(w_new)
            best = (w_new, g_new) if abs(g_new) <= abs(gw) else (w, gw)
            return OmegaSolution(best[0], it, best[1], tuple(trace))
        w, gw = w_new, g(w_new)
    raise NumericError(f"solve_omega did not converge for z={z}", trace)


def psi_cap(psi: PsiDistribution):
    return min(0.999 * 700.0 / max(psi.t_max, 1e-300), 64.0)


def solve_omega(psi: PsiDistribution, z: float) -> float:
    return solve_omega_full(psi, z).omega


@dataclass(frozen=True)
class SaddleSolution:
    x: float
    delta: float
    z: float
    sigma_psi: float
    v: float
    psi_at_v: tuple[float, float, float]
    log_S: float | None
    S: float | None
    newton_iters: int
    residual: float


def _loglog(x, loglog_x=None):
    if loglog_x is not None:
        if not loglog_x > 0:
            raise DomainError(f"loglog x must be > 0, got {loglog_x}")
        return float(loglog_x)
    x = float(x)
    if not x >= 16:
        raise DomainError(f"asymptotics need x >= 16 (loglog x > 1), got {x}")
    return math.log(math.log(x))


def v_param(psi: PsiDistribution, x, delta, loglog_x=None) -> SaddleSolution:
    """Saddle point at (x, Delta); loglog_x overrides x for x beyond float range."""
    ll = _loglog(x, loglog_x)
    delta = float(delta)
    if delta < 0:
        raise DomainError("Delta must be >= 0")
    m2 = psi.moment(2)
    sig = math.sqrt(m2 * ll)
    z = delta / sig
    sol = solve_omega_full(psi, z)
    v = sol.omega
    trio = (psi.laplace(v, 0), psi.laplace(v, 1), psi.laplace(v, 2))
    log_S = S = None
    if delta > 0:
        log_S = _log_S(psi, ll, v, trio[2])
        S = _exp_or_none(log_S)
    x = float(x) if x is not None else math.inf
    return SaddleSolution(x, delta, z, sig, v, trio, log_S, S, sol.iters, sol.residual)


def _log_S(psi, ll, v, d2):
    return psi.a_exponent(v) * ll - math.log(v) - 0.5 * math.log(2 * math.pi * d2 * ll)


def _exp_or_none(lv):
    return math.exp(lv) if lv > -745.0 else None


@dataclass(frozen=True)
class SValue:
    log_value: float
    value: float | None
    v: float


def S_formula(psi: PsiDistribution, x, delta) -> SValue:
    """S_f(x;Delta) = (log x)^{A(v)} / (v sqrt(2 pi Psi''(v) loglog x)), in log space."""
    if not float(delta) > 0:
        raise DomainError("S_formula needs Delta > 0")
    sol = v_param(psi, x, delta)
    return SValue(sol.log_S, sol.S, sol.v)


# ---------------------------------------------------------------- L(f;z)

@dataclass(frozen=True)
class LProduct:
    value: float
    log_value: float
    P: int
    tail_bound: float
    C: float
    corrected_log: float

    @property
    def corrected(self):
        return math.exp(self.corrected_log)


def _log_L_terms(f, psi, z, primes):
    w = f.prime_values(primes)
    pf = primes.astype(float)
    if z * float(w.max(initial=0.0)) > 700:
        raise RangeError("e^{z f(p)} overflows")
    psi_m1 = psi.laplace_m1(z)
    inner = np.expm1(z * w) / pf
    if (inner <= -1).any():
        raise NumericError("nonpositive factor in L product")
    return psi_m1 * np.log1p(-1.0 / pf) + np.log1p(inner)


def L_product(f: AdditiveFunction, z, P=10**7, psi: PsiDistribution | None = None) -> LProduct:
    """prod_{p<=P} (1-1/p)^{Psi(z)} (1 + e^{z f(p)}/(p-1)) with a C/log P tail estimate.

    C comes from comparing the truncations at P/2 and P.
    """
    P = as_int_x(P, "P")
    if P < 1000:
        raise DomainError("L_product needs P >= 1000")
    psi = psi or closed_psi(f)
    if psi is None:
        raise PreconditionError("L_product needs Psi for this function")
    z = float(z)
    if z == 0:
        return LProduct(1.0, 0.0, P, 0.0, 0.0, 0.0)
    primes = sieve_primes(P)
    terms = _log_L_terms(f, psi, z, primes)
    half = int(np.searchsorted(primes, P // 2, side="right"))
    log_half = math.fsum(terms[:half])
    log_full = math.fsum(terms)
    d = 1.0 / math.log(P / 2) - 1.0 / math.log(P)
    C = (log_half - log_full) / d
    tail = abs(C) / math.log(P)
    return LProduct(math.exp(log_full), log_full, P, tail, C, log_full - C / math.log(P))


# ---------------------------------------------------------------- c(f)

@dataclass(frozen=True)
class CConstant:
    value: float
    uncertainty: float
    grid: tuple[int, ...]
    estimates: tuple[float, ...]
    warning: bool


def c_constant(f: AdditiveFunction, psi: PsiDistribution, xgrid, spread_bound=1e-2) -> CConstant:
    """c(f) ~ mu(f;x) - Psi'(0) loglog x, read off at the grid points."""
    xs = [as_int_x(x) for x in xgrid]
    if len(xs) < 3 or any(b <= a for a, b in zip(xs, xs[1:])):
        raise DomainError("c_constant needs >= 3 increasing grid points")
    primes = sieve_primes(xs[-1])
    w = f.prime_values(primes) / primes.astype(float)
    m1 = psi.moment(1)
    est = []
    for x in xs:
        k = int(np.searchsorted(primes, x, side="right"))
        est.append(math.fsum(w[:k]) - m1 * math.log(math.log(x)))
    top = est[len(est) // 2 :]
    spread = max(top) - min(top)
    return CConstant(est[-1], spread, tuple(xs), tuple(est), spread > spread_bound)


# ---------------------------------------------------------------- A(f;z)

def a_factor(psi: PsiDistribution, z) -> float:
    """e^{-gamma (Psi(omega)-1)} / Gamma(Psi(omega)), omega = omega(f;z)."""
    w = solve_omega(psi, z)
    g1 = psi.laplace_m1(w)
    return math.exp(-EULER_GAMMA * g1 - math.lgamma(1.0 + g1))


def exponent_series(psi: PsiDistribution, K: int) -> np.ndarray:
    """Taylor coefficients a_0..a_K of E(z) = A(omega(z))."""
    K = int(K)
    if K < 2 or K > 32:
        raise DomainError("exponent_series needs 2 <= K <= 32")
    m = [psi.moment(n) for n in range(K + 2)]
    fact = [math.factorial(n) for n in range(K + 2)]
    m2 = m[2]
    # Psi'(w) - Psi'(0) = sum_{n>=1} m_{n+1} w^n / n!, normalised by m2
    gap = np.array([0.0] + [m[n + 1] / fact[n] / m2 for n in range(1, K + 1)])
    om = ps.lagrange_reversion(gap, K)
    A = np.array([0.0, 0.0] + [m[n] * (1 - n) / fact[n] for n in range(2, K + 1)])
    out = ps.compose(A, om, K)
    out[0] = out[1] = 0.0
    return out


def rho_alpha(alpha) -> int:
    """ceil((1+alpha)/(1-alpha)), evaluated exactly on the decimal value of alpha."""
    a = Fraction(repr(alpha)) if isinstance(alpha, float) else Fraction(alpha)
    if not Fraction(1, 3) < a < 1:
        raise DomainError(f"alpha must lie in (1/3, 1), got {alpha}")
    r = (1 + a) / (1 - a)
    return math.ceil(r)


@dataclass(frozen=True)
class MomentEquivalence:
    equivalent: bool
    checked_moments: tuple[int, ...]
    max_discrepancy: float


def moment_equivalence(psi1: PsiDistribution, psi2: PsiDistribution, alpha, tol=1e-10) -> MomentEquivalence:
    a2, b2 = psi1.moment(2), psi2.moment(2)
    if abs(a2 - b2) > 1e-12 * max(1.0, a2):
        raise PreconditionError(f"second moments differ: {a2!r} vs {b2!r}")
    rho = rho_alpha(alpha)
    if rho > 64:
        raise DomainError(f"rho(alpha) = {rho} needs moments beyond order 64")
    ks = tuple(range(3, rho + 1))
    worst = 0.0
    ok = True
    for k in ks:
        a, b = psi1.moment(k), psi2.moment(k)
        rel = abs(a - b) / max(1.0, abs(a))
        worst = max(worst, rel)
        ok &= rel <= tol
    return MomentEquivalence(bool(ok), ks, worst)


# ---------------------------------------------------------------- dispatcher

@dataclass(frozen=True)
class LatticeInputs:
    """The lattice case of the full asymptotic: g-part for L, and P_h(a; v)."""

    g_part: AdditiveFunction
    p_h: Callable[[float, float], float]


@dataclass(frozen=True)
class Prediction:
    delta: float
    level: str
    regime: str
    v: float | None
    log_prediction: float
    prediction: float | None
    factors: dict

    def to_json(self):
        out = {"delta": self.delta, "level": self.level, "v": self.v, "regime": self.regime,
               "log_prediction": self.log_prediction}
        if self.prediction is not None:
            out["prediction"] = self.prediction
        out["factors"] = dict(self.factors)
        return out


def regime_label(level, delta, loglog_x, sigma):
    if level == "NORMAL":
        ok = delta <= NORMAL_GUARD * loglog_x ** (1 / 6)
    else:
        ok = delta <= FULL_DELTA * sigma
    return "VALID" if ok else "EXTRAPOLATED"


def tail_asymptotic(f, psi, x, delta, level="FULL", *, mu=None, sigma=None, c_f=None,
                    lattice_inputs: LatticeInputs | None = None, lattice=None, L_P=10**7,
                    loglog_x=None) -> Prediction:
    """Predicted D_f(x;Delta) at level NORMAL, S_ONLY or FULL.

    FULL needs c_f; in the lattice case also lattice_inputs, and mu, sigma for
    xi = mu + Delta sigma.
    """
    level = {"S": "S_ONLY", "S_ONLY": "S_ONLY", "NORMAL": "NORMAL", "FULL": "FULL"}.get(str(level).upper())
    if level is None:
        raise DomainError("level must be NORMAL, S_ONLY or FULL")
    delta = float(delta)
    ll = _loglog(x, loglog_x)
    sig_psi = math.sqrt(psi.moment(2) * ll)
    sig = sigma if sigma is not None else sig_psi
    if level == "NORMAL":
        lv = sp.log_normal_tail(delta)
        return Prediction(delta, level, regime_label(level, delta, ll, sig), None, lv,
                          math.exp(lv), {"normal_tail": math.exp(lv)})
    if not delta > 0:
        raise DomainError(f"{level} prediction needs Delta > 0")
    sol = v_param(psi, x, delta, ll)
    v = sol.v
    factors = {"S": sol.S, "log_S": sol.log_S}
    log_pred = sol.log_S
    if level == "FULL":
        if c_f is None:
            raise PreconditionError("FULL level needs c(f) (see c_constant)")
        if lattice is None:
            from .psi import lattice_detect
            lattice = lattice_detect(psi).is_lattice
        if lattice and lattice_inputs is None:
            raise PreconditionError("lattice-distributed Psi needs lattice_inputs (g-part and P_h)")
        target = lattice_inputs.g_part if lattice else f
        L = L_product(target, v, L_P, psi=psi)
        log_inv_gamma = -math.lgamma(sol.psi_at_v[0])
        log_c = -v * c_f
        log_pred += L.log_value + log_c + log_inv_gamma
        factors.update(L=L.value, exp_minus_vc=math.exp(log_c), inv_gamma=math.exp(log_inv_gamma))
        if lattice:
            if mu is None or sigma is None:
                raise PreconditionError("lattice case needs mu and sigma for xi")
            xi = mu + delta * sigma
            ph = float(lattice_inputs.p_h(xi, v))
            log_pred += math.log(ph)
            factors.update(P_h=ph, xi=xi)
    return Prediction(delta, level, regime_label(level, delta, ll, sig), v, log_pred,
                      _exp_or_none(log_pred), factors)


@dataclass(frozen=True)
class XiThreshold:
    xi: float
    surrogate: float
    difference: float


def xi_threshold(psi, mu, sigma, x, delta, c_f) -> XiThreshold:
    """xi = mu + Delta sigma and its surrogate Psi'(v) loglog x + c(f)."""
    sol = v_param(psi, x, delta)
    xi = mu + delta * sigma
    sur = sol.psi_at_v[1] * _loglog(x) + c_f
    return XiThreshold(xi, sur, xi - sur)
