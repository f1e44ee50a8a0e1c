"""The Kubilius model sum_p f(p) X_p and the exact/Monte Carlo/closed tails around it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import mpmath
import numpy as np
from numba import njit
from scipy import special

from . import _special as sp
from .arith import AdditiveFunction, as_int_x, sieve_primes, table, tie_tolerance
from .errors import DomainError, NumericError, PreconditionError, RangeError, ResourceError, warn_precision
from .psi import PsiDistribution, lattice_detect

MAX_STATES = 10**8
MAX_WORK = 2 * 10**10
SNAP_STEP = 1e-4


@dataclass(frozen=True)
class BernoulliEnsemble:
    primes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.primes, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 1 or p.shape != w.shape:
            raise DomainError("primes and weights must be 1-d and equal length")
        if p.size and (p[0] < 2 or np.any(np.diff(p) <= 0)):
            raise DomainError("primes must be ascending, distinct and >= 2")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and >= 0")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "primes", p)
        object.__setattr__(self, "weights", w)

    @property
    def probs(self):
        return 1.0 / self.primes.astype(float)

    @property
    def mu(self):
        return math.fsum(self.weights * self.probs)

    @property
    def sigma2(self):
        q = self.probs
        return math.fsum(self.weights**2 * q * (1 - q))

    @property
    def B2(self):
        return math.fsum(self.weights**2 * self.probs)

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    @property
    def B(self):
        return math.sqrt(self.B2)


def ensemble(f: AdditiveFunction, x) -> BernoulliEnsemble:
    p = sieve_primes(as_int_x(x))
    return BernoulliEnsemble(p, f.prime_values(p))


def toy(pairs) -> BernoulliEnsemble:
    """Ensemble from {p: f(p)} (the p need not be prime)."""
    ps = sorted(pairs)
    return BernoulliEnsemble(np.array(ps), np.array([pairs[p] for p in ps], dtype=float))


def _as_ens(obj, x=None):
    if isinstance(obj, BernoulliEnsemble):
        return obj
    if x is None:
        raise DomainError("an AdditiveFunction needs x to build the ensemble")
    return ensemble(obj, x)


@dataclass(frozen=True)
class TailEstimate:
    value: float
    method: str
    stderr: float | None = None
    samples: int | None = None
    seed: int | None = None
    grid_step: float | None = None
    remainder_bound: float | None = None
    snap_error: float | None = None

    def to_json(self):
        out = {"value": self.value, "method": self.method}
        for k in ("stderr", "samples", "seed", "grid_step", "remainder_bound", "snap_error"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


# ---------------------------------------------------------------- mgf

def model_mgf(ens, s, x=None) -> float:
    """E exp(s sum f(p) X_p) = prod (1 + (e^{s f(p)} - 1)/p)."""
    ens = _as_ens(ens, x)
    s = float(s)
    if s == 0:
        return 1.0
    top = abs(s) * float(ens.weights.max(initial=0.0))
    if top > 700:
        raise RangeError(f"model_mgf: |s| max f = {top:.4g} > 700")
    lg = math.fsum(np.log1p(np.expm1(s * ens.weights) * ens.probs))
    if lg > 709:
        raise RangeError("model_mgf overflows")
    return math.exp(lg)


# ---------------------------------------------------------------- DP

@njit(cache=True)
def _dp_capped(ks, probs, cap):
    d = np.zeros(cap + 1)
    d[0] = 1.0
    for i in range(ks.size):
        k = ks[i]
        if k == 0:
            continue
        q = probs[i]
        r = 1.0 - q
        lo = cap - k
        if lo < 0:
            lo = 0
        acc = 0.0
        for j in range(lo, cap):
            acc += d[j]
        d[cap] += q * acc
        for j in range(cap - 1, -1, -1):
            if j >= k:
                d[j] = r * d[j] + q * d[j - k]
            else:
                d[j] = r * d[j]
    return d


@njit(cache=True)
def _dp_full(ks, probs, n):
    d = np.zeros(n + 1)
    d[0] = 1.0
    top = 0
    for i in range(ks.size):
        k = ks[i]
        if k == 0:
            continue
        q = probs[i]
        r = 1.0 - q
        top += k
        for j in range(top, -1, -1):
            if j >= k:
                d[j] = r * d[j] + q * d[j - k]
            else:
                d[j] = r * d[j]
    return d


def value_grid(ens: BernoulliEnsemble, grid_step=None):
    """(q, integer multiples k_i, max snapping error)."""
    w = ens.weights
    if grid_step is None:
        pos = w[w > 0]
        if pos.size == 0:
            return 1.0, np.zeros(w.size, dtype=np.int64), 0.0
        rep = lattice_detect(points=np.unique(pos), tol=1e-9)
        q = rep.span if rep.is_lattice else SNAP_STEP
    else:
        q = float(grid_step)
        if not q > 0:
            raise DomainError("grid step must be positive")
    k = np.rint(w / q).astype(np.int64)
    snap = float(np.max(np.abs(w - k * q), initial=0.0))
    return q, k, snap


def exact_tail_dp(ens, t, grid_step=None, x=None) -> TailEstimate:
    """P(sum f(p) X_p >= t) by forward convolution on the grid qZ.

    States above the threshold are merged into one absorbing state, so the
    cost is (#primes) * (threshold / q).
    """
    ens = _as_ens(ens, x)
    t = float(t)
    q, k, snap = value_grid(ens, grid_step)
    if snap > 1e-12 * max(1.0, q):
        warn_precision(f"weights snapped to grid {q}; max snapping error {snap:.3g}")
    total = int(k.sum())
    k_min = math.ceil((t - tie_tolerance(t)) / q)
    base = dict(method="DP", grid_step=q, snap_error=snap)
    if k_min <= 0:
        return TailEstimate(1.0, **base)
    if k_min > total:
        return TailEstimate(0.0, **base)
    if k_min > MAX_STATES:
        raise ResourceError(f"DP would need {k_min} states (> {MAX_STATES}); use the MC method")
    if k_min * k.size > MAX_WORK:
        raise ResourceError("DP work too large; use the MC method")
    nz = k > 0
    d = _dp_capped(k[nz], ens.probs[nz], k_min)
    return TailEstimate(float(min(max(d[k_min], 0.0), 1.0)), **base)


def model_distribution(ens: BernoulliEnsemble, grid_step=None):
    """Full law of the model sum on qZ: (values, probabilities)."""
    q, k, _ = value_grid(ens, grid_step)
    total = int(k.sum())
    if total > MAX_STATES:
        raise ResourceError(f"{total} states exceed {MAX_STATES}")
    nz = k > 0
    d = _dp_full(k[nz], ens.probs[nz], total)
    return q * np.arange(total + 1), d


# ---------------------------------------------------------------- MC

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _mc_count(weights, probs, t_eff, seed, r0, r1):
    n = weights.size
    key = _mix64(np.uint64(seed))
    scale = 2.0**-53
    hits = 0
    for r in range(r0, r1):
        s = 0.0
        base = np.uint64(r) * np.uint64(n)
        for i in range(n):
            ctr = base + np.uint64(i) + np.uint64(1)
            u = _mix64(key + ctr * _GOLDEN)
            if float(u >> np.uint64(11)) * scale < probs[i]:
                s += weights[i]
        if s >= t_eff:
            hits += 1
    return hits


def mc_uniforms(seed, replicate, n):
    """The uniforms used for one replicate (exposed for testing the keying)."""
    key = int(_mix64(np.uint64(seed)))
    out = []
    m = (1 << 64) - 1
    for i in range(n):
        ctr = (replicate * n + i + 1) & m
        u = int(_mix64(np.uint64((key + ctr * int(_GOLDEN)) & m)))
        out.append((u >> 11) * 2.0**-53)
    return out


def mc_tail(ens, t, N=10**6, seed=0, shards=1, x=None) -> TailEstimate:
    """Monte Carlo estimate of P(sum f(p) X_p >= t) with a counter-based generator.

    Replicate r uses the counters r*n+1..r*n+n, so any sharding of the
    replicates gives the same answer.
    """
    ens = _as_ens(ens, x)
    N = int(N)
    if N < 1000:
        raise DomainError("mc_tail needs N >= 1000")
    t = float(t)
    t_eff = t - tie_tolerance(t)
    seed = int(seed) & ((1 << 64) - 1)
    bounds = np.linspace(0, N, int(shards) + 1).astype(np.int64)
    w = np.ascontiguousarray(ens.weights)
    pr = np.ascontiguousarray(ens.probs)
    hits = sum(int(_mc_count(w, pr, t_eff, seed, int(a), int(b))) for a, b in zip(bounds, bounds[1:]))
    v = hits / N
    return TailEstimate(v, "MC", stderr=math.sqrt(v * (1 - v) / N), samples=N, seed=seed)


def centered_tail(ens, delta, *, mu=None, sigma=None, method="dp", x=None, **kw) -> TailEstimate:
    """P(sum f(p)(X_p - 1/p) >= Delta sigma) = P(sum f(p) X_p >= mu + Delta sigma)."""
    ens = _as_ens(ens, x)
    mu = ens.mu if mu is None else mu
    sigma = ens.sigma if sigma is None else sigma
    t = mu + float(delta) * sigma
    if method == "dp":
        return exact_tail_dp(ens, t, **kw)
    if method == "mc":
        return mc_tail(ens, t, **kw)
    raise DomainError(f"unknown method {method!r}")


# ---------------------------------------------------------------- g/h split

@dataclass(frozen=True)
class GHSplit:
    g_part: AdditiveFunction
    h_part: AdditiveFunction
    S_h: np.ndarray


def split_gh(f: AdditiveFunction, x, tol=1e-9) -> GHSplit:
    p = sieve_primes(as_int_x(x))
    w = f.prime_values(p)
    is_int = np.abs(w - np.rint(w)) <= tol
    g = np.where(is_int, w, 0.0)
    h = np.where(is_int, 0.0, w)
    gp = table(dict(zip(p.tolist(), g.tolist())), name=f"g[{f.name}]", allow_zero=True)
    hp = table(dict(zip(p.tolist(), h.tolist())), name=f"h[{f.name}]", allow_zero=True)
    return GHSplit(gp, hp, p[~is_int])


def _h_items(h):
    """Normalise an h-part to sorted ((p, h(p)), ...) with h(p) != 0."""
    if isinstance(h, GHSplit):
        h = dict(zip(h.S_h.tolist(), h.h_part.prime_values(h.S_h).tolist()))
    if isinstance(h, BernoulliEnsemble):
        h = dict(zip(h.primes.tolist(), h.weights.tolist()))
    items = tuple(sorted((int(p), float(v)) for p, v in dict(h).items() if v != 0))
    if any(v < 0 for _, v in items):
        raise DomainError("h values must be >= 0")
    return items


MAX_SUPPORT = 20


@lru_cache(maxsize=64)
def _xh_support_law(items):
    """Exact law of X(h) = sum h(p) X_p: sorted distinct values with probabilities."""
    if len(items) > MAX_SUPPORT:
        raise ResourceError(f"X(h) law by subsets needs |S| <= {MAX_SUPPORT}, got {len(items)}")
    vals = np.zeros(1)
    probs = np.ones(1)
    for p, hv in items:
        q = 1.0 / p
        vals = np.concatenate([vals, vals + hv])
        probs = np.concatenate([probs * (1 - q), probs * q])
    order = np.argsort(vals, kind="stable")
    return vals[order], probs[order]


@dataclass(frozen=True)
class XhLaw:
    value: float
    remainder_bound: float
    method: str


def xh_law(h, t, method="closed", n_max=10**6, tol=1e-9) -> XhLaw:
    """P(X(h) <= t) through the S-smooth-integer sum prod(1-1/p) sum_{h(n)<=t} 1/n.

    "closed" sums the geometric series per support subset (exact); "smooth"
    enumerates n <= n_max and reports the omitted mass.
    """
    items = _h_items(h)
    t = float(t)
    if t < 0:
        return XhLaw(0.0, 0.0, method)
    if len(items) > 12 and method == "smooth":
        raise ResourceError("smooth enumeration supports at most 12 primes")
    if method == "closed":
        if len(items) > 12:
            raise ResourceError("xh_law supports at most 12 primes")
        acc = []
        for mask in product((0, 1), repeat=len(items)):
            hv = math.fsum(v for (p, v), b in zip(items, mask) if b)
            if hv <= t + tie_tolerance(t):
                acc.append(math.prod(1.0 / (p - 1) for (p, _), b in zip(items, mask) if b))
        pre = math.prod(1 - 1 / p for p, _ in items)
        return XhLaw(min(pre * math.fsum(acc), 1.0), 0.0, method)
    if method != "smooth":
        raise DomainError(f"unknown method {method!r}")
    hits, seen = [], []
    stack = [(1, 0, 0.0, 0)]
    while stack:
        n, start, hv, used = stack.pop()
        seen.append(1.0 / n)
        if hv <= t + tie_tolerance(t):
            hits.append(1.0 / n)
        for j in range(start, len(items)):
            p, v = items[j]
            m = n * p
            if m > n_max:
                continue
            nh = hv if used >> j & 1 else hv + v
            stack.append((m, j, nh, used | (1 << j)))
    pre = math.prod(1 - 1 / p for p, _ in items)
    rem = max(0.0, 1.0 - pre * math.fsum(seen))
    if rem > tol:
        warn_precision(f"xh_law omitted mass {rem:.3g} above tolerance {tol:g}")
    return XhLaw(min(pre * math.fsum(hits), 1.0), rem, method)


def xh_upper(h, s) -> float:
    """P(X(h) >= s), exact."""
    vals, probs = _xh_support_law(_h_items(h))
    k = np.searchsorted(vals, float(s) - tie_tolerance(float(s)), side="left")
    return float(math.fsum(probs[k:]))


@dataclass(frozen=True)
class PhFactor:
    value: float
    remainder_bound: float
    terms: int


def p_h_factor(h, a, v, K=None, rtol=1e-9) -> PhFactor:
    """P_h(a;v) = v sum_l e^{v(l+{a})} P(X(h) >= l+{a}).

    Terms with l+{a} <= 0 have probability 1 and sum in closed form. The
    remaining terms stop at X_max = sum h(p) (exact) unless K cuts them
    earlier, in which case a Chernoff remainder is reported.
    """
    v = float(v)
    if not 0 < v <= 8:
        raise DomainError("p_h_factor needs 0 < v <= 8")
    items = _h_items(h)
    a = float(a)
    fa = a - math.floor(a)
    l0 = 0 if fa == 0 else -1
    head = v * math.exp(v * (l0 + fa)) / -math.expm1(-v)
    x_max = math.fsum(hv for _, hv in items)
    l_end = math.floor(x_max - fa + tie_tolerance(x_max))
    if K is not None:
        l_end = min(l_end, int(K))
    terms = [v * math.exp(v * (l + fa)) * xh_upper(items, l + fa) for l in range(l0 + 1, l_end + 1)]
    body = math.fsum(terms)
    value = head + body
    rem = 0.0
    if K is not None and l_end < math.floor(x_max - fa):
        theta = 2 * v
        log_m = math.fsum(math.log1p(math.expm1(theta * hv) / p) for p, hv in items)
        s0 = l_end + 1 + fa
        rem = v * math.exp(log_m - (theta - v) * s0) / -math.expm1(-(theta - v))
        if rem > rtol * value:
            warn_precision(f"P_h truncation remainder {rem:.3g} exceeds {rtol:g} of the value")
    return PhFactor(value, rem, len(terms))


def truncation_bound(h, y, y_prime) -> float:
    """|P(X_y >= s) - P(X_y' >= s)| <= P(some X_p = 1, y < p <= y', h(p) != 0)."""
    items = _h_items(h)
    return -math.expm1(math.fsum(math.log1p(-1 / p) for p, _ in items if y < p <= y_prime))


def restrict_h(h, y):
    return {p: v for p, v in _h_items(h) if p <= y}


# ---------------------------------------------------------------- Poisson / Levy

def _log_pmf(k, lam):
    with mpmath.workdps(30):
        return float(-lam + k * mpmath.log(lam) - mpmath.loggamma(k + 1))


def poisson_tail(lam, delta) -> float:
    """sum_{k >= lam + delta sqrt(lam)} e^{-lam} lam^k / k!."""
    lam = float(lam)
    if lam < 0:
        raise DomainError("Poisson mean must be >= 0")
    t = lam + float(delta) * math.sqrt(lam)
    return poisson_upper(lam, math.ceil(t - tie_tolerance(t)))


def poisson_upper(lam, k_min) -> float:
    """P(N >= k_min) for N ~ Poisson(lam)."""
    k_min = int(k_min)
    if k_min <= 0:
        return 1.0
    if lam == 0:
        return 0.0
    if lam > 1e6:
        return float(special.gammainc(k_min, lam))
    if k_min > lam:
        # upward from k_min
        lt = _log_pmf(k_min, lam)
        term, k, acc = 1.0, k_min, [1.0]
        while True:
            k += 1
            term *= lam / k
            acc.append(term)
            if term < 1e-18 * acc[0] or term == 0.0:
                break
        return min(1.0, math.exp(lt) * math.fsum(acc))
    # complement: downward from k_min - 1
    lt = _log_pmf(k_min - 1, lam)
    term, k, acc = 1.0, k_min - 1, [1.0]
    while k > 0:
        term *= k / lam
        k -= 1
        acc.append(term)
        if term < 1e-18 * acc[0]:
            break
    return max(0.0, 1.0 - math.exp(lt) * math.fsum(acc))


@dataclass(frozen=True)
class LevyTail:
    value: float
    mode: str
    rho: float | None = None
    log_value: float | None = None


def _is_poisson_psi(psi: PsiDistribution):
    return psi.is_atomic and len(psi.atoms) == 1 and psi.atoms[0][0] == 1.0


def _newton_increasing(fn, dfn, target, x0, rtol, label, max_iter=200):
    """Solve fn(x) = target for convex increasing fn, starting from an upper bound."""
    x = x0
    trace = []
    for it in range(max_iter):
        r = fn(x) - target
        trace.append((x, r))
        if abs(r) <= rtol:
            return x, it, r
        x_new = x - r / dfn(x)
        if x_new <= 0:
            x_new = x / 2
        if abs(x_new - x) <= 4e-16 * x:
            return x_new, it, fn(x_new) - target
        x = x_new
    raise NumericError(f"{label} did not converge", trace)


def levy_tail(psi: PsiDistribution, B2, delta, mode="SADDLE") -> LevyTail:
    """P(Z_Psi(B^2) >= Delta B), exactly (Poisson) or by the saddle formula."""
    B2 = float(B2)
    delta = float(delta)
    B = math.sqrt(B2)
    mode = mode.upper()
    if mode == "EXACT_POISSON":
        if not _is_poisson_psi(psi):
            raise PreconditionError("EXACT_POISSON needs Psi = atom at 1")
        return LevyTail(poisson_tail(B2, delta), mode)
    if mode != "SADDLE":
        raise DomainError(f"unknown mode {mode!r}")
    if delta == 0:
        return LevyTail(0.5, mode, 0.0, math.log(0.5))
    if delta < 0:
        raise DomainError("SADDLE mode needs Delta >= 0")
    target = delta / B
    # u' is convex increasing with u'(r) >= r, so r = Delta/B is an upper bound
    rho, _, _ = _newton_increasing(psi.du, lambda r: psi.laplace(r, 0), target, target,
                                   1e-15 * max(target, 1e-300), "levy rho")
    lv = B2 * psi.u_gap(rho) + 0.5 * delta * delta + sp.log_normal_tail(delta)
    return LevyTail(math.exp(lv), mode, rho, lv)


# ---------------------------------------------------------------- Maciulis

@dataclass(frozen=True)
class EtaSolution:
    eta: float
    iters: int
    residual: float


def eta_param(ens, delta, x=None) -> EtaSolution:
    """eta > 0 with sum f e^{eta f}/p = mu + Delta B."""
    ens = _as_ens(ens, x)
    delta = float(delta)
    if not delta > 0:
        raise DomainError("eta_param needs Delta > 0")
    w, q = ens.weights, ens.probs
    B2 = ens.B2
    B = math.sqrt(B2)
    target = delta * B

    def F(e):
        return math.fsum(w * np.expm1(e * w) * q)

    def dF(e):
        return math.fsum(w * w * np.exp(e * w) * q)

    eta, it, r = _newton_increasing(F, dF, target, delta / B, 1e-13 * B2, "eta")
    return EtaSolution(eta, it, r)


@dataclass(frozen=True)
class MaciulisTail:
    value: float
    log_value: float
    exponent: float
    eta: float


def maciulis_tail(ens, delta, x=None) -> MaciulisTail:
    """exp(sum_p h(eta f(p))/p) e^{Delta^2/2} P(N >= Delta), h(y) = e^y - 1 - y e^y."""
    ens = _as_ens(ens, x)
    delta = float(delta)
    if delta == 0:
        lv = math.log(0.5)
        return MaciulisTail(0.5, lv, 0.0, 0.0)
    eta = eta_param(ens, delta).eta
    expo = math.fsum(sp.h_fn(eta * ens.weights) * ens.probs)
    lv = expo + 0.5 * delta * delta + sp.log_normal_tail(delta)
    return MaciulisTail(math.exp(lv), lv, expo, eta)
