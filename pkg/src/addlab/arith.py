"""Primes, strongly additive functions and their empirical statistics over n <= x."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from decimal import Decimal, getcontext
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, RangeError

SEGMENT = 1 << 22
# primes below this are added by strided slices, the rest by bincount; fixed so
# that every f(n) is the same float whatever the segmentation
_SLICE_LIMIT = 1 << 16
MAX_X = (1 << 63) - 1
TIE_RTOL = 1e-12


def tie_tolerance(t):
    return TIE_RTOL * max(1.0, abs(t))


def as_int_x(x, name="x"):
    """Accept 10**6, 1e6 or "1e6"; reject non-integral values."""
    if isinstance(x, str):
        x = float(x) if any(c in x for c in ".eE") else int(x)
    if isinstance(x, float):
        if not math.isfinite(x) or x != math.floor(x):
            raise DomainError(f"{name} must be an integer, got {x!r}")
        x = int(x)
    x = int(x)
    if x > MAX_X:
        raise DomainError(f"{name}={x} beyond 2^63")
    return x


# ---------------------------------------------------------------- primes

def _simple_sieve(n):
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    s = np.ones(n + 1, dtype=bool)
    s[:2] = False
    s[4::2] = False
    for p in range(3, math.isqrt(n) + 1, 2):
        if s[p]:
            s[p * p :: 2 * p] = False
    return np.flatnonzero(s).astype(np.int64)


def prime_segments(x, segment=SEGMENT) -> Iterator[np.ndarray]:
    """Yield ascending blocks of the primes <= x (odd-only segmented sieve)."""
    x = as_int_x(x)
    if x < 2:
        raise DomainError(f"sieve needs x >= 2, got {x}")
    root = math.isqrt(x)
    base = _simple_sieve(root)
    odd_base = base[1:]
    yield np.array([2], dtype=np.int64)
    half = max(segment // 2, 1)
    lo = 3
    while lo <= x:
        hi = min(lo + 2 * half, x + 1)  # odd numbers in [lo, hi)
        m = (hi - lo + 1) // 2
        mark = np.ones(m, dtype=bool)
        for p in odd_base:
            p = int(p)
            if p * p >= hi:
                break
            start = max(p * p, ((lo + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start < hi:
                mark[(start - lo) // 2 :: p] = False
        ps = lo + 2 * np.flatnonzero(mark).astype(np.int64)
        if ps.size:
            yield ps
        lo += 2 * half


@functools.lru_cache(maxsize=8)
def _cached_primes(x):
    arr = np.concatenate(list(prime_segments(x)))
    arr.setflags(write=False)
    return arr


def sieve_primes(x) -> np.ndarray:
    """Ascending primes <= x as a read-only int64 array."""
    x = as_int_x(x)
    if x < 2:
        raise DomainError(f"sieve needs x >= 2, got {x}")
    return _cached_primes(x)


# ---------------------------------------------------------------- functions

def _frac_fixed128(alpha: Fraction) -> tuple[int, int, int, int]:
    """floor(frac(alpha) * 2^128) as four 32-bit limbs, least significant first."""
    a = (alpha.numerator % alpha.denominator << 128) // alpha.denominator
    return tuple((a >> (32 * i)) & 0xFFFFFFFF for i in range(4))


def frac_times(alpha: Fraction, p: np.ndarray) -> np.ndarray:
    """{alpha * p} via 128-bit fixed point, exact to ~2^-65 for p < 2^63."""
    p = np.asarray(p, dtype=np.uint64)
    limbs = [np.uint64(v) for v in _frac_fixed128(alpha)]
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    q = [p & mask, p >> s32]
    cols = [np.zeros(p.shape, dtype=np.uint64) for _ in range(5)]
    for i in range(4):
        for j in range(2):
            k = i + j
            if k > 3:
                continue
            prod = limbs[i] * q[j]
            cols[k] += prod & mask
            cols[k + 1] += prod >> s32
    r = []
    carry = np.zeros(p.shape, dtype=np.uint64)
    for k in range(4):
        tot = cols[k] + carry
        r.append(tot & mask)
        carry = tot >> s32
    val = r[3] * 2.0**-32 + r[2] * 2.0**-64 + r[1] * 2.0**-96
    return np.minimum(val, np.nextafter(1.0, 0.0))


def _sqrt2_approximant():
    getcontext().prec = 50
    return Fraction(Decimal(2).sqrt()).limit_denominator(2**62)


SQRT2 = _sqrt2_approximant()


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, Fraction):
        fr = alpha
    elif isinstance(alpha, float):
        fr = Fraction(repr(alpha))
    else:
        fr = Fraction(alpha)
    fr = fr.limit_denominator(2**62)
    if fr <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return fr


@dataclass(frozen=True)
class AdditiveFunction:
    """A strongly additive f, determined by its values f(p) on primes.

    kind is one of OMEGA, FRAC_ALPHA, TABLE, SCALED.
    """

    kind: str
    name: str
    alpha: Fraction | None = None
    table_p: np.ndarray | None = field(default=None, repr=False, compare=False)
    table_v: np.ndarray | None = field(default=None, repr=False, compare=False)
    base: "AdditiveFunction | None" = None
    c: float = 1.0

    def prime_values(self, primes) -> np.ndarray:
        primes = np.asarray(primes, dtype=np.int64)
        if self.kind == "OMEGA":
            return np.ones(primes.shape, dtype=float)
        if self.kind == "FRAC_ALPHA":
            return frac_times(self.alpha, primes)
        if self.kind == "SCALED":
            return self.c * self.base.prime_values(primes)
        if self.kind == "TABLE":
            idx = np.searchsorted(self.table_p, primes)
            idx_c = np.minimum(idx, len(self.table_p) - 1)
            bad = self.table_p[idx_c] != primes
            if bad.any():
                p = int(primes[np.flatnonzero(bad)[0]])
                raise ConfigError(f"table function {self.name!r} has no value for prime {p}")
            return self.table_v[idx_c].astype(float)
        raise ConfigError(f"unknown kind {self.kind}")

    def at_prime(self, p) -> float:
        return float(self.prime_values(np.array([p]))[0])

    def __call__(self, n) -> float:
        """f(n) by trial division (small n only)."""
        n = int(n)
        if n < 1:
            raise DomainError("f(n) needs n >= 1")
        ps = []
        m = n
        d = 2
        while d * d <= m:
            if m % d == 0:
                ps.append(d)
                while m % d == 0:
                    m //= d
            d += 1
        if m > 1:
            ps.append(m)
        if not ps:
            return 0.0
        return math.fsum(self.prime_values(np.array(ps)))

    @property
    def max_prime(self):
        """Largest prime the function can be evaluated at (None: unbounded)."""
        if self.kind == "TABLE":
            return int(self.table_p[-1])
        if self.kind == "SCALED":
            return self.base.max_prime
        return None


def omega() -> AdditiveFunction:
    return AdditiveFunction("OMEGA", "omega")


def frac_alpha(alpha=SQRT2, name=None) -> AdditiveFunction:
    fr = _as_fraction(alpha)
    return AdditiveFunction("FRAC_ALPHA", name or f"frac[{fr}]", alpha=fr)


def scaled(base: AdditiveFunction, c: float) -> AdditiveFunction:
    c = float(c)
    if not c > 0:
        raise DomainError(f"scale must be > 0, got {c}")
    return AdditiveFunction("SCALED", f"{c!r}*{base.name}", base=base, c=c)


def table(values: Mapping[int, float], name="table", allow_zero=False) -> AdditiveFunction:
    if not values:
        raise ConfigError("empty table")
    ps = np.array(sorted(int(p) for p in values), dtype=np.int64)
    vs = np.array([float(values[p]) for p in ps.tolist()], dtype=float)
    if not np.all(np.isfinite(vs)):
        raise ConfigError(f"table {name!r} has non-finite values")
    if (vs < 0).any():
        p = int(ps[np.flatnonzero(vs < 0)[0]])
        raise ConfigError(f"table {name!r}: negative value at prime {p}")
    if not allow_zero and (vs == 0).any():
        p = int(ps[np.flatnonzero(vs == 0)[0]])
        raise ConfigError(f"table {name!r}: zero value at prime {p} (allowed only for split parts)")
    ps.setflags(write=False)
    vs.setflags(write=False)
    return AdditiveFunction("TABLE", name, table_p=ps, table_v=vs)


def load_table(path, allow_zero=False) -> AdditiveFunction:
    """Read `p<TAB>value` lines (ascending p, '#' comments)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read table file {path}: {exc.strerror}") from exc
    vals = {}
    last = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'p<TAB>value'")
        try:
            p, v = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if p <= last:
            raise ConfigError(f"{path}:{lineno}: primes must be ascending")
        last = p
        vals[p] = v
    return table(vals, name=path.stem, allow_zero=allow_zero)


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class PrimeStats:
    x: int
    pi_x: int
    mu: float
    sigma2: float
    B2: float
    loglog_x: float

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    @property
    def B(self):
        return math.sqrt(self.B2)

    def to_json(self):
        return {k: getattr(self, k) for k in ("x", "pi_x", "mu", "sigma2", "B2", "loglog_x")}


def prime_stats(f: AdditiveFunction, x) -> PrimeStats:
    x = as_int_x(x)
    if x < 3:
        raise DomainError(f"prime_stats needs x >= 3, got {x}")
    p = sieve_primes(x)
    w = f.prime_values(p)
    pf = p.astype(float)
    w2p = w * w / pf
    return PrimeStats(
        x=x,
        pi_x=int(p.size),
        mu=math.fsum(w / pf),
        sigma2=math.fsum(w2p * (1.0 - 1.0 / pf)),
        B2=math.fsum(w2p),
        loglog_x=math.log(math.log(x)),
    )


def additive_values(f: AdditiveFunction, x, segment=SEGMENT, y=None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (lo, values) blocks with values[i] = f(lo + i), ascending, covering 1..x.

    With y given, only primes p <= y contribute (the truncated function f(n;y)).
    """
    x = as_int_x(x)
    if x < 1:
        raise DomainError("additive_values needs x >= 1")
    ylim = x if y is None else min(as_int_x(y, "y"), x)
    ps = sieve_primes(max(ylim, 2))
    ps = ps[ps <= ylim]
    w = f.prime_values(ps) if ps.size else np.zeros(0)
    n_small = int(np.searchsorted(ps, _SLICE_LIMIT))
    seg = max(int(segment), 1)
    lo = 1
    while lo <= x:
        hi = min(lo + seg, x + 1)
        vals = np.zeros(hi - lo, dtype=float)
        top = int(np.searchsorted(ps, hi - 1, side="right"))
        for i in range(min(n_small, top)):
            p = int(ps[i])
            start = -(-lo // p) * p
            if start < hi:
                vals[start - lo :: p] += w[i]
        if top > n_small:
            P = ps[n_small:top]
            W = w[n_small:top]
            k0 = -(-lo // P)
            k1 = (hi - 1) // P
            cnt = np.maximum(k1 - k0 + 1, 0)
            tot = int(cnt.sum())
            if tot:
                first = np.repeat(k0 * P - lo, cnt)
                step = np.repeat(P, cnt)
                offs = np.arange(tot) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                vals += np.bincount(first + offs * step, weights=np.repeat(W, cnt), minlength=hi - lo)
        yield lo, vals
        lo = hi


def additive_array(f: AdditiveFunction, x, segment=SEGMENT, y=None) -> np.ndarray:
    """All values f(1..x) in one array (index 0 holds f(1))."""
    return np.concatenate([v for _, v in additive_values(f, x, segment, y)])


@dataclass(frozen=True)
class TailRow:
    delta: float
    count: int
    D: float


@dataclass(frozen=True)
class TailTable:
    x: int
    normalization: str
    mu: float
    norm: float
    rows: tuple[TailRow, ...]
    y: int | None = None

    def to_json(self):
        out = {"x": self.x, "normalization": self.normalization, "mu": self.mu, "norm": self.norm}
        if self.y is not None:
            out["y"] = self.y
        out["rows"] = [{"delta": r.delta, "count": r.count, "D": r.D} for r in self.rows]
        return out

    @property
    def D(self):
        return np.array([r.D for r in self.rows])


def threshold_counts(f, x, thresholds, segment=SEGMENT, y=None) -> np.ndarray:
    """#{n <= x : f(n) >= t} for each t (with the tie tolerance)."""
    t = np.asarray(thresholds, dtype=float)
    eff = t - np.array([tie_tolerance(v) for v in t.tolist()])
    counts = np.zeros(t.shape, dtype=np.int64)
    for _, vals in additive_values(f, x, segment, y):
        s = np.sort(vals)
        counts += s.size - np.searchsorted(s, eff, side="left")
    return counts


def _norm_of(stats: PrimeStats, normalization):
    key = str(normalization).upper()
    if key == "SIGMA":
        return "SIGMA", stats.sigma
    if key == "B":
        return "B", stats.B
    raise ConfigError(f"normalization must be SIGMA or B, got {normalization!r}")


def _tail_table(f, x, deltas, normalization, stats, y=None, segment=SEGMENT):
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise DomainError("empty delta grid")
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("delta grid must be ascending")
    label, norm = _norm_of(stats, normalization)
    if not norm > 0:
        raise DomainError("normalization is zero (degenerate f)")
    ts = [stats.mu + d * norm for d in deltas]
    counts = threshold_counts(f, x, ts, segment, y)
    rows = tuple(TailRow(d, int(c), int(c) / x) for d, c in zip(deltas, counts))
    return TailTable(x, label, stats.mu, norm, rows, y)


def empirical_tail(f, x, deltas: Sequence[float], normalization="SIGMA", segment=SEGMENT) -> TailTable:
    """D_f(x; Delta) = #{n <= x : f(n) >= mu + Delta * norm} / floor(x)."""
    x = as_int_x(x)
    return _tail_table(f, x, deltas, normalization, prime_stats(f, x), segment=segment)


def truncated_tail(f, x, y, deltas, normalization="SIGMA", segment=SEGMENT) -> TailTable:
    """Tail of f(n;y) = sum_{p | n, p <= y} f(p) over n <= x, normalised by stats at y."""
    x, y = as_int_x(x), as_int_x(y, "y")
    if y > x:
        raise DomainError(f"truncation y={y} exceeds x={x}")
    if y < 3:
        raise DomainError("truncated_tail needs y >= 3")
    return _tail_table(f, x, deltas, normalization, prime_stats(f, y), y=y, segment=segment)


def prime_cdf(f, x, tgrid) -> tuple[np.ndarray, np.ndarray]:
    """(F(x;t), K_f(x;t)) on the grid: plain and f^2/p-weighted prime value CDFs."""
    x = as_int_x(x)
    if x < 3:
        raise DomainError("prime_cdf needs x >= 3")
    p = sieve_primes(x)
    w = f.prime_values(p)
    order = np.argsort(w, kind="stable")
    ws = w[order]
    wt = (w * w / p.astype(float))[order]
    cum = np.concatenate([[0.0], np.cumsum(wt)])
    B2 = math.fsum(wt)
    t = np.asarray(tgrid, dtype=float)
    k = np.searchsorted(ws, t, side="right")
    F = k / p.size
    K = cum[k] / B2
    K[k == p.size] = 1.0
    return F, K


def mean_value_direct(f, x, s, segment=SEGMENT) -> float:
    """(1/floor(x)) sum_{n<=x} exp(s f(n)), exactly-rounded accumulation."""
    x = as_int_x(x)
    s = float(s)
    if s == 0.0:
        return 1.0

    def terms():
        for _, vals in additive_values(f, x, segment):
            top = abs(s) * float(np.abs(vals).max())
            if top > 700:
                raise RangeError(f"exp(s f(n)) overflows: |s| max f = {top:.4g} > 700")
            yield from np.exp(s * vals).tolist()

    return math.fsum(terms()) / x
