"""The limiting prime-value law Psi, its Laplace transform and lattice structure."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _special as sp
from .arith import AdditiveFunction, sieve_primes
from .errors import ConfigError, DomainError, RangeError

RE_Z_BOUND = 64.0
OVERFLOW = 700.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


@dataclass(frozen=True)
class PsiDistribution:
    """Atoms (t, mass) plus an optional piecewise-linear continuous part.

    knots are (t, C(t)) with C the cumulative continuous mass, C(t_0) = 0.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    knots: tuple[tuple[float, float], ...] = ()
    provenance: str = field(default="CLOSED", compare=False)

    def __post_init__(self):
        atoms = tuple(sorted((float(t), float(m)) for t, m in self.atoms))
        knots = tuple((float(t), float(c)) for t, c in self.knots)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "knots", knots)
        for t, m in atoms:
            if t < 0 or not m > 0 or not math.isfinite(t):
                raise ConfigError(f"bad atom ({t}, {m}): need t >= 0, mass > 0")
        if any(b[0] == a[0] for a, b in zip(atoms, atoms[1:])):
            raise ConfigError("atoms must be distinct")
        if knots:
            if len(knots) < 2 or knots[0][1] != 0.0 or knots[0][0] < 0:
                raise ConfigError("cdf knots must start at (t0 >= 0, 0)")
            for a, b in zip(knots, knots[1:]):
                if not b[0] > a[0] or b[1] < a[1]:
                    raise ConfigError("cdf knots must be increasing in t and nondecreasing in F")
        total = math.fsum(m for _, m in atoms) + (knots[-1][1] if knots else 0.0)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"total mass {total!r} != 1")
        if self.moment(2) <= 0:
            raise ConfigError("Psi needs a nonzero second moment")

    # -- basic shape
    @property
    def is_atomic(self):
        return not self.knots

    @property
    def t_max(self):
        top = self.atoms[-1][0] if self.atoms else 0.0
        return max(top, self.knots[-1][0]) if self.knots else top

    def _pieces(self):
        """(a, b, density) for each continuous piece with positive mass."""
        out = []
        for (a, ca), (b, cb) in zip(self.knots, self.knots[1:]):
            if cb > ca:
                out.append((a, b, (cb - ca) / (b - a)))
        return out

    def scaled(self, c) -> "PsiDistribution":
        """Law of c*f when self is the law of f."""
        c = float(c)
        if not c > 0:
            raise DomainError("scale must be positive")
        return PsiDistribution(
            tuple((c * t, m) for t, m in self.atoms),
            tuple((c * t, F) for t, F in self.knots),
            self.provenance,
        )

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, m in self.atoms:
            out += m * (t >= a)
        if self.knots:
            kt = np.array([k[0] for k in self.knots])
            kc = np.array([k[1] for k in self.knots])
            out += np.interp(t, kt, kc, left=0.0, right=kc[-1])
        return out

    # -- integrals
    def moment(self, k: int) -> float:
        k = int(k)
        if k < 0 or k > 64:
            raise DomainError("moment order must be in 0..64")
        terms = [m * t**k for t, m in self.atoms]
        for a, b, d in self._pieces():
            terms.append(d * (b ** (k + 1) - a ** (k + 1)) / (k + 1))
        return math.fsum(terms)

    def expect(self, fn, zscale=1.0):
        """Integral of fn(t) dPsi; fn maps a float array to an array (real or complex)."""
        at = np.array([t for t, _ in self.atoms])
        am = np.array([m for _, m in self.atoms])
        vals = []
        if at.size:
            vals.append(np.sum(am * fn(at)))
        for a, b, d in self._pieces():
            n = max(1, int(math.ceil((b - a) * abs(zscale))))
            edges = np.linspace(a, b, n + 1)
            h = (edges[1:] - edges[:-1])[:, None] / 2
            mid = (edges[1:] + edges[:-1])[:, None] / 2
            nodes = (mid + h * _GL_X[None, :]).ravel()
            wts = (h * _GL_W[None, :]).ravel() * d
            vals.append(np.sum(wts * fn(nodes)))
        return sum(vals) if vals else 0.0

    def _check_z(self, z):
        re = z.real if isinstance(z, complex) else z
        if abs(re) > RE_Z_BOUND:
            raise DomainError(f"|Re z| = {abs(re):.4g} exceeds the bound {RE_Z_BOUND}")
        if self.t_max * re > OVERFLOW:
            raise RangeError(f"t_max * Re z = {self.t_max * re:.4g} > {OVERFLOW}")

    def laplace(self, z, order=0):
        """Psi-hat^(order)(z) = integral t^order e^{zt} dPsi(t)."""
        if order not in (0, 1, 2, 3):
            raise DomainError("order must be 0..3")
        if z == 0:
            return 1.0 if order == 0 else self.moment(order)
        self._check_z(z)
        val = self.expect(lambda t: t**order * np.exp(z * t), z)
        return complex(val) if isinstance(z, complex) else float(val)

    def laplace_m1(self, z):
        """Psi-hat(z) - 1, without cancellation for small z."""
        if z == 0:
            return 0.0
        self._check_z(z)
        return float(self.expect(lambda t: np.expm1(z * t), z))

    def tilt_gap(self, w):
        """Psi-hat'(w) - Psi-hat'(0) computed directly."""
        if w == 0:
            return 0.0
        self._check_z(w)
        return float(self.expect(lambda t: t * np.expm1(w * t), w))

    def a_exponent(self, v):
        """A(v) = Psi-hat(v) - 1 - v Psi-hat'(v) = integral h(vt) dPsi, h(y) = e^y - 1 - y e^y."""
        if v == 0:
            return 0.0
        self._check_z(v)
        return float(self.expect(lambda t: sp.h_fn(v * t), v))

    def u(self, z):
        """integral (e^{zt} - zt - 1) t^-2 dPsi."""
        if z == 0:
            return 0.0
        self._check_z(z)
        return float(z * z * self.expect(lambda t: sp.phi2(z * t), z))

    def du(self, z):
        """u'(z) = integral (e^{zt} - 1) t^-1 dPsi."""
        if z == 0:
            return 0.0
        self._check_z(z)
        return float(z * self.expect(lambda t: sp.expm1_over(z * t), z))

    def u_gap(self, z):
        """u(z) - z u'(z) = integral (e^{zt} - 1 - zt e^{zt}) t^-2 dPsi."""
        if z == 0:
            return 0.0
        self._check_z(z)
        return float(z * z * self.expect(lambda t: sp.h_over_y2(z * t), z))

    def weighted(self) -> "PsiDistribution":
        """The t^2-weighted law t^2 dPsi / m2 (atomic Psi only)."""
        if not self.is_atomic:
            raise DomainError("weighted law implemented for atomic Psi only")
        m2 = self.moment(2)
        atoms = [(t, m * t * t / m2) for t, m in self.atoms if t > 0]
        s = math.fsum(m for _, m in atoms)
        return PsiDistribution(tuple((t, m / s) for t, m in atoms), (), self.provenance)

    def to_json(self):
        return {
            "atoms": [{"t": t, "mass": m} for t, m in self.atoms],
            "cdf_knots": [[t, F] for t, F in self.knots],
        }


def atom(t=1.0) -> PsiDistribution:
    return PsiDistribution(((float(t), 1.0),))


def uniform(a=0.0, b=1.0) -> PsiDistribution:
    return PsiDistribution((), ((a, 0.0), (b, 1.0)))


def from_atoms(ts, masses, provenance="CLOSED") -> PsiDistribution:
    return PsiDistribution(tuple(zip(map(float, ts), map(float, masses))), (), provenance)


def load_psi(path) -> PsiDistribution:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read Psi file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    unknown = set(doc) - {"atoms", "cdf_knots"}
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    try:
        atoms = tuple((float(a["t"]), float(a["mass"])) for a in doc.get("atoms", []))
        knots = tuple((float(t), float(F)) for t, F in doc.get("cdf_knots", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed Psi ({exc})") from exc
    return PsiDistribution(atoms, knots, "FILE")


def closed_psi(f: AdditiveFunction) -> PsiDistribution | None:
    """Known limiting law for the built-in kinds (None for tables)."""
    if f.kind == "OMEGA":
        return atom(1.0)
    if f.kind == "FRAC_ALPHA":
        return uniform(0.0, 1.0)
    if f.kind == "SCALED":
        base = closed_psi(f.base)
        return None if base is None else base.scaled(f.c)
    return None


# ---------------------------------------------------------------- lattice

@dataclass(frozen=True)
class LatticeReport:
    is_lattice: bool
    span: float | None = None
    witness: tuple[float, float] | None = None


def _real_gcd(a, b, tol, max_iter):
    """Nearest-integer Euclid on positive reals; None if no remainder falls below tol."""
    a, b = max(a, b), min(a, b)
    scale = a
    for _ in range(max_iter):
        if b <= tol * scale:
            return a
        r = abs(a - round(a / b) * b)
        a, b = b, r
    return a if b <= tol * scale else None


def lattice_detect(psi: PsiDistribution | None = None, tol=1e-9, max_iter=64, points=None) -> LatticeReport:
    """Largest alpha with every atom position within tol of alpha*Z.

    A candidate span is accepted only if the largest position is at most
    tol^(-1/2) multiples of it, otherwise any two reals look commensurable.
    """
    if points is None:
        if not psi.is_atomic:
            return LatticeReport(False)
        points = [t for t, _ in psi.atoms]
    pos = sorted({float(t) for t in points if t > 0})
    if not pos:
        raise DomainError("no positive support point")
    t_max = pos[-1]
    min_span = t_max * math.sqrt(tol)
    g = pos[0]
    for t in pos[1:]:
        g_new = _real_gcd(g, t, tol, max_iter)
        if g_new is None or g_new < min_span:
            return LatticeReport(False, witness=(pos[0], t))
        g = g_new
    n = round(t_max / g)
    g = t_max / n
    for t in pos:
        if abs(t - round(t / g) * g) > tol * max(1.0, t):
            return LatticeReport(False, witness=(pos[0], t))
    return LatticeReport(True, span=g)


# ---------------------------------------------------------------- empirical

def psi_from_prime_data(f: AdditiveFunction, x, gap=1e-9) -> PsiDistribution:
    """Empirical law of {f(p) : p <= x}, equal weights, near-ties merged into atoms."""
    p = sieve_primes(x)
    w = np.sort(f.prime_values(p))
    breaks = np.flatnonzero(np.diff(w) > gap) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [w.size]])
    n = w.size
    atoms = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        atoms.append((float(np.mean(w[s:e])), (e - s) / n))
    # exact fractions keep the total at 1 to rounding
    return PsiDistribution(tuple(atoms), (), "EMPIRICAL")


def psi_weighted_from_prime_data(f: AdditiveFunction, x, gap=1e-9) -> PsiDistribution:
    """Empirical f^2/p-weighted law K_f(x; .) as an atomic Psi."""
    p = sieve_primes(x)
    w = f.prime_values(p)
    wt = w * w / p.astype(float)
    order = np.argsort(w, kind="stable")
    w, wt = w[order], wt[order]
    B2 = math.fsum(wt)
    breaks = np.flatnonzero(np.diff(w) > gap) + 1
    atoms = []
    for s, e in zip(np.concatenate([[0], breaks]).tolist(), np.concatenate([breaks, [w.size]]).tolist()):
        m = math.fsum(wt[s:e]) / B2
        if m > 0:
            atoms.append((float(np.mean(w[s:e])), m))
    return PsiDistribution(tuple(atoms), (), "EMPIRICAL")


def kolmogorov_distance(psi: PsiDistribution, cdf) -> float:
    """sup_t |Psi(t) - cdf(t)| for an atomic Psi against a continuous cdf."""
    if not psi.is_atomic:
        raise DomainError("kolmogorov_distance needs an atomic Psi")
    t = np.array([a for a, _ in psi.atoms])
    m = np.array([b for _, b in psi.atoms])
    right = np.cumsum(m)
    left = right - m
    c = np.asarray(cdf(t), dtype=float)
    return float(max(np.max(np.abs(right - c)), np.max(np.abs(left - c))))
