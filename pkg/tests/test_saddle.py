import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr

from addlab import arith, model, psi as P, saddle
from addlab._special import EULER_GAMMA, normal_tail
from addlab.errors import DomainError, PreconditionError

MERTENS = 0.2614972128476428  # sum_p 1/p - loglog x -> M
PRIME_ZETA_2 = 0.4522474200410654985
PSIS = [P.atom(1.0), P.atom(0.37), P.from_atoms([1, 2], [0.5, 0.5]), P.uniform(0, 1),
        P.from_atoms([0.2, 1.1, 3.0], [0.5, 0.3, 0.2]),
        P.PsiDistribution(((1.5, 0.4),), ((0.0, 0.0), (2.0, 0.6)))]


def mills(d):
    """Ratio of the Delta -> infinity tail form phi(d)/d to the exact normal tail."""
    return math.exp(-d * d / 2) / math.sqrt(2 * math.pi) / d / ndtr(-d)


class TestOmega:
    def test_examples(self):
        assert saddle.solve_omega(P.atom(1.0), 1.0) == pytest.approx(math.log(2), abs=1e-15)
        assert all(saddle.solve_omega(psi, 0.0) == 0.0 for psi in PSIS)

    @pytest.mark.parametrize("a", [0.1, 0.5, 2.0, 7.0])
    @pytest.mark.parametrize("z", [0.01, 0.5, 3.0])
    def test_atom_alpha(self, a, z):
        assert saddle.solve_omega(P.atom(a), z) == pytest.approx(math.log1p(a * z) / a, rel=1e-13)

    @given(st.integers(0, len(PSIS) - 1), st.floats(1e-6, 20.0))
    def test_residual(self, i, z):
        psi = PSIS[i]
        sol = saddle.solve_omega_full(psi, z)
        m2 = psi.moment(2)
        assert abs(sol.residual) <= 1e-13 * m2
        g = psi.tilt_gap(sol.omega) - z * m2
        assert abs(g) <= 1e-13 * m2 * max(1.0, z)

    def test_random_cases(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 5))
            ts = rng.uniform(0.05, 4.0, size=n)
            ms = rng.dirichlet(np.ones(n))
            ms[-1] = 1.0 - math.fsum(ms[:-1])
            try:
                psi = P.from_atoms(ts, ms)
            except Exception:
                continue
            z = float(rng.uniform(0, 10))
            sol = saddle.solve_omega_full(psi, z)
            assert abs(sol.residual) <= 1e-13 * psi.moment(2)

    @pytest.mark.parametrize("psi", PSIS)
    def test_increasing(self, psi):
        w = [saddle.solve_omega(psi, z) for z in np.linspace(0, 5, 101)]
        assert np.all(np.diff(w) > 0)


class TestVParam:
    def test_zero(self):
        s = saddle.v_param(P.atom(1.0), 1e6, 0.0)
        assert s.v == 0.0 and s.S is None

    def test_atom_closed(self):
        x = 1e8
        s = saddle.v_param(P.atom(1.0), x, 1.5)
        sig = math.sqrt(math.log(math.log(x)))
        assert s.v == pytest.approx(math.log1p(1.5 / sig), rel=1e-14)

    @pytest.mark.parametrize("psi", PSIS)
    def test_small_delta(self, psi):
        ratios = []
        for d in (1e-1, 1e-2, 1e-3):
            s = saddle.v_param(psi, 1e6, d)
            ratios.append(abs(s.v / s.z - 1))
        assert ratios[2] < ratios[1] < ratios[0] and ratios[2] < 1e-2

    def test_defining_equation(self):
        psi = PSIS[4]
        s = saddle.v_param(psi, 1e7, 2.0)
        assert abs(s.psi_at_v[1] - psi.moment(1) - s.z * psi.moment(2)) <= 1e-12

    def test_small_x(self):
        with pytest.raises(DomainError):
            saddle.v_param(P.atom(1.0), 15, 1.0)


class TestS:
    def test_example(self):
        x = math.exp(math.exp(4))
        d = 2.0  # sigma_Psi = sqrt(loglog x) = 2, so z = 1 and v = log 2
        s = saddle.S_formula(P.atom(1.0), x, d)
        assert s.v == pytest.approx(math.log(2), abs=1e-15)
        A = 2 - 1 - 2 * math.log(2)
        ref = math.exp(4 * A) / (math.log(2) * math.sqrt(2 * math.pi * 2 * 4))
        assert s.value == pytest.approx(ref, rel=1e-12)
        assert s.value == pytest.approx(0.043398785248105, rel=1e-12)

    def test_delta_zero(self):
        with pytest.raises(DomainError):
            saddle.S_formula(P.atom(1.0), 1e6, 0)

    @given(st.integers(0, len(PSIS) - 1), st.floats(0.0, 12.0))
    def test_exponent_nonpositive(self, i, v):
        a = PSIS[i].a_exponent(v)
        assert a <= 0 and (a < 0 or v < 1e-100)

    @given(st.integers(0, len(PSIS) - 1), st.floats(0.2, 5.0), st.floats(0.1, 4.0))
    def test_rescaling(self, i, alpha, d):
        psi = PSIS[i]
        a = saddle.S_formula(psi, 1e9, d)
        b = saddle.S_formula(psi.scaled(1 / alpha), 1e9, d)
        assert b.log_value == pytest.approx(a.log_value, rel=1e-12, abs=1e-12)


class TestNormal:
    def test_values(self):
        assert normal_tail(0.0) == 0.5
        assert normal_tail(1.959964) == pytest.approx(0.025, abs=1e-6)
        assert normal_tail(1.0) == pytest.approx(0.15865525393145707, rel=1e-14)
        mp.mp.dps = 40
        for d in (0.3, 3.0, 8.0, 20.0):
            assert normal_tail(d) == pytest.approx(float(mp.erfc(d / mp.sqrt(2)) / 2), rel=1e-14)

    def test_mills(self):
        d = 10.0
        r = normal_tail(d) * math.sqrt(2 * math.pi) * d * math.exp(d * d / 2)
        assert 0.99 <= r <= 1.0


class TestL:
    @pytest.mark.parametrize("f", [arith.omega(), arith.frac_alpha(), arith.scaled(arith.omega(), 2)])
    @pytest.mark.parametrize("P_", [1000, 10**5])
    def test_zero(self, f, P_):
        assert saddle.L_product(f, 0.0, P_).value == 1.0

    def test_at_small_nonzero_z(self):
        assert abs(saddle.L_product(arith.omega(), 1e-12, 10**4).value - 1) <= 1e-10

    def test_zeta2(self):
        L = saddle.L_product(arith.omega(), math.log(2), 10**7)
        ref = 6 / math.pi**2
        # identity: each factor is 1 - 1/p^2, so the truncation error is about 1/(P log P)
        primes = arith.sieve_primes(10**7).astype(float)
        assert L.log_value == pytest.approx(math.fsum(np.log1p(-1 / primes**2)), abs=1e-12)
        assert abs(L.value - ref) <= 1e-6

    @pytest.mark.parametrize("z", [0.3, 1.0, 2.5])
    def test_positive(self, z):
        L = saddle.L_product(arith.omega(), z, 10**5)
        assert L.value > 0 and math.isfinite(L.value)

    def test_frac_against_direct(self):
        f, z = arith.frac_alpha(), 0.8
        primes = arith.sieve_primes(5000)
        psih = P.uniform(0, 1).laplace(z)
        ref = mp.fsum(psih * mp.log(1 - mp.mpf(1) / int(p)) + mp.log(1 + mp.exp(z * f.at_prime(int(p))) / (int(p) - 1))
                      for p in primes)
        assert saddle.L_product(f, z, 5000).log_value == pytest.approx(float(ref), abs=1e-12)


class TestC:
    def test_mertens(self):
        c = saddle.c_constant(arith.omega(), P.atom(1.0), [10**5, 10**6, 10**7, 10**8])
        assert abs(c.value - MERTENS) <= 2e-3
        assert c.grid == (10**5, 10**6, 10**7, 10**8)

    def test_scaled_doubles(self):
        grid = [10**4, 10**5, 10**6]
        a = saddle.c_constant(arith.omega(), P.atom(1.0), grid)
        b = saddle.c_constant(arith.scaled(arith.omega(), 2), P.atom(2.0), grid)
        assert b.value == pytest.approx(2 * a.value, rel=1e-12)

    def test_table_self_consistent(self):
        f = arith.table({int(p): 1.0 for p in arith.sieve_primes(10**6)})
        c = saddle.c_constant(f, P.atom(1.0), [10**4, 10**5, 10**6])
        assert abs(c.value - MERTENS) <= c.uncertainty + 1e-2

    def test_grid_checks(self):
        with pytest.raises(DomainError):
            saddle.c_constant(arith.omega(), P.atom(1.0), [10**4, 10**5])


class TestA:
    @pytest.mark.parametrize("psi", PSIS)
    def test_at_zero(self, psi):
        assert saddle.a_factor(psi, 0.0) == 1.0

    def test_example(self):
        assert saddle.a_factor(P.atom(1.0), 1.0) == pytest.approx(math.exp(-EULER_GAMMA), rel=1e-13)
        assert saddle.a_factor(P.atom(1.0), 1.0) == pytest.approx(0.5614594836, rel=1e-9)

    @pytest.mark.parametrize("z", np.linspace(0, 3, 13))
    def test_atom_closed(self, z):
        ref = math.exp(-EULER_GAMMA * z) / math.gamma(1 + z)
        assert saddle.a_factor(P.atom(1.0), z) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("psi", PSIS)
    def test_strictly_decreasing(self, psi):
        vals = [saddle.a_factor(psi, z) for z in np.arange(0, 4.0001, 0.01)]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestExponentSeries:
    def test_atom(self):
        a = saddle.exponent_series(P.atom(1.0), 8)
        # z - (1+z) log(1+z) = -sum_{n>=2} (-1)^n z^n / (n (n-1))
        ref = [0, 0] + [-((-1) ** n) / (n * (n - 1)) for n in range(2, 9)]
        np.testing.assert_allclose(a, ref, atol=1e-14)
        assert a[2] == -0.5 and a[3] == pytest.approx(1 / 6) and a[4] == pytest.approx(-1 / 12)

    @pytest.mark.parametrize("psi", PSIS)
    def test_a2(self, psi):
        a = saddle.exponent_series(psi, 10)
        assert a[0] == a[1] == 0.0
        assert abs(a[2] + psi.moment(2) / 2) <= 1e-12

    @pytest.mark.parametrize("psi", PSIS[2:])
    def test_against_direct(self, psi):
        """E(z) = A(omega(z)) evaluated through the solver at small z."""
        a = saddle.exponent_series(psi, 16)
        for z in (0.02, 0.05, 0.1):
            direct = psi.a_exponent(saddle.solve_omega(psi, z))
            series = math.fsum(a[k] * z**k for k in range(17))
            assert series == pytest.approx(direct, rel=1e-10, abs=1e-15)

    @pytest.mark.parametrize("psi", PSIS[2:4])
    def test_finite_difference(self, psi):
        a = saddle.exponent_series(psi, 6)

        def E(z):
            return psi.a_exponent(saddle.solve_omega(psi, z)) if z > 0 else 0.0

        errs = []
        for h in (1e-2, 5e-3):
            second = 2 * E(h) / h**2  # E(0) = E'(0) = 0
            errs.append(abs(second / 2 - a[2] - a[3] * h))
        assert errs[1] < errs[0] / 3  # O(h^2)

    @given(st.floats(0.2, 5.0))
    def test_scale_invariant(self, alpha):
        psi = PSIS[4]
        a = saddle.exponent_series(psi, 8)
        b = saddle.exponent_series(psi.scaled(1 / alpha), 8)
        # E(z) in sigma_Psi units: coefficients of E(z / sqrt(m2))
        sa = math.sqrt(psi.moment(2))
        sb = math.sqrt(psi.scaled(1 / alpha).moment(2))
        k = np.arange(9)
        np.testing.assert_allclose(a / sa**k, b / sb**k, rtol=1e-11, atol=1e-14)


class TestRho:
    @pytest.mark.parametrize("alpha,rho", [(0.5, 3), (0.6, 4), (0.9, 19), (0.4, 3), (0.34, 3)])
    def test_values(self, alpha, rho):
        assert saddle.rho_alpha(alpha) == rho

    @pytest.mark.parametrize("alpha", [1 / 3, 1.0, 0.2, 1.5])
    def test_domain(self, alpha):
        with pytest.raises(DomainError):
            saddle.rho_alpha(alpha)


class TestMomentEquivalence:
    PSI1 = P.from_atoms([1, 2], [0.5, 0.5])
    PSI2 = P.from_atoms([0.5, 1.5, 2.5], [1 / 8, 3 / 4, 1 / 8])

    def test_construction(self):
        for k in (0, 1, 2, 3):
            assert self.PSI2.moment(k) == pytest.approx(self.PSI1.moment(k), rel=1e-15)
        assert self.PSI1.moment(4) == 8.5 and self.PSI2.moment(4) == pytest.approx(139 / 16, rel=1e-15)

    def test_rho3_vs_rho4(self):
        assert saddle.moment_equivalence(self.PSI1, self.PSI2, 0.5).equivalent
        r = saddle.moment_equivalence(self.PSI1, self.PSI2, 0.6)
        assert not r.equivalent and r.checked_moments == (3, 4)

    def test_identical(self):
        for a in (0.35, 0.5, 0.8, 0.95):
            assert saddle.moment_equivalence(PSIS[4], PSIS[4], a).equivalent

    @given(st.floats(0.34, 0.96), st.floats(0.34, 0.96))
    def test_monotone_in_alpha(self, a, b):
        lo, hi = min(a, b), max(a, b)
        if saddle.moment_equivalence(self.PSI1, self.PSI2, hi).equivalent:
            assert saddle.moment_equivalence(self.PSI1, self.PSI2, lo).equivalent

    def test_order_cap(self):
        with pytest.raises(DomainError):
            saddle.moment_equivalence(self.PSI1, self.PSI2, 0.99)

    def test_second_moment_mismatch(self):
        with pytest.raises(PreconditionError):
            saddle.moment_equivalence(P.atom(1.0), P.atom(2.0), 0.5)


def _omega_lattice():
    return saddle.LatticeInputs(arith.omega(), lambda a, v: model.p_h_factor({}, a, v).value)


class TestDispatcher:
    def test_normal(self):
        p = saddle.tail_asymptotic(arith.omega(), P.atom(1.0), 1e6, 1.0, "NORMAL")
        assert p.prediction == pytest.approx(0.15865525393145707, rel=1e-14)

    def test_normal_depends_only_on_delta(self):
        a = saddle.tail_asymptotic(arith.omega(), P.atom(1.0), 1e6, 1.7, "NORMAL")
        b = saddle.tail_asymptotic(arith.frac_alpha(), P.uniform(0, 1), 1e9, 1.7, "NORMAL")
        assert a.log_prediction == b.log_prediction

    @given(st.floats(0.2, 5.0), st.floats(0.5, 4.0))
    def test_s_only_rescaling(self, alpha, d):
        f, psi = arith.frac_alpha(), P.uniform(0, 1)
        a = saddle.tail_asymptotic(f, psi, 1e8, d, "S_ONLY")
        b = saddle.tail_asymptotic(arith.scaled(f, 1 / alpha), psi.scaled(1 / alpha), 1e8, d, "S_ONLY")
        assert b.log_prediction == pytest.approx(a.log_prediction, rel=1e-12)

    def test_full_factorization(self):
        f, psi = arith.frac_alpha(), P.uniform(0, 1)
        s = saddle.tail_asymptotic(f, psi, 1e7, 1.5, "S_ONLY")
        full = saddle.tail_asymptotic(f, psi, 1e7, 1.5, "FULL", c_f=-0.3, L_P=10**5)
        fa = full.factors
        assert full.regime in ("VALID", "EXTRAPOLATED")
        assert full.prediction / s.prediction == pytest.approx(fa["L"] * fa["exp_minus_vc"] * fa["inv_gamma"], rel=1e-12)

    def test_errors(self):
        with pytest.raises(DomainError):
            saddle.tail_asymptotic(arith.omega(), P.atom(1.0), 1e6, 0.0, "FULL", c_f=0.26)
        with pytest.raises(PreconditionError):
            saddle.tail_asymptotic(arith.omega(), P.atom(1.0), 1e6, 1.0, "FULL", c_f=0.26)
        with pytest.raises(PreconditionError):
            saddle.tail_asymptotic(arith.omega(), P.atom(1.0), 1e6, 1.0, "FULL")

    def test_lattice_against_sathe_selberg(self):
        """omega at loglog x = 1280 against sum_{k >= xi} pi_k(x)/x from the Sathe-Selberg formula.

        The S-form is the Delta -> infinity shape, so the ratio carries the normal
        Mills factor phi(Delta)/(Delta Nbar(Delta)); after removing it the two agree.
        """
        f, ll = arith.omega(), 1280.0
        mu, sig = ll + MERTENS, math.sqrt(ll + MERTENS - PRIME_ZETA_2)
        cache = {}

        def log_F(z):  # F(1, z) = prod (1-1/p)^z (1 + z/(p-1)) = L(omega; log z)
            if z not in cache:
                cache[z] = saddle.L_product(f, math.log(z), 10**6).corrected_log
            return cache[z]

        for d in (2.0, 4.0):
            pred = saddle.tail_asymptotic(f, P.atom(1.0), None, d, "FULL", mu=mu, sigma=sig, c_f=MERTENS,
                                          lattice_inputs=_omega_lattice(), lattice=True, L_P=10**6,
                                          loglog_x=ll)
            k = math.ceil(mu + d * sig)
            terms = []
            while not terms or terms[-1] > max(terms) - 40:
                z = (k - 1) / ll
                terms.append(-ll + (k - 1) * math.log(ll) - math.lgamma(k) + log_F(z) - math.lgamma(1 + z))
                k += 1
            m = max(terms)
            log_ss = m + math.log(math.fsum(math.exp(t - m) for t in terms))
            ratio = math.exp(pred.log_prediction - log_ss)
            assert abs(ratio / mills(d) - 1) <= 0.01

    def test_lattice_against_dp(self):
        """FULL / (A * model DP) for omega at sievable x: reported, bounded within 25% after Mills."""
        f, psi = arith.omega(), P.atom(1.0)
        c = saddle.c_constant(f, psi, [10**4, 10**5, 10**6]).value
        for x in (10**4, 10**5, 10**6):
            st_ = arith.prime_stats(f, x)
            ens = model.ensemble(f, x)
            for k in (st_.mu + 1.5 * st_.sigma,):
                xi = math.ceil(k) - 0.5  # keep {xi} away from the lattice points
                d = (xi - st_.mu) / st_.sigma
                pred = saddle.tail_asymptotic(f, psi, x, d, "FULL", mu=st_.mu, sigma=st_.sigma, c_f=c,
                                              lattice_inputs=_omega_lattice(), lattice=True, L_P=10**6)
                dp = model.exact_tail_dp(ens, xi).value
                A = saddle.a_factor(psi, d / st_.sigma)
                r = pred.prediction / (A * dp) / mills(d)
                assert 0.75 <= r <= 1.25


class TestXi:
    def test_zero_delta(self):
        s = arith.prime_stats(arith.omega(), 10**6)
        c = saddle.c_constant(arith.omega(), P.atom(1.0), [10**4, 10**5, 10**6]).value
        r = saddle.xi_threshold(P.atom(1.0), s.mu, s.sigma, 10**6, 0.0, c)
        assert r.xi == s.mu and abs(r.difference) <= 1e-12

    def test_omega_1e8(self):
        s = arith.prime_stats(arith.omega(), 10**8)
        c = s.mu - s.loglog_x
        r = saddle.xi_threshold(P.atom(1.0), s.mu, s.sigma, 10**8, 1.0, c)
        assert abs(r.difference) <= 0.5

    def test_scaling(self):
        s = arith.prime_stats(arith.omega(), 10**5)
        a = saddle.xi_threshold(P.atom(1.0), s.mu, s.sigma, 10**5, 1.2, 0.26)
        b = saddle.xi_threshold(P.atom(3.0), 3 * s.mu, 3 * s.sigma, 10**5, 1.2, 3 * 0.26)
        assert b.xi == pytest.approx(3 * a.xi, rel=1e-15)
        assert b.surrogate == pytest.approx(3 * a.surrogate, rel=1e-13)
