import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from adaptsched.prob import (
    DiscreteLaw,
    analysis_constants,
    binom_cdf,
    binom_pmf,
    clipped_geom_law,
    concentration_reference,
    geom_cdf,
    geom_pmf,
    geom_range_prob,
    kstar,
    min_geom_law,
    stoch_dominates,
    truncated_geom_mean,
    weighted_bernoulli_sum_law,
)


class TestGeometric:
    def test_q_one_point_mass(self):
        assert geom_pmf(1.0, 1) == 1.0
        assert geom_pmf(1.0, 2) == 0.0

    def test_pmf_value(self):
        assert geom_pmf(0.5, 3) == pytest.approx(0.125, abs=1e-15)

    def test_pmf_below_support(self):
        assert geom_pmf(0.5, 0) == 0.0

    def test_range_closed_form_vs_summation(self):
        for q in (0.1, 0.5, 0.9):
            for a in range(-2, 8):
                for b in range(a, 10):
                    summed = sum(geom_pmf(q, g) for g in range(max(a, 1), b + 1))
                    assert geom_range_prob(q, a, b) == pytest.approx(summed, abs=1e-12)

    def test_range_example(self):
        assert geom_range_prob(0.5, 2, 4) == pytest.approx(0.4375, abs=1e-15)

    def test_cdf_matches_range(self):
        for g in range(0, 6):
            assert geom_cdf(0.3, g) == pytest.approx(geom_range_prob(0.3, 1, g) if g >= 1 else 0.0)

    def test_infinite_upper_end(self):
        assert geom_range_prob(0.25, 3, math.inf) == pytest.approx(0.75**2, abs=1e-15)


class TestBinomial:
    def test_degenerate_p(self):
        assert binom_pmf(5, 0.0, 0) == 1.0
        assert binom_pmf(5, 1.0, 5) == 1.0
        assert binom_pmf(5, 0.0, 1) == 0.0

    def test_simple_value(self):
        assert binom_pmf(2, 0.5, 1) == pytest.approx(0.5, abs=1e-15)

    def test_out_of_range(self):
        assert binom_pmf(3, 0.4, -1) == 0.0
        assert binom_pmf(3, 0.4, 4) == 0.0
        assert binom_cdf(3, 0.4, -1) == 0.0
        assert binom_cdf(3, 0.4, 3) == 1.0

    def test_against_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 200))
            p = float(rng.random())
            k = int(rng.integers(0, n + 1))
            assert binom_pmf(n, p, k) == pytest.approx(stats.binom.pmf(k, n, p), abs=1e-12)
            assert binom_cdf(n, p, k) == pytest.approx(stats.binom.cdf(k, n, p), abs=1e-11)

    def test_cdf_matches_summed_pmf(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 60))
            p = float(rng.random())
            k = int(rng.integers(0, n + 1))
            summed = math.fsum(binom_pmf(n, p, j) for j in range(k + 1))
            assert binom_cdf(n, p, k) == pytest.approx(summed, abs=1e-12)

    def test_large_n_stable(self):
        v = binom_pmf(10**6, 0.5, 500_000)
        assert 0 < v < 1 and math.isfinite(v)


class TestDominance:
    def test_reflexive(self):
        law = DiscreteLaw.binomial(4, 0.3)
        assert stoch_dominates(law, law)

    def test_bernoulli_ordering(self):
        assert stoch_dominates(DiscreteLaw.bernoulli(0.3), DiscreteLaw.bernoulli(0.6))
        assert not stoch_dominates(DiscreteLaw.bernoulli(0.6), DiscreteLaw.bernoulli(0.3))

    def test_binomial_ordering(self):
        assert stoch_dominates(DiscreteLaw.binomial(4, 0.5), DiscreteLaw.binomial(4, 0.7))

    @given(st.integers(1, 5), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    @settings(max_examples=40, deadline=None)
    def test_antisymmetry_on_binomials(self, n, p1, p2):
        a, b = DiscreteLaw.binomial(n, p1), DiscreteLaw.binomial(n, p2)
        if stoch_dominates(a, b) and stoch_dominates(b, a):
            for z in set(a.values) | set(b.values):
                assert a.tail(z) == pytest.approx(b.tail(z), abs=1e-9)

    def test_transitive_on_sample_triples(self):
        laws = [DiscreteLaw.binomial(5, p) for p in (0.2, 0.4, 0.6)]
        assert stoch_dominates(laws[0], laws[1])
        assert stoch_dominates(laws[1], laws[2])
        assert stoch_dominates(laws[0], laws[2])

    @given(
        st.lists(st.tuples(st.floats(0.5, 2.0), st.floats(0.1, 0.9)), min_size=1, max_size=7),
    )
    @settings(max_examples=30, deadline=None)
    def test_bernoulli_sum_sandwich(self, pairs):
        # weighted independent Bernoulli sums are sandwiched between the
        # homogeneous scaled binomials built from the extreme weight/probability
        weights = [w for w, _ in pairs]
        probs = [p for _, p in pairs]
        law = weighted_bernoulli_sum_law(weights, probs)
        r = len(pairs)
        lo = DiscreteLaw.binomial(r, min(probs)).scale(min(weights))
        hi = DiscreteLaw.binomial(r, max(probs)).scale(max(weights))
        assert stoch_dominates(lo, law)
        assert stoch_dominates(law, hi)

    def test_sandwich_with_unequal_counts(self):
        # fewer lower-bound summands and more upper-bound summands keep the sandwich
        weights, probs = [1.0, 1.5, 2.0], [0.3, 0.5, 0.4]
        law = weighted_bernoulli_sum_law(weights, probs)
        lo = DiscreteLaw.binomial(2, 0.3).scale(1.0)
        hi = DiscreteLaw.binomial(5, 0.5).scale(2.0)
        assert stoch_dominates(lo, law)
        assert stoch_dominates(law, hi)


class TestClippedLaws:
    def test_min_geom_support_and_mass(self):
        law = min_geom_law(4, 0.5)
        assert law.values == (1.0, 2.0, 3.0, 4.0)
        assert sum(law.probs) == pytest.approx(1.0, abs=1e-15)
        assert law.probs[-1] == pytest.approx(0.125, abs=1e-15)  # P(G >= 4)

    def test_clipped_complement_identity(self):
        # k - min(k, G) == (k - G)+ pointwise, so the laws mirror each other
        k, q = 5, 0.3
        a = min_geom_law(k, q)
        b = clipped_geom_law(k, q)
        mirrored = {k - v: p for v, p in zip(a.values, a.probs)}
        for v, p in zip(b.values, b.probs):
            assert mirrored[v] == pytest.approx(p, abs=1e-15)

    def test_clip_zero(self):
        assert clipped_geom_law(0, 0.5).values == (0.0,)
        assert min_geom_law(0, 0.5).values == (0.0,)


class TestTruncatedGeomMean:
    def test_empty_sum(self):
        # floor(lambda0 * N) <= 1 leaves nothing to add
        assert truncated_geom_mean(0.2, 5) == 0.0

    def test_lower_bound_lambda_over_e(self):
        v = truncated_geom_mean(0.5, 10_000)
        assert v >= 0.5 / math.e

    def test_limit_matches_exponential_integral(self):
        # E[(1 - X/lam)+] for X ~ Exp(1) equals (lam + e^-lam - 1)/lam; the
        # oracle below integrates it numerically
        for lam in (0.3, 0.5, 0.8):
            xs = np.linspace(0.0, lam, 200_001)
            oracle = float(np.trapezoid((1 - xs / lam) * np.exp(-xs), xs))
            closed = (lam + math.exp(-lam) - 1.0) / lam
            assert oracle == pytest.approx(closed, abs=1e-8)
            assert truncated_geom_mean(lam, 10**6) == pytest.approx(closed, abs=1e-3)

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            truncated_geom_mean(1.5, 100)
        with pytest.raises(ValueError):
            truncated_geom_mean(0.5, 1)


class TestConcentrationReference:
    def test_markov(self):
        assert concentration_reference("markov", E=1.0, zeta=2.0) == 0.5

    def test_hoeffding(self):
        assert concentration_reference("hoeffding", m=100, zeta=0.1) == pytest.approx(
            math.exp(-2.0), abs=1e-15
        )

    def test_chernoff_upper(self):
        assert concentration_reference("chernoff_upper", mu=10, eta=0.5) == pytest.approx(
            math.exp(-10 * 0.25 / 3), abs=1e-15
        )

    def test_chernoff_lower_and_poisson(self):
        assert concentration_reference("chernoff_lower", mu=8, eta=0.25) == pytest.approx(
            math.exp(-8 * 0.0625 / 2)
        )
        assert concentration_reference("chernoff_poisson", mu=5, zeta=3.0) == pytest.approx(
            math.exp(-5 * 9 / 5)
        )

    def test_domain_rejection(self):
        with pytest.raises(ValueError):
            concentration_reference("chernoff_upper", mu=10, eta=1.5)
        with pytest.raises(ValueError):
            concentration_reference("markov", E=1.0, zeta=0.0)
        with pytest.raises(ValueError):
            concentration_reference("nope", x=1)

    def test_bounds_actually_bound_binomial_tails(self):
        # sanity: the upper-tail curve sits above the exact binomial tail
        n, p = 400, 0.1
        mu = n * p
        for eta in (0.2, 0.5, 0.9):
            exact_tail = 1.0 - binom_cdf(n, p, int(math.ceil((1 + eta) * mu)) - 1)
            assert exact_tail <= concentration_reference("chernoff_upper", mu=mu, eta=eta) + 1e-12


class TestAnalysisConstants:
    def test_kstar_values(self):
        assert kstar(16) == 3
        assert kstar(2) == 2
        assert kstar(2**96) == 8

    def test_kstar_rejects_small_m(self):
        with pytest.raises(ValueError):
            kstar(1)

    def test_gamma_sequence(self):
        c = analysis_constants(33.0, 2**20)
        assert c.gamma[0] == 1.0
        assert c.gamma[1] == 0.5
        assert c.gamma[2] == 0.125
        for k, g in enumerate(c.gamma, start=1):
            assert g == pytest.approx(0.5 ** (2 ** (k - 1) - 1), abs=1e-300)

    def test_beta_base_and_limit(self):
        c = analysis_constants(33.0, 1024)
        assert c.beta[0] == 0.75  # beta_2: empty sum
        assert c.beta_inf > 5.0 / 8.0

    def test_psi_epsilon_formulas(self):
        c = analysis_constants(33.0, 4096)
        assert c.psi == pytest.approx(1.0 / (8 * c.kstar + 16), abs=1e-15)
        assert c.epsilon == pytest.approx(math.exp(-(1.0) * 4096 ** (1 / 3) / 768), abs=1e-15)

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            analysis_constants(32.0, 64)

    def test_kstar_is_first_index_below_m_to_minus_two_thirds(self):
        for m in (2, 3, 4, 8, 16, 64, 256, 1024, 2**20, 2**30):
            c = analysis_constants(33.0, m)
            thresh = m ** (-2.0 / 3.0)
            assert c.gamma[c.kstar - 1] < thresh
            if c.kstar >= 2:
                assert c.gamma[c.kstar - 2] >= thresh
