import json
import math

import numpy as np
import pytest
from scipy import stats

from cwsc.errors import CapacityError, ContractError, DomainError, ParameterError
from cwsc.measure import normalize
from cwsc.scalar import ModelParams, ld_rate
from cwsc.verification import (MomentSpec, VerificationReport, binomial_cdf, conditional_entry_moment,
                               conditional_h_moment, conditional_product_moment,
                               cw_expectation_bruteforce, definetti_expectation_quadrature,
                               exact_y_mean_small_n, large_deviation_exact, ld_bound,
                               log_binomial_pmf, mc_moment_estimate, tie_probability)


def monomial(k):
    return lambda x: np.prod(x[:, :k], axis=1)


@pytest.fixture(scope="module")
def mu8():
    return normalize(ModelParams(2.0, 2.0, 8))


class TestMomentSpec:
    def test_normalises_pairs(self):
        spec = MomentSpec(((3, 1), (0, 0)), ((2, 0),))
        assert spec.distinct_pairs == ((1, 3), (0, 0))
        assert (spec.ell, spec.p) == (2, 1)
        assert spec.multiplicities() == {(1, 3): 1, (0, 0): 1, (0, 2): 1}

    def test_repeated_multiplicity(self):
        spec = MomentSpec(((0, 1),), ((2, 3), (3, 2)))
        assert spec.multiplicities()[(2, 3)] == 2
        assert MomentSpec(((0, 1), (2, 3)), power=2).multiplicities() == {(0, 1): 2, (2, 3): 2}

    @pytest.mark.parametrize("kw", [dict(distinct_pairs=()),
                                    dict(distinct_pairs=((0, 1), (1, 0))),
                                    dict(distinct_pairs=((0, 1),), repeated_pairs=((1, 0),)),
                                    dict(distinct_pairs=((0, 1),), power=3),
                                    dict(distinct_pairs=((0, 1),), repeated_pairs=((0, 2),), power=2)])
    def test_contract(self, kw):
        with pytest.raises(ContractError):
            MomentSpec(**kw)

    def test_validate(self):
        with pytest.raises(ContractError):
            MomentSpec(((0, 5),)).validate(5)


class TestReport:
    def test_checks_and_serialisation(self):
        rep = VerificationReport("x", {"n": 4}, 0.9, 0.01, replicas=1000, seed=7)
        assert rep.check_within(0.92).passed
        assert not rep.check_within(0.95).passed
        assert rep.check_bound(0.87).passed
        d = json.loads(rep.check_within(0.92).to_json())
        assert set(d) == {"name", "params", "estimate", "se", "bound", "pass", "replicas", "seed", "notes"}
        assert d["pass"] is True and d["bound"] == 0.92
        assert rep.csv_row()[1] == '{"n": 4}'


class TestDeFinettiIdentity:
    @pytest.mark.parametrize("m_spins", [1, 4, 9])
    @pytest.mark.parametrize("beta", [0.5, 1.5, 2.0])
    def test_even_monomials(self, m_spins, beta):
        for k in range(0, m_spins + 1, 2):
            bf = cw_expectation_bruteforce(m_spins, beta, monomial(k))
            q = definetti_expectation_quadrature(m_spins, beta, k)
            assert q == pytest.approx(bf, rel=1e-9)

    def test_odd_monomials_vanish(self):
        for k in (1, 3):
            assert abs(cw_expectation_bruteforce(9, 2.0, monomial(k))) < 1e-12
            assert abs(definetti_expectation_quadrature(9, 2.0, k)) < 1e-12

    def test_callable_observable(self):
        # magnetisation squared: E_t[(sum x / M)^2] = t^2 + (1 - t^2)/M
        M = 6
        bf = cw_expectation_bruteforce(M, 1.5, lambda x: (x.sum(axis=1) / M) ** 2)
        q = definetti_expectation_quadrature(M, 1.5, lambda t: t * t + (1 - t * t) / M)
        assert q == pytest.approx(bf, rel=1e-9)

    def test_independent_spins_at_zero_beta(self):
        assert cw_expectation_bruteforce(5, 0.0, monomial(2)) == pytest.approx(0.0, abs=1e-15)

    def test_limits(self):
        with pytest.raises(CapacityError):
            cw_expectation_bruteforce(21, 1.0, monomial(1))
        with pytest.raises(ContractError):
            definetti_expectation_quadrature(4, 1.0, 5)


class TestBinomial:
    @pytest.mark.parametrize("trials, k, p", [(10, 3, 0.3), (55, 27, 0.75), (136, 68, 0.9787),
                                              (500, 100, 0.5), (20, 0, 0.5)])
    def test_cdf_against_scipy(self, trials, k, p):
        assert binomial_cdf(trials, k, p) == pytest.approx(stats.binom.cdf(k, trials, p), rel=1e-11)

    def test_pmf(self):
        np.testing.assert_allclose(np.exp(log_binomial_pmf(12, 0.4)), stats.binom.pmf(np.arange(13), 12, 0.4),
                                   rtol=1e-12)

    def test_edges(self):
        assert binomial_cdf(10, -1, 0.5) == 0.0
        assert binomial_cdf(10, 10, 0.5) == 1.0
        assert binomial_cdf(10, 4, 1.0) == 0.0
        assert binomial_cdf(10, 4, 0.0) == 1.0
        with pytest.raises(DomainError):
            binomial_cdf(10, 4, 1.5)
        with pytest.raises(CapacityError):
            binomial_cdf(10**6 + 1, 4, 0.5)

    def test_large_deviation_value(self):
        # K = 55 entries, P(Bin(55, 0.75) <= 27)
        assert large_deviation_exact(10, 0.5) == pytest.approx(3.2169523666e-05, rel=1e-9)
        assert large_deviation_exact(10, 0.5) <= ld_bound(10, 0.5)

    def test_bound(self):
        assert ld_bound(4, 0.5) == pytest.approx(math.exp(-16 * float(ld_rate(0.5))), rel=1e-15)
        assert -math.log(ld_bound(10, 0.5)) == pytest.approx(7.1920518112945, rel=1e-12)
        vals = [ld_bound(n, 0.3) for n in range(4, 17)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_symmetric_point(self):
        # at t=0 and odd K the lower half has probability exactly 1/2
        assert large_deviation_exact(5, 0.0) == pytest.approx(0.5, rel=1e-14)


class TestConditionalMoments:
    def test_entry(self):
        assert conditional_entry_moment(0.3, 0.0, 1) == pytest.approx(0.3)
        assert conditional_entry_moment(0.3, 0.5, 2) == pytest.approx(1 - 2 * 0.5 * 0.3 + 0.25)

    def test_h_moment(self):
        assert conditional_h_moment(0.9, 0.9, 2) == pytest.approx((1 + 0.81 - 1.62) ** 2)
        assert conditional_h_moment(0.9, 0.9, 1, branch=-1) == pytest.approx(1 + 0.81 + 1.62)
        with pytest.raises(DomainError):
            conditional_h_moment(1.2, 0.5, 1)

    def test_product(self):
        spec = MomentSpec(((0, 1), (2, 3)), power=2)
        assert conditional_product_moment(0.4, spec, 0.4) == pytest.approx((1 - 0.16) ** 2)


class TestMonteCarlo:
    def test_x_pair_moment(self, mu8):
        rep = mc_moment_estimate(mu8, MomentSpec(((0, 0), (0, 1))), "X", 4000, base_seed=1)
        target = mu8.expect(lambda t: t * t)
        assert rep.check_within(target).passed
        assert rep.replicas == 4000 and rep.seed == 1

    def test_parallel_matches_serial(self, mu8):
        spec = MomentSpec(((0, 1),))
        a = mc_moment_estimate(mu8, spec, "Y", 1000, base_seed=3)
        b = mc_moment_estimate(mu8, spec, "Y", 1000, base_seed=3, jobs=2)
        assert (a.estimate, a.standard_error) == (b.estimate, b.standard_error)

    def test_minimum_replicas(self, mu8):
        with pytest.raises(ParameterError):
            mc_moment_estimate(mu8, MomentSpec(((0, 1),)), "X", 999)

    def test_bad_target(self, mu8):
        with pytest.raises(ValueError):
            mc_moment_estimate(mu8, MomentSpec(((0, 1),)), "Z", 1000)


class TestExactYMean:
    def test_tie_identity(self, mu8):
        # E[Y(i,j)] = m P(S_N = 0) / sqrt(1 - m^2)
        m = mu8.m
        expected = m * tie_probability(mu8) / math.sqrt(1 - m * m)
        assert exact_y_mean_small_n(8, mu8) == pytest.approx(expected, rel=1e-5, abs=1e-14)

    @pytest.mark.parametrize("n", [5, 6, 9, 10])
    def test_odd_triangle_vanishes(self, n):
        mu = normalize(ModelParams(2.0, 2.0, n))
        assert n * (n + 1) // 2 % 2 == 1
        assert tie_probability(mu) == 0.0
        assert abs(exact_y_mean_small_n(n, mu)) < 1e-12

    def test_decreases_along_even_ladder(self):
        vals = [abs(exact_y_mean_small_n(n, normalize(ModelParams(2.0, 2.0, n)))) for n in (3, 4, 7, 8, 12)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_diagonal_pair(self, mu8):
        assert exact_y_mean_small_n(8, mu8, (3, 3)) == pytest.approx(exact_y_mean_small_n(8, mu8), abs=1e-13)

    def test_limits(self, mu8):
        with pytest.raises(CapacityError):
            exact_y_mean_small_n(13, normalize(ModelParams(2.0, 2.0, 13)))
        with pytest.raises(ContractError):
            exact_y_mean_small_n(7, mu8)
