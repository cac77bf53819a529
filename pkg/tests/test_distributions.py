import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from exchbin.distributions import (
    BetaBinomialPrentice, Binomial, FoldedLogistic, LapGam, Pmf, PPower, ProbabilitySequence,
    QPower, check_complete_monotone, exact_pmf, family_moments, family_pmf, family_sequence,
    invert_pmf, laplace_transform_check, prentice_gamma_lower_bound,
)
from exchbin.exceptions import ConstraintViolation, DomainError

from oracles import beta_moments, enumerate_beta_mixture

BRASSICA_N = 337

# five values per parameter spanning each family's range
FAMILY_GRID = {
    Binomial: [(0.0, 0.1, 0.5, 0.9, 1.0)],
    FoldedLogistic: [(0.0, 0.1, 1.0, 3.0, 10.0)],
    PPower: [(0.0, 0.1, 0.5, 0.9, 1.0), (0.0, 0.25, 0.5, 0.75, 1.0)],
    QPower: [(0.0, 0.1, 0.5, 0.9, 1.0), (0.0, 0.25, 0.5, 0.75, 1.0)],
    LapGam: [(0.1, 0.5, 1.0, 5.0, 10.0), (0.0, 0.1, 1.0, 5.0, 10.0)],
}
PRENTICE_MU = (0.01, 0.1, 0.5, 0.9, 0.99)


def grid_specs():
    for cls, axes in FAMILY_GRID.items():
        for params in itertools.product(*axes):
            yield cls(*params)


def prentice_gammas(mu, m):
    lb = prentice_gamma_lower_bound(mu, m) if m > 1 else -0.5
    return (lb, lb / 2, 0.0, 0.5, 10.0)


# --------------------------------------------------------------------- exact / inverse


def test_exact_pmf_m1():
    np.testing.assert_allclose(exact_pmf(ProbabilitySequence(1, [1, 0.3])).mass, [0.7, 0.3], atol=1e-15)


def test_exact_pmf_independence_is_binomial():
    pmf = exact_pmf(ProbabilitySequence(3, 0.5 ** np.arange(4)))
    np.testing.assert_allclose(pmf.mass, [0.125, 0.375, 0.375, 0.125], atol=1e-15)


def test_exact_pmf_beta_mixture_enumeration():
    seq = ProbabilitySequence(4, beta_moments(2, 3, 4))
    np.testing.assert_allclose(exact_pmf(seq).mass, enumerate_beta_mixture(2, 3, 4), atol=1e-12)


def test_exact_pmf_rejects_invalid_sequence():
    with pytest.raises(ConstraintViolation):
        exact_pmf(ProbabilitySequence(2, [1.0, 0.2, 0.9]))


def test_exact_pmf_clamps_tiny_negatives():
    # 1e-10 of negative mass at s=0 is within the clamp tolerance
    seq = ProbabilitySequence(2, [1.0, 1.0, 1.0 + 1e-10])
    pmf = exact_pmf(seq)
    assert pmf.mass.min() >= 0


def test_invert_pmf_examples():
    np.testing.assert_allclose(invert_pmf(Pmf(3, np.array([0, 0, 0, 1.0]))).p, 1.0)
    np.testing.assert_allclose(invert_pmf(Pmf(3, np.array([0.125, 0.375, 0.375, 0.125]))).p,
                               0.5 ** np.arange(4), atol=1e-15)


def test_invert_round_trip_random(rng):
    for _ in range(100):
        m = int(rng.integers(1, 13))
        a, b = rng.uniform(0.2, 5, 2)
        seq = ProbabilitySequence(m, beta_moments(a, b, m))
        back = invert_pmf(exact_pmf(seq))
        np.testing.assert_allclose(back.p, seq.p, atol=1e-10)
        back.check()


# --------------------------------------------------------------------- families


def test_family_sequence_examples():
    np.testing.assert_array_equal(family_sequence(LapGam(2, 0), 5).p, np.ones(6))
    np.testing.assert_allclose(family_sequence(LapGam(1, 1), 3).p, [1, 1 / 2, 1 / 3, 1 / 4], rtol=1e-15)
    np.testing.assert_allclose(family_sequence(FoldedLogistic(1), 2).p, [1, 2 / 3, 1 / 2], rtol=1e-15)


def test_family_sequence_power_forms():
    seq = family_sequence(PPower(0.6, 0.5), 4)
    np.testing.assert_allclose(seq.p, [1] + [0.6 ** np.sqrt(j) for j in range(1, 5)], rtol=1e-15)
    q = family_sequence(QPower(0.3, 0.7), 4)
    assert q.complement
    np.testing.assert_allclose(q.p, [1] + [0.3 ** (j ** 0.7) for j in range(1, 5)], rtol=1e-15)
    # gamma = 0 keeps p_0 = 1 (complete dependence)
    np.testing.assert_allclose(family_sequence(PPower(0.4, 0.0), 3).p, [1, 0.4, 0.4, 0.4])


def test_degenerate_lapgam_point_mass():
    np.testing.assert_allclose(family_pmf(LapGam(2, 0), 6).mass, [0] * 6 + [1])


def test_qpower_gamma_one_is_binomial():
    np.testing.assert_allclose(family_pmf(QPower(0.4, 1), 3).mass,
                               stats.binom.pmf(range(4), 3, 0.6), atol=1e-15)


def test_qpower_direct_matches_reflected_sequence():
    for q, g, m in [(0.3, 0.7, 6), (0.8, 0.2, 9), (0.5, 0.5, 12)]:
        direct = family_pmf(QPower(q, g), m).mass
        via_seq = exact_pmf(family_sequence(QPower(q, g), m)).mass
        np.testing.assert_allclose(direct, via_seq, atol=1e-14)


def test_binomial_table1_column():
    expected = family_pmf(Binomial(0.5806), 3).mass * BRASSICA_N
    np.testing.assert_allclose(expected, [24.86, 103.24, 142.93, 65.96], atol=0.05)


def test_prentice_from_rounded_table2_estimates():
    rho = 0.087
    spec = BetaBinomialPrentice(0.581, rho / (1 - rho))
    expected = family_pmf(spec, 3).mass * BRASSICA_N
    # inputs are rounded to three decimals, which moves cells by up to ~0.15
    np.testing.assert_allclose(expected, [33.97, 97.16, 127.67, 78.20], atol=0.2)


@pytest.mark.parametrize("mu, gamma, m", [(0.3, 0.2, 7), (0.6, 1.5, 12), (0.05, 0.01, 40)])
def test_prentice_matches_scipy_betabinom(mu, gamma, m):
    ours = family_pmf(BetaBinomialPrentice(mu, gamma), m).mass
    ref = stats.betabinom.pmf(np.arange(m + 1), m, mu / gamma, (1 - mu) / gamma)
    np.testing.assert_allclose(ours, ref, rtol=1e-11, atol=1e-300)


@pytest.mark.parametrize("mu, gamma, m", [(0.3, 0.2, 7), (0.5, -0.1, 5), (0.9, 0.0, 4)])
def test_prentice_log_space_matches_moment_sequence(mu, gamma, m):
    spec = BetaBinomialPrentice(mu, gamma)
    np.testing.assert_allclose(family_pmf(spec, m).mass, exact_pmf(family_sequence(spec, m)).mass,
                               atol=1e-13)


def test_prentice_below_bound_rejected():
    with pytest.raises(ConstraintViolation):
        family_pmf(BetaBinomialPrentice(0.5, -0.3), 3)


def test_family_moments_examples():
    p, rho = family_moments(BetaBinomialPrentice(0.581, 0.0953))
    assert p == 0.581
    assert rho == pytest.approx(0.087, abs=5e-4)
    p, rho = family_moments(LapGam(1, 1))
    assert (p, rho) == pytest.approx((0.5, 1 / 3), abs=1e-15)
    assert family_moments(QPower(0.5, 1)) == pytest.approx((0.5, 0.0), abs=1e-15)
    with pytest.raises(DomainError):
        family_moments(LapGam(1.0, 0.0))


@pytest.mark.parametrize("spec", [
    FoldedLogistic(1.3), PPower(0.4, 0.6), QPower(0.35, 0.8), LapGam(2.0, 0.7),
    BetaBinomialPrentice(0.3, 0.4), Binomial(0.2),
])
def test_family_moments_agree_with_sequence(spec):
    seq = family_sequence(spec, 2)
    p1, p2 = seq.p[1], seq.p[2]
    if seq.complement:
        p1, p2 = 1 - seq.p[1], 1 - 2 * seq.p[1] + seq.p[2]
    p, rho = family_moments(spec)
    assert p == pytest.approx(p1, rel=1e-14)
    assert rho == pytest.approx((p2 - p1 ** 2) / (p1 * (1 - p1)), abs=1e-13)


# --------------------------------------------------------------------- monotonicity, bounds


def test_lapgam_sequences_are_completely_monotone():
    for a, b in itertools.product((0.1, 1, 10), repeat=2):
        ok, where = check_complete_monotone(family_sequence(LapGam(a, b), 12))
        assert ok, (a, b, where)


def test_check_complete_monotone_cases():
    # the differences of [1, .2, .19, .18] are -0.8, -0.01, -0.01 | 0.79, 0 | -0.79:
    # every signed difference is nonnegative, so this sequence passes
    assert check_complete_monotone(ProbabilitySequence(3, [1, 0.2, 0.19, 0.18])) == (True, None)
    # second difference at 0 is 0.2 - 2*0.9 + 1 = -0.6 < 0
    assert check_complete_monotone(ProbabilitySequence(3, [1, 0.9, 0.2, 0.1])) == (False, (2, 0))
    assert check_complete_monotone(ProbabilitySequence(3, [1, 1, 1, 1])) == (True, None)
    assert check_complete_monotone(ProbabilitySequence(2, [1, 1.1, 0.5]))[0] is False


def test_prentice_gamma_lower_bound():
    assert prentice_gamma_lower_bound(0.5, 3) == pytest.approx(-0.25)
    assert prentice_gamma_lower_bound(0.1, 11) == pytest.approx(-0.01)
    assert prentice_gamma_lower_bound(0.9, 11) == pytest.approx(-0.01)
    vals = [prentice_gamma_lower_bound(0.3, m) for m in (2, 10, 100, 10 ** 6)]
    assert all(v < 0 for v in vals) and np.all(np.diff(vals) > 0) and vals[-1] > -1e-6
    with pytest.raises(DomainError):
        prentice_gamma_lower_bound(1.0, 3)


def test_prentice_at_bound_is_valid():
    for mu, m in [(0.1, 12), (0.5, 3), (0.8, 20)]:
        pmf = family_pmf(BetaBinomialPrentice(mu, prentice_gamma_lower_bound(mu, m)), m)
        assert pmf.mass.min() >= 0
        assert pmf.mass.sum() == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("alpha, beta, x, expected", [
    (1.0, 1.0, 0.0, 1.0),
    (2.0, 0.5, 2.0, 0.25),
    (1.7, 2.3, 0.9, (1 + 2.3 * 0.9) ** -1.7),
    (0.3, 4.0, 1.5, 7.0 ** -0.3),
])
def test_laplace_transform_of_gamma(alpha, beta, x, expected):
    assert laplace_transform_check(alpha, beta, x) == pytest.approx(expected, abs=1e-8)


# --------------------------------------------------------------------- properties


def test_normalization_grid():
    for spec in grid_specs():
        for m in range(1, 21):
            mass = family_pmf(spec, m).mass
            assert mass.min() >= 0, (spec, m)
            assert abs(mass.sum() - 1) <= 1e-10, (spec, m, mass.sum() - 1)
    for mu in PRENTICE_MU:
        for m in range(1, 21):
            for g in prentice_gammas(mu, m):
                mass = family_pmf(BetaBinomialPrentice(mu, g), m).mass
                assert mass.min() >= 0 and abs(mass.sum() - 1) <= 1e-10, (mu, g, m)


def test_independence_reductions():
    for p in (0.0, 0.1, 0.37, 0.5, 0.9, 1.0):
        for m in range(1, 21):
            ref = family_pmf(Binomial(p), m).mass
            np.testing.assert_allclose(family_pmf(PPower(p, 1.0), m).mass, ref, atol=1e-12)
            np.testing.assert_allclose(family_pmf(QPower(1 - p, 1.0), m).mass, ref, atol=1e-12)
            np.testing.assert_allclose(ref, stats.binom.pmf(np.arange(m + 1), m, p), atol=1e-12)


def test_binomial_m20_against_high_precision():
    import mpmath
    for p in (0.1, 0.9, 0.37, 0.999):
        with mpmath.workprec(200):
            ref = [float(mpmath.binomial(20, s) * mpmath.mpf(p) ** s * (1 - mpmath.mpf(p)) ** (20 - s))
                   for s in range(21)]
        np.testing.assert_allclose(family_pmf(Binomial(p), 20).mass, ref, rtol=0, atol=1e-15)
        np.testing.assert_allclose(family_pmf(PPower(p, 1.0), 20).mass, ref, rtol=0, atol=1e-15)


def test_brute_force_enumeration(rng):
    for _ in range(20):
        m = int(rng.integers(1, 11))
        a, b = rng.uniform(0.3, 6, 2)
        seq = ProbabilitySequence(m, beta_moments(a, b, m))
        np.testing.assert_allclose(exact_pmf(seq).mass, enumerate_beta_mixture(a, b, m), atol=1e-12)


def test_mean_consistency_all_families():
    specs = [s for s in grid_specs()] + [BetaBinomialPrentice(mu, 0.3) for mu in PRENTICE_MU]
    for spec in specs:
        try:
            p, _ = family_moments(spec)
        except DomainError:
            continue
        for m in (1, 3, 10, 20):
            assert family_pmf(spec, m).mean() / m == pytest.approx(p, abs=1e-10), (spec, m)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 50), st.floats(1e-3, 50), st.integers(1, 25))
def test_lapgam_pmf_valid_and_monotone(alpha, beta, m):
    spec = LapGam(alpha, beta)
    assert check_complete_monotone(family_sequence(spec, m))[0]
    mass = family_pmf(spec, m).mass
    assert mass.min() >= 0 and abs(mass.sum() - 1) <= 1e-10


def test_invalid_parameters_rejected():
    for bad in (Binomial(1.2), FoldedLogistic(-1), PPower(0.5, 1.5), QPower(-0.1, 0.5),
                LapGam(0, 1), LapGam(1, -1), BetaBinomialPrentice(1.0, 0.1)):
        with pytest.raises(ConstraintViolation):
            family_pmf(bad, 3)
