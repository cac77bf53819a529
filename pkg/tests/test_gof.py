import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchbin.distributions import Binomial, LapGam, QPower
from exchbin.estimation import SumDataset, fit_mle, log_likelihood, saturated_loglik
from exchbin.gof import deviance_from_loglik, expected_counts, grouped_deviance, pearson_test
from exchbin.numerics import chi_square_sf

OBSERVED = np.array([32, 103, 122, 80])


@pytest.mark.parametrize("family, column", [
    ("lapgam", [33.97, 97.20, 127.61, 78.23]),
    ("qpower", [32.43, 102.02, 122.69, 79.86]),
    ("fl", [50.59, 90.57, 104.45, 91.39]),
    ("bb", [33.97, 97.16, 127.67, 78.20]),
    ("binomial", [24.86, 103.24, 142.93, 65.96]),
])
def test_expected_counts_table1(family, column, brassica_data):
    fit = fit_mle(family, brassica_data)
    np.testing.assert_allclose(expected_counts(fit.spec, brassica_data), column, atol=0.05)


@pytest.mark.parametrize("family, p_value", [
    ("bb", 0.8594), ("lapgam", 0.8621), ("qpower", 0.9993), ("binomial", 0.0439), ("fl", 0.0048),
])
def test_pearson_brassica_p_values(family, p_value, brassica_data):
    fit = fit_mle(family, brassica_data)
    rep = pearson_test(OBSERVED, expected_counts(fit.spec, brassica_data), family=family)
    assert rep.df == 3
    assert rep.p_value == pytest.approx(p_value, abs=0.002)


def test_pearson_on_printed_table_columns():
    # statistics computed from the rounded printed expectations
    bb = pearson_test(OBSERVED, [33.97, 97.16, 127.67, 78.20])
    assert bb.statistic == pytest.approx(0.7585, abs=5e-4)
    binom = pearson_test(OBSERVED, [24.86, 103.24, 142.93, 65.96])
    assert binom.statistic == pytest.approx(8.10, abs=0.01)
    assert binom.p_value == pytest.approx(0.0439, abs=0.001)


def test_pearson_perfect_fit():
    rep = pearson_test([5, 7, 9], [5.0, 7.0, 9.0])
    assert rep.statistic == 0.0 and rep.p_value == 1.0


def test_pearson_params_policy():
    rep = pearson_test(OBSERVED, [33.97, 97.16, 127.67, 78.20], df_policy="params", n_params=2)
    assert rep.df == 1
    assert rep.p_value == pytest.approx(chi_square_sf(rep.statistic, 1))


def test_pearson_excludes_tiny_cells():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = pearson_test([4, 6, 0], [5.0, 5.0, 1e-12])
    assert caught and rep.excluded == (2,) and rep.df == 1


def test_report_sums_agree(brassica_data):
    fit = fit_mle("lapgam", brassica_data)
    rep = pearson_test(OBSERVED, expected_counts(fit.spec, brassica_data))
    assert rep.expected.sum() == pytest.approx(rep.observed.sum(), abs=1e-8 * 337)
    assert rep.statistic == pytest.approx(np.sum((rep.observed - rep.expected) ** 2 / rep.expected))


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(4)))
def test_pearson_cell_order_invariant(perm):
    exp = np.array([33.97, 97.16, 127.67, 78.20])
    base = pearson_test(OBSERVED, exp)
    idx = list(perm)
    rep = pearson_test(OBSERVED[idx], exp[idx])
    assert rep.statistic == pytest.approx(base.statistic, rel=1e-14)
    assert rep.p_value == pytest.approx(base.p_value, rel=1e-12)


def test_p_value_monotone_in_statistic():
    exp = np.full(4, 25.0)
    stats_, pvals = [], []
    for shift in np.linspace(0, 20, 41):
        obs = exp + np.array([shift, -shift, shift / 2, -shift / 2])
        rep = pearson_test(obs, exp)
        stats_.append(rep.statistic)
        pvals.append(rep.p_value)
    assert np.all(np.diff(stats_) > 0) and np.all(np.diff(pvals) <= 0)


def test_deviance_zero_when_observed_equals_expected():
    d = SumDataset.from_counts(3, [1, 3, 3, 1])
    assert grouped_deviance(Binomial(0.5), d) == pytest.approx(0.0, abs=1e-12)


def test_deviance_binomial_brassica(brassica_data):
    fit = fit_mle("binomial", brassica_data)
    dev = grouped_deviance(fit.spec, brassica_data)
    assert dev > 0
    assert dev == pytest.approx(2 * (saturated_loglik(brassica_data) - fit.loglik), abs=1e-9)


def test_deviance_saturated_two_sizes():
    d = SumDataset.from_records([(2, 0, 3), (2, 1, 5), (2, 2, 2), (4, 1, 6), (4, 4, 1)])
    from exchbin.estimation import saturated_fit
    from exchbin.distributions import exact_pmf
    fitted = {m: exact_pmf(saturated_fit(d.restrict(m))[0]) for m in (2, 4)}
    total = 0.0
    for m, s, c in d.groups():
        e = c.sum() * fitted[m].mass[s]
        total += np.sum(c * np.log(c / e))
    assert 2 * total == pytest.approx(0.0, abs=1e-10)


def test_deviance_identity_random(rng):
    for _ in range(20):
        records = [(int(m), int(s), int(rng.integers(1, 30)))
                   for m in rng.choice([2, 3, 5, 7], size=2, replace=False)
                   for s in range(m + 1) if rng.random() < 0.8]
        if not records:
            continue
        d = SumDataset.from_records(records)
        for spec in (LapGam(rng.uniform(0.5, 4), rng.uniform(0.05, 3)), QPower(rng.uniform(0.2, 0.8), rng.uniform(0.2, 1))):
            assert grouped_deviance(spec, d) == pytest.approx(deviance_from_loglik(spec, d), abs=1e-9)
