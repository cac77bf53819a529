"""Models for sums of exchangeable binary variables."""

__version__ = "0.1.0"

from .distributions import (
    BetaBinomialPrentice,
    Binomial,
    FamilySpec,
    FoldedLogistic,
    LapGam,
    Pmf,
    PPower,
    ProbabilitySequence,
    QPower,
    check_complete_monotone,
    exact_pmf,
    family_moments,
    family_pmf,
    family_sequence,
    invert_pmf,
    prentice_gamma_lower_bound,
)
from .estimation import FitResult, SumDataset, fit_mle, log_likelihood, saturated_fit
from .gof import GofReport, expected_counts, grouped_deviance, pearson_test
from .countsio import brassica, parse_counts, read_counts
from .semiparametric import SemiparamFit, SplineBasis, fit_semiparametric, make_basis, spline_design
from .simulation import Scenario, gen_sums, default_grid, run_mc_study, sample_family, summarize
