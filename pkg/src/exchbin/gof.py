"""Goodness of fit: expected counts, Pearson chi-square, grouped deviance."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import FamilySpec, family_pmf
from .estimation import SumDataset, log_likelihood, saturated_loglik
from .exceptions import DomainError
from .numerics import chi_square_sf

log = logging.getLogger(__name__)

MIN_EXPECTED = 1e-8


@dataclass(frozen=True)
class GofReport:
    observed: np.ndarray
    expected: np.ndarray
    statistic: float
    df: int
    p_value: float
    family: str | None = None
    excluded: tuple = ()

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "expected": [float(x) for x in self.expected],
        }


def expected_counts(spec: FamilySpec, data: SumDataset, m: int | None = None) -> np.ndarray:
    """``N * pmf`` for the clusters of size ``m`` (the only size if omitted)."""
    if m is None:
        sizes = data.cluster_sizes
        if sizes.size != 1:
            raise DomainError("data has several cluster sizes; pass m")
        m = int(sizes[0])
    n = data.counts_for(m).sum()
    return n * family_pmf(spec, m).mass


def pearson_test(observed, expected, df_policy: str = "cells", n_params: int = 0,
                 family: str | None = None) -> GofReport:
    """Pearson chi-square test of observed against expected cell counts.

    ``df_policy="cells"`` uses (cells - 1) degrees of freedom; ``"params"``
    additionally subtracts ``n_params``.  Cells with expected count below
    1e-8 are dropped with a warning.
    """
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape:
        raise DomainError("observed and expected must have the same length")
    keep = exp >= MIN_EXPECTED
    excluded = tuple(int(i) for i in np.nonzero(~keep)[0])
    if excluded:
        warnings.warn(f"excluding cells {excluded} with expected count < {MIN_EXPECTED}")
    stat = float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]))
    cells = int(keep.sum())
    if df_policy == "cells":
        df = cells - 1
    elif df_policy == "params":
        df = cells - 1 - n_params
    else:
        raise DomainError(f"unknown df policy {df_policy!r}")
    if df < 1:
        raise DomainError(f"non-positive degrees of freedom ({df})")
    return GofReport(obs, exp, stat, df, chi_square_sf(stat, df), family, excluded)


def grouped_deviance(spec, data: SumDataset) -> float:
    """``2 * sum O log(O / E)`` over observed (m, s) cells.

    ``spec`` is a FamilySpec or a callable mapping a cluster size to one.
    """
    total = 0.0
    for m, s, c in data.groups():
        sp = spec(m) if callable(spec) else spec
        expected = c.sum() * family_pmf(sp, m).mass[s]
        with np.errstate(divide="ignore"):
            total += float(np.sum(c * np.log(c / expected)))
    return 2.0 * total


def deviance_from_loglik(spec, data: SumDataset) -> float:
    return 2.0 * (saturated_loglik(data) - log_likelihood(spec, data))
