"""Distributions of sums of exchangeable binary variables.

A cluster of ``m`` exchangeable 0/1 variables is described by its sequence of
joint success probabilities ``p_j = P(Y_1 = ... = Y_j = 1)`` with ``p_0 = 1``.
The law of the sum follows from that sequence by inclusion-exclusion, and each
parametric family below is a particular model for the sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar

import numpy as np
from scipy import integrate, special, stats

from .exceptions import ConstraintViolation, DomainError, EvaluationError
from .numerics import binomial_weighted_sums, difference_table, log_binom, two_product

NEGATIVE_MASS_TOL = 1e-9
MONOTONE_TOL = 1e-10


@dataclass(frozen=True)
class ProbabilitySequence:
    """Joint success probabilities ``p[0..m]`` of an exchangeable cluster.

    When ``complement`` is true the sequence describes ``X' = 1 - X`` (the
    q-power parameterization) and pmfs built from it are reflected.

    ``p`` may be given in extended precision; it is then stored as a float64
    ``p`` plus a float64 correction ``p_lo``, both of which enter the
    inclusion-exclusion sums.
    """

    m: int
    p: np.ndarray
    complement: bool = False
    p_lo: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        raw = np.asarray(self.p)
        if raw.dtype == np.longdouble and np.longdouble is not np.float64:
            hi = raw.astype(float)
            lo = (raw - hi).astype(float)
        else:
            hi = raw.astype(float)
            lo = np.zeros_like(hi) if self.p_lo is None else np.asarray(self.p_lo, dtype=float)
        object.__setattr__(self, "p", hi)
        object.__setattr__(self, "p_lo", lo)
        if hi.shape != (self.m + 1,) or lo.shape != hi.shape:
            raise DomainError(f"sequence for m={self.m} needs {self.m + 1} entries, got {hi.shape}")

    def check(self, tol: float = 1e-12) -> None:
        """Raise ConstraintViolation unless 1 = p0 >= p1 >= ... >= pm >= 0."""
        p = self.p
        if p[0] != 1.0:
            raise ConstraintViolation(f"p_0 must equal 1, got {p[0]}")
        if np.any(p < -tol) or np.any(p > 1 + tol):
            raise ConstraintViolation("sequence entries must lie in [0, 1]")
        if np.any(np.diff(p) > tol):
            raise ConstraintViolation("sequence must be nonincreasing")


@dataclass(frozen=True)
class Pmf:
    m: int
    mass: np.ndarray

    def mean(self) -> float:
        return float(np.dot(np.arange(self.m + 1), self.mass))


@lru_cache(maxsize=256)
def _alternating_coefficients(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed binomial weights ``(-1)^k C(m-s, k)`` and gather indices ``s+k``."""
    s = np.arange(m + 1)[:, None]
    k = np.arange(m + 1)[None, :]
    valid = k <= m - s
    coef = np.where(valid, (-1.0) ** k * special.comb(m - s, k, exact=False), 0.0)
    idx = np.where(valid, s + k, 0)
    coef.setflags(write=False)
    idx.setflags(write=False)
    return coef, idx


@lru_cache(maxsize=256)
def _binomial_row(m: int) -> np.ndarray:
    row = special.comb(m, np.arange(m + 1), exact=False)
    row.setflags(write=False)
    return row


def _split_sums(coef, hi, lo):
    return binomial_weighted_sums(np.concatenate([coef, coef], axis=1),
                                  np.concatenate([hi, lo], axis=1))


def _clamp(mass: np.ndarray, what: str) -> np.ndarray:
    low = mass.min()
    if low < -NEGATIVE_MASS_TOL:
        s = int(np.argmin(mass))
        raise ConstraintViolation(f"{what}: mass at s={s} is {low:.3e} < 0")
    return np.where(mass < 0, 0.0, mass)


def exact_pmf(seq: ProbabilitySequence) -> Pmf:
    """Law of the sum from the joint success probabilities (inclusion-exclusion)."""
    m = seq.m
    coef, idx = _alternating_coefficients(m)
    inner = _split_sums(coef, seq.p[idx], seq.p_lo[idx])
    mass = _binomial_row(m) * inner
    mass = _clamp(mass, "exact_pmf")
    if seq.complement:
        mass = mass[::-1].copy()
    return Pmf(m, mass)


def invert_pmf(pmf: Pmf) -> ProbabilitySequence:
    """Recover ``p_j = sum_k C(m-j,k)/C(m,k) P(S = m-k)``."""
    m = pmf.m
    mass = np.asarray(pmf.mass, dtype=float)
    p = np.empty(m + 1)
    for j in range(m + 1):
        k = np.arange(m - j + 1)
        w = np.exp(log_binom(m - j, k) - log_binom(m, k))
        p[j] = float(np.dot(w, mass[m - k]))
    p[0] = 1.0
    return ProbabilitySequence(m, p)


# --------------------------------------------------------------------------
# parametric families


class FamilySpec:
    """Base class for the parametric families; subclasses are frozen dataclasses."""

    name: ClassVar[str]
    param_names: ClassVar[tuple[str, ...]]

    @property
    def params(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.param_names], dtype=float)

    @classmethod
    def from_params(cls, values):
        return cls(*(float(v) for v in values))

    def as_dict(self) -> dict:
        return {n: float(getattr(self, n)) for n in self.param_names}

    def validate(self, m: int | None = None) -> None:
        raise NotImplementedError

    @staticmethod
    def raw_moments(params) -> tuple[float, float]:
        """(p1, p2) as plain arithmetic of the parameters, no validation."""
        raise NotImplementedError


def _in_unit(x, name, open_=False):
    ok = (0 < x < 1) if open_ else (0 <= x <= 1)
    if not ok or not np.isfinite(x):
        rng = "(0, 1)" if open_ else "[0, 1]"
        raise ConstraintViolation(f"{name} must lie in {rng}, got {x}")


def _positive(x, name, allow_zero=False):
    ok = (x >= 0) if allow_zero else (x > 0)
    if not ok or not np.isfinite(x):
        raise ConstraintViolation(f"{name} must be {'>=' if allow_zero else '>'} 0, got {x}")


@dataclass(frozen=True)
class Binomial(FamilySpec):
    p: float
    name: ClassVar[str] = "binomial"
    param_names: ClassVar[tuple] = ("p",)

    def validate(self, m=None):
        _in_unit(self.p, "p")

    @staticmethod
    def raw_moments(params):
        p = params[0]
        return p, p * p


@dataclass(frozen=True)
class FoldedLogistic(FamilySpec):
    beta: float
    name: ClassVar[str] = "fl"
    param_names: ClassVar[tuple] = ("beta",)

    def validate(self, m=None):
        _positive(self.beta, "beta", allow_zero=True)

    @staticmethod
    def raw_moments(params):
        b = params[0]
        return 2.0 / (1.0 + 2.0 ** b), 2.0 / (1.0 + 3.0 ** b)


@dataclass(frozen=True)
class PPower(FamilySpec):
    p: float
    gamma: float
    name: ClassVar[str] = "ppower"
    param_names: ClassVar[tuple] = ("p", "gamma")

    def validate(self, m=None):
        _in_unit(self.p, "p")
        _in_unit(self.gamma, "gamma")

    @staticmethod
    def raw_moments(params):
        p, g = params
        return p, p ** (2.0 ** g)


@dataclass(frozen=True)
class QPower(FamilySpec):
    q: float
    gamma: float
    name: ClassVar[str] = "qpower"
    param_names: ClassVar[tuple] = ("q", "gamma")

    def validate(self, m=None):
        _in_unit(self.q, "q")
        _in_unit(self.gamma, "gamma")

    @staticmethod
    def raw_moments(params):
        q, g = params
        return 1.0 - q, 1.0 - 2.0 * q + q ** (2.0 ** g)


@dataclass(frozen=True)
class LapGam(FamilySpec):
    alpha: float
    beta: float
    name: ClassVar[str] = "lapgam"
    param_names: ClassVar[tuple] = ("alpha", "beta")

    def validate(self, m=None):
        _positive(self.alpha, "alpha")
        _positive(self.beta, "beta", allow_zero=True)

    @staticmethod
    def raw_moments(params):
        a, b = params
        return (1.0 + b) ** -a, (1.0 + 2.0 * b) ** -a


@dataclass(frozen=True)
class BetaBinomialPrentice(FamilySpec):
    mu: float
    gamma: float
    name: ClassVar[str] = "bb"
    param_names: ClassVar[tuple] = ("mu", "gamma")

    def validate(self, m=None):
        _in_unit(self.mu, "mu", open_=True)
        if not np.isfinite(self.gamma):
            raise ConstraintViolation(f"gamma must be finite, got {self.gamma}")
        if m is not None and m >= 2:
            bound = prentice_gamma_lower_bound(self.mu, m)
            if self.gamma < bound:
                raise ConstraintViolation(
                    f"gamma={self.gamma} is below the lower bound {bound} for mu={self.mu}, m={m}"
                )
        elif self.gamma <= -1:
            raise ConstraintViolation(f"gamma must exceed -1, got {self.gamma}")

    @staticmethod
    def raw_moments(params):
        mu, g = params
        return mu, mu * (mu + g) / (1.0 + g)


FAMILIES: dict[str, type[FamilySpec]] = {
    cls.name: cls for cls in (Binomial, FoldedLogistic, PPower, QPower, LapGam, BetaBinomialPrentice)
}


def get_family(name: str) -> type[FamilySpec]:
    try:
        return FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; expected one of {sorted(FAMILIES)}") from None


_XF = np.longdouble


def _integer_powers(base: float, m: int) -> tuple[np.ndarray, np.ndarray] | None:
    """base**j for j = 0..m as double-double (hi, lo) pairs, or None on underflow risk."""
    base = float(base)
    if base <= 0.0 or m * np.log2(base) < -900:
        return None
    hi = np.ones(m + 1)
    lo = np.zeros(m + 1)
    h, l = 1.0, 0.0
    for j in range(1, m + 1):
        ph, pl = two_product(h, base)
        pl = float(pl) + l * base
        h = float(ph) + pl
        l = pl - (h - float(ph))
        hi[j], lo[j] = h, l
    return hi, lo


def _power_parts(base: float, gamma: float, m: int) -> dict:
    """Keyword arguments for ProbabilitySequence holding base**(j**gamma)."""
    if gamma == 1.0:
        # integer exponents: exact enough that m = 20 pmfs stay within ~1e-15
        parts = _integer_powers(base, m)
        if parts is not None:
            return {"p": parts[0], "p_lo": parts[1]}
    return {"p": _power_sequence(base, gamma, m)}


def _power_sequence(base: float, gamma: float, m: int) -> np.ndarray:
    j = np.arange(m + 1, dtype=_XF)
    out = np.empty(m + 1, dtype=_XF)
    out[0] = 1
    with np.errstate(divide="ignore"):
        out[1:] = _XF(base) ** (j[1:] ** _XF(gamma))
    return out


def family_sequence(spec: FamilySpec, m: int) -> ProbabilitySequence:
    """Joint success probabilities implied by a parametric family."""
    spec.validate(m)
    # extended precision: the alternating sums amplify rounding in p_j
    j = np.arange(m + 1, dtype=_XF)
    if isinstance(spec, Binomial):
        return ProbabilitySequence(m, **_power_parts(spec.p, 1.0, m))
    elif isinstance(spec, FoldedLogistic):
        p = 2 / (1 + (j + 1) ** _XF(spec.beta))
    elif isinstance(spec, LapGam):
        p = np.exp(-_XF(spec.alpha) * np.log1p(_XF(spec.beta) * j))
    elif isinstance(spec, PPower):
        return ProbabilitySequence(m, **_power_parts(spec.p, spec.gamma, m))
    elif isinstance(spec, QPower):
        return ProbabilitySequence(m, **_power_parts(spec.q, spec.gamma, m), complement=True)
    elif isinstance(spec, BetaBinomialPrentice):
        a = np.arange(m, dtype=_XF)
        ratios = (_XF(spec.mu) + _XF(spec.gamma) * a) / (1 + _XF(spec.gamma) * a)
        p = np.concatenate([np.ones(1, dtype=_XF), np.cumprod(ratios)])
    else:
        raise DomainError(f"unsupported family spec {spec!r}")
    p[0] = 1.0
    return ProbabilitySequence(m, p)


def _qpower_pmf(spec: QPower, m: int) -> Pmf:
    # mass[s] = C(m,s) sum_{k<=s} (-1)^k C(s,k) q^((m-s+k)^gamma)
    lam = ProbabilitySequence(m, **_power_parts(spec.q, spec.gamma, m))
    coef, idx = _alternating_coefficients(m)
    # row s of the reflected problem uses C(s, k) and lam[m - s + k]
    coef_r = coef[::-1]
    idx_r = idx[::-1]
    inner = _split_sums(coef_r, lam.p[idx_r], lam.p_lo[idx_r])
    mass = _binomial_row(m) * inner
    return Pmf(m, _clamp(mass, "q-power pmf"))


def _prentice_pmf(spec: BetaBinomialPrentice, m: int) -> Pmf:
    mu, g = spec.mu, spec.gamma
    s = np.arange(m + 1)
    if g == 0.0:
        with np.errstate(divide="ignore"):
            logmass = log_binom(m, s) + s * np.log(mu) + (m - s) * np.log1p(-mu)
        return Pmf(m, np.exp(logmass))
    a = np.arange(m, dtype=float)
    up = mu + g * a
    down = 1.0 - mu + g * a
    den = 1.0 + g * a
    # every factor is used for some s; at the gamma bound one factor is zero up to rounding
    tol = 1e-12
    if np.any(up < -tol) or np.any(down < -tol) or np.any(den <= 0):
        raise ConstraintViolation(f"Prentice factors negative for mu={mu}, gamma={g}, m={m}")
    up = np.maximum(up, 0.0)
    down = np.maximum(down, 0.0)
    with np.errstate(divide="ignore"):
        cum_up = np.concatenate([[0.0], np.cumsum(np.log(up))])
        cum_down = np.concatenate([[0.0], np.cumsum(np.log(down))])
    logmass = log_binom(m, s) + cum_up[s] + cum_down[m - s] - np.sum(np.log(den))
    return Pmf(m, np.exp(logmass))


def family_pmf(spec: FamilySpec, m: int) -> Pmf:
    """Pmf of the cluster sum under a parametric family."""
    spec.validate(m)
    if isinstance(spec, QPower):
        return _qpower_pmf(spec, m)
    if isinstance(spec, BetaBinomialPrentice):
        return _prentice_pmf(spec, m)
    return exact_pmf(family_sequence(spec, m))


def rho_from_moments(p1: float, p2: float) -> float:
    return (p2 - p1 * p1) / (p1 * (1.0 - p1))


def family_moments(spec: FamilySpec) -> tuple[float, float]:
    """Marginal success probability and pairwise correlation of a family."""
    spec.validate()
    if isinstance(spec, BetaBinomialPrentice):
        return spec.mu, spec.gamma / (1.0 + spec.gamma)
    p1, p2 = spec.raw_moments(spec.params)
    if not 0 < p1 < 1:
        raise DomainError(f"correlation undefined for degenerate marginal p={p1}")
    return float(p1), float(rho_from_moments(p1, p2))


def check_complete_monotone(seq: ProbabilitySequence, tol: float = MONOTONE_TOL):
    """Return ``(True, None)`` or ``(False, (r, nu))`` at the first sign violation."""
    table = difference_table(seq.p)
    for r, row in enumerate(table.rows):
        signed = (-1.0) ** r * row
        bad = np.nonzero(signed < -tol)[0]
        if bad.size:
            return False, (r, int(bad[0]))
    return True, None


def prentice_gamma_lower_bound(mu: float, m: int) -> float:
    """Smallest admissible Prentice gamma, ``-min(mu, 1 - mu) / (m - 1)``.

    For ``m == 1`` the pmf does not depend on gamma and ``-inf`` is returned.
    """
    if not 0 < mu < 1:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    if m < 1:
        raise DomainError(f"m must be positive, got {m}")
    if m == 1:
        return -np.inf
    return -min(mu, 1.0 - mu) / (m - 1)


def laplace_transform_check(alpha: float, beta: float, x: float) -> float:
    """Integrate ``E[exp(-x T)]`` for T ~ Gamma(shape=alpha, scale=beta) by quadrature."""
    if alpha <= 0 or beta <= 0 or x < 0:
        raise DomainError("laplace_transform_check needs alpha, beta > 0 and x >= 0")
    dist = stats.gamma(alpha, scale=beta)

    def integrand(t):
        return np.exp(-x * t) * dist.pdf(t)

    split = alpha * beta
    total = 0.0
    for lo, hi in ((0.0, split), (split, np.inf)):
        val, err, info = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12,
                                        limit=200, full_output=True)[:3]
        if err > 1e-9:
            raise EvaluationError(f"quadrature did not converge (error estimate {err:.2e})")
        total += val
    return total
