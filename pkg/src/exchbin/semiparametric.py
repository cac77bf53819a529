"""Cluster-size dependent models: family parameters as smooth functions of m.

Each parameter goes through a link (logit for the beta-binomial mean, log for
everything else) and the linked value is a linear combination of basis
functions of m: a cubic B-spline basis by default, or an intercept-only or
quadratic basis for nested comparisons.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import expit, logit

from .distributions import BetaBinomialPrentice, LapGam, family_moments
from .estimation import SumDataset, fit_mle, log_likelihood, newton_maximize
from .exceptions import ConstraintViolation, DomainError, EvaluationError, RankDeficiencyError
from .gof import grouped_deviance
from .numerics import fd_hessian, fd_jacobian

SEMIPARAMETRIC_FAMILIES = ("bb", "lapgam")


@dataclass(frozen=True)
class SplineBasis:
    """Basis in the cluster size m.

    ``kind`` is ``"bspline"`` (cubic, with intercept, K = len(knots) + 4),
    ``"intercept"`` (K = 1) or ``"quadratic"`` (1, u, u**2 with u rescaled m).
    """

    interior_knots: tuple = ()
    boundary: tuple = (0.0, 1.0)
    degree: int = 3
    kind: str = "bspline"

    def __post_init__(self):
        lo, hi = self.boundary
        if not lo < hi:
            raise DomainError("boundary knots must satisfy lo < hi")
        knots = tuple(float(k) for k in self.interior_knots)
        if any(not lo < k < hi for k in knots) or list(knots) != sorted(set(knots)):
            raise DomainError("interior knots must be distinct, sorted and strictly inside the boundary")
        object.__setattr__(self, "interior_knots", knots)
        if self.kind not in ("bspline", "intercept", "quadratic"):
            raise DomainError(f"unknown basis kind {self.kind!r}")

    @property
    def K(self) -> int:
        if self.kind == "intercept":
            return 1
        if self.kind == "quadratic":
            return 3
        return len(self.interior_knots) + self.degree + 1

    @property
    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary
        k = self.degree + 1
        return np.concatenate([[lo] * k, self.interior_knots, [hi] * k])

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = self.boundary
        if self.kind == "intercept":
            return np.ones((x.size, 1))
        if self.kind == "quadratic":
            u = (x - lo) / (hi - lo)
            return np.column_stack([np.ones_like(u), u, u * u])
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError("evaluation points outside the boundary knots")
        return BSpline.design_matrix(x, self.knot_vector, self.degree).toarray()


def make_basis(m_values, knots="none", kind="bspline") -> SplineBasis:
    """Basis over the range of ``m_values``.

    ``knots`` is ``"none"`` (pure cubic), ``"median"`` (one interior knot at
    the median distinct m) or an explicit sequence of interior knots.
    """
    m_values = np.unique(np.asarray(m_values, dtype=float))
    bounds = (float(m_values.min()), float(m_values.max()))
    if bounds[0] == bounds[1]:
        bounds = (bounds[0] - 1.0, bounds[1] + 1.0)
    if isinstance(knots, str):
        if knots == "none":
            interior = ()
        elif knots == "median":
            interior = (float(np.median(m_values)),)
        else:
            raise DomainError(f"unknown knot rule {knots!r}")
    else:
        interior = tuple(knots)
    return SplineBasis(interior, bounds, 3, kind)


def spline_design(m_values, knots="none", kind="bspline") -> np.ndarray:
    """Design matrix with one row s(m) per entry of ``m_values``."""
    basis = make_basis(m_values, knots, kind)
    n_distinct = np.unique(m_values).size
    if n_distinct < basis.K:
        raise RankDeficiencyError(f"{n_distinct} distinct cluster sizes cannot identify {basis.K} basis functions")
    return basis(m_values)


@dataclass
class SemiparamFit:
    family: str
    basis: SplineBasis
    eta: tuple
    loglik: float
    deviance: float
    curve: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    grad_norm: float = float("nan")
    cov_theta: np.ndarray | None = None
    message: str = ""

    def spec(self, m: int):
        return _spec_from_eta(self.family, self.basis(m)[0], *self.eta)


def _spec_from_eta(family, row, eta_a, eta_b):
    a, b = float(row @ eta_a), float(row @ eta_b)
    if family == "bb":
        spec = BetaBinomialPrentice(float(expit(a)), float(np.exp(b)))
        ok = 0 < spec.mu < 1 and spec.gamma > 0
    else:
        spec = LapGam(float(np.exp(a)), float(np.exp(b)))
        ok = spec.alpha > 0 and spec.beta > 0
    if not ok:
        raise ConstraintViolation(f"link produced an invalid parameter: {spec}")
    return spec


def _linked(family, spec):
    if family == "bb":
        return float(logit(spec.mu)), float(np.log(max(spec.gamma, 1e-3)))
    return float(np.log(spec.alpha)), float(np.log(spec.beta))


def fit_semiparametric(family, data: SumDataset, basis: SplineBasis | None = None, *,
                       knots="none", kind="bspline", max_iter=200, gtol=1e-6,
                       ftol=1e-10) -> SemiparamFit:
    """Maximize the grouped likelihood with parameters varying smoothly in m."""
    family = {"beta-binomial": "bb", "betabinomial": "bb"}.get(str(family).lower(), str(family).lower())
    if family not in SEMIPARAMETRIC_FAMILIES:
        raise DomainError(f"semiparametric fits support {SEMIPARAMETRIC_FAMILIES}, got {family!r}")
    sizes = data.cluster_sizes
    if basis is None:
        basis = make_basis(sizes, knots, kind)
    if sizes.size < basis.K:
        raise RankDeficiencyError(f"{sizes.size} distinct cluster sizes cannot identify {basis.K} basis functions")
    B = basis(sizes)
    K = basis.K
    rows = {int(m): B[i] for i, m in enumerate(sizes)}
    n = data.n_clusters

    def split(theta):
        return theta[:K], theta[K:]

    def spec_fn(theta):
        ea, eb = split(theta)
        return lambda m: _spec_from_eta(family, rows[m], ea, eb)

    def f(theta):
        try:
            return log_likelihood(spec_fn(theta), data) / n
        except (ConstraintViolation, DomainError, FloatingPointError, OverflowError):
            return -np.inf

    pooled = fit_mle(family, data, compute_se=False)
    ca, cb = _linked(family, pooled.spec)
    ones = np.ones(len(sizes))
    eta_a = np.linalg.lstsq(B, ca * ones, rcond=None)[0]
    eta_b = np.linalg.lstsq(B, cb * ones, rcond=None)[0]
    opt = newton_maximize(f, np.concatenate([eta_a, eta_b]), max_iter=max_iter, gtol=gtol, ftol=ftol)
    theta = opt.theta
    eta = split(theta)
    sp = spec_fn(theta)
    loglik = log_likelihood(sp, data)
    fit = SemiparamFit(family, basis, (eta[0].copy(), eta[1].copy()), loglik,
                       grouped_deviance(sp, data), converged=opt.converged,
                       iterations=opt.iterations, grad_norm=opt.grad_norm, message=opt.message)

    try:
        info = -fd_hessian(lambda t: f(t) * n, theta)
        if np.linalg.eigvalsh(info).min() > 0:
            fit.cov_theta = np.linalg.inv(info)
        else:
            fit.message = "observed information is not positive definite"
    except (EvaluationError, np.linalg.LinAlgError) as exc:
        fit.message = str(exc)

    for m in sizes.tolist():
        spec = sp(m)
        p, rho = family_moments(spec)
        se_p = se_rho = None
        if fit.cov_theta is not None:
            J = fd_jacobian(lambda t: np.array(family_moments(spec_fn(t)(m))), theta)
            var = np.einsum("ij,jk,ik->i", J, fit.cov_theta, J)
            se_p, se_rho = (float(np.sqrt(max(v, 0.0))) for v in var)
        fit.curve.append({"m": m, "p_hat": p, "rho_hat": rho, "se_p": se_p, "se_rho": se_rho,
                          **spec.as_dict()})
    return fit
