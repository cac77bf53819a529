"""Maximum-likelihood fitting for grouped cluster-sum data."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.special import expit, logit

from .distributions import (
    BetaBinomialPrentice,
    Binomial,
    FamilySpec,
    FoldedLogistic,
    LapGam,
    PPower,
    ProbabilitySequence,
    QPower,
    family_pmf,
    get_family,
    prentice_gamma_lower_bound,
    rho_from_moments,
)
from .exceptions import ConstraintViolation, DomainError, EvaluationError, ExchbinError
from .numerics import fd_gradient, fd_hessian, fd_jacobian, log_binom

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SumDataset:
    """Grouped cluster sums: parallel arrays of cluster size, sum and frequency.

    Records with equal ``(m, s)`` are merged and sorted on construction.
    """

    m: np.ndarray
    s: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.int64).ravel()
        s = np.asarray(self.s, dtype=np.int64).ravel()
        c = np.asarray(self.count, dtype=np.int64).ravel()
        if not (m.shape == s.shape == c.shape):
            raise DomainError("m, s and count must have equal length")
        if m.size == 0:
            raise DomainError("dataset is empty")
        if np.any(m < 1) or np.any(s < 0) or np.any(s > m):
            raise DomainError("every record needs m >= 1 and 0 <= s <= m")
        if np.any(c < 1):
            raise DomainError("counts must be positive integers")
        keys, inv = np.unique(np.stack([m, s], axis=1), axis=0, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=c, minlength=len(keys)).astype(np.int64)
        object.__setattr__(self, "m", keys[:, 0].copy())
        object.__setattr__(self, "s", keys[:, 1].copy())
        object.__setattr__(self, "count", merged)

    @classmethod
    def from_records(cls, records) -> "SumDataset":
        records = list(records)
        if not records:
            raise DomainError("dataset is empty")
        m, s, c = zip(*records)
        return cls(m, s, c)

    @classmethod
    def from_counts(cls, m: int, counts) -> "SumDataset":
        """Single cluster size; ``counts[s]`` clusters had sum ``s`` (zeros dropped)."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (m + 1,):
            raise DomainError(f"expected {m + 1} counts for m={m}")
        keep = counts > 0
        s = np.arange(m + 1)[keep]
        return cls(np.full(s.size, m), s, counts[keep])

    @classmethod
    def from_sums(cls, m, sums) -> "SumDataset":
        """Raw per-cluster sums; ``m`` is a scalar or one size per cluster."""
        sums = np.asarray(sums, dtype=np.int64)
        m = np.broadcast_to(np.asarray(m, dtype=np.int64), sums.shape)
        return cls(m, sums, np.ones_like(sums))

    @property
    def n_clusters(self) -> int:
        return int(self.count.sum())

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.unique(self.m)

    @property
    def successes(self) -> int:
        return int(np.dot(self.s, self.count))

    @property
    def trials(self) -> int:
        return int(np.dot(self.m, self.count))

    def records(self):
        return list(zip(self.m.tolist(), self.s.tolist(), self.count.tolist()))

    def restrict(self, m: int) -> "SumDataset":
        keep = self.m == m
        if not keep.any():
            raise DomainError(f"no clusters of size {m}")
        return SumDataset(self.m[keep], self.s[keep], self.count[keep])

    def counts_for(self, m: int) -> np.ndarray:
        """Dense count vector of length m + 1 for one cluster size."""
        out = np.zeros(m + 1, dtype=np.int64)
        keep = self.m == m
        out[self.s[keep]] = self.count[keep]
        return out

    def groups(self):
        """Yield ``(m, s, count)`` array triples for each cluster size."""
        for m in self.cluster_sizes:
            keep = self.m == m
            yield int(m), self.s[keep], self.count[keep]


def log_likelihood(spec: FamilySpec | Callable[[int], FamilySpec], data: SumDataset) -> float:
    """Grouped log-likelihood; ``-inf`` if an observed cell has zero probability.

    ``spec`` may also be a callable giving the spec for each cluster size.
    """
    total = 0.0
    for m, s, c in data.groups():
        sp = spec(m) if callable(spec) else spec
        mass = family_pmf(sp, m).mass[s]
        if np.any(mass <= 0):
            return -np.inf
        total += float(np.dot(c, np.log(mass)))
    return total


# --------------------------------------------------------------------------
# unconstrained parameterizations


def _logit(x):
    return float(logit(np.clip(x, 1e-300, 1 - 1e-16)))


class _Link:
    """Maps a family's natural parameters to and from an open parameter space."""

    family: type[FamilySpec]

    def to_theta(self, spec, m_max):
        raise NotImplementedError

    def from_theta(self, theta, m_max) -> FamilySpec:
        raise NotImplementedError

    def natural(self, theta, m_max) -> np.ndarray:
        return self.from_theta(theta, m_max).params

    def moments(self, natural) -> np.ndarray:
        """(p, rho) as a smooth function of the natural parameters."""
        p1, p2 = self.family.raw_moments(natural)
        return np.array([p1, rho_from_moments(p1, p2)])

    def start(self, p0, rho0, m_max) -> FamilySpec:
        raise NotImplementedError


class _BinomialLink(_Link):
    family = Binomial

    def to_theta(self, spec, m_max):
        return np.array([_logit(spec.p)])

    def from_theta(self, theta, m_max):
        return Binomial(float(expit(theta[0])))

    def moments(self, natural):
        return np.array([natural[0], 0.0])

    def start(self, p0, rho0, m_max):
        return Binomial(p0)


class _FoldedLogisticLink(_Link):
    family = FoldedLogistic

    def to_theta(self, spec, m_max):
        return np.array([np.log(spec.beta)])

    def from_theta(self, theta, m_max):
        return FoldedLogistic(float(np.exp(theta[0])))

    def start(self, p0, rho0, m_max):
        # p1 = 2 / (1 + 2**beta) is decreasing in beta; match the mean
        beta = optimize.brentq(lambda b: 2.0 / (1.0 + 2.0 ** b) - p0, 1e-8, 200.0, xtol=1e-12)
        return FoldedLogistic(beta)


def _solve_rho(rho_of, lo, hi, rho0):
    """Bisection for rho_of(x) = rho0 on [lo, hi]; rho_of must be monotone."""
    f_lo, f_hi = rho_of(lo) - rho0, rho_of(hi) - rho0
    if f_lo * f_hi > 0:
        return lo if abs(f_lo) < abs(f_hi) else hi
    return optimize.bisect(lambda x: rho_of(x) - rho0, lo, hi, xtol=1e-10)


class _PowerLink(_Link):
    def __init__(self, family):
        self.family = family

    def to_theta(self, spec, m_max):
        return np.array([_logit(v) for v in spec.params])

    def from_theta(self, theta, m_max):
        return self.family(float(expit(theta[0])), float(expit(theta[1])))

    def start(self, p0, rho0, m_max):
        base = p0 if self.family is PPower else 1.0 - p0

        def rho_of(g):
            return self.moments(np.array([base, g]))[1]

        # gamma = 1 is independence, gamma -> 0 is complete dependence
        g = _solve_rho(rho_of, 1e-6, 1.0 - 1e-9, rho0)
        return self.family(base, g)


class _LapGamLink(_Link):
    family = LapGam

    def to_theta(self, spec, m_max):
        return np.log(spec.params)

    def from_theta(self, theta, m_max):
        return LapGam(float(np.exp(theta[0])), float(np.exp(theta[1])))

    def start(self, p0, rho0, m_max):
        # for fixed beta, alpha = -log(p0) / log1p(beta) pins the mean; rho grows with beta
        def spec_for(log_beta):
            b = np.exp(log_beta)
            return LapGam(-np.log(p0) / np.log1p(b), b)

        def rho_of(log_beta):
            return self.moments(spec_for(log_beta).params)[1]

        return spec_for(_solve_rho(rho_of, -12.0, 12.0, rho0))


class _PrenticeLink(_Link):
    family = BetaBinomialPrentice

    @staticmethod
    def _bound(mu, m_max):
        return prentice_gamma_lower_bound(mu, m_max) if m_max >= 2 else 0.0

    def to_theta(self, spec, m_max):
        return np.array([_logit(spec.mu), np.log(spec.gamma - self._bound(spec.mu, m_max))])

    def from_theta(self, theta, m_max):
        mu = float(expit(theta[0]))
        return BetaBinomialPrentice(mu, self._bound(mu, m_max) + float(np.exp(theta[1])))

    def moments(self, natural):
        return np.array([natural[0], natural[1] / (1.0 + natural[1])])

    def start(self, p0, rho0, m_max):
        rho0 = max(rho0, 1e-4)
        return BetaBinomialPrentice(p0, rho0 / (1.0 - rho0))


LINKS: dict[str, _Link] = {
    "binomial": _BinomialLink(),
    "fl": _FoldedLogisticLink(),
    "ppower": _PowerLink(PPower),
    "qpower": _PowerLink(QPower),
    "lapgam": _LapGamLink(),
    "bb": _PrenticeLink(),
}

ALIASES = {
    "folded-logistic": "fl",
    "foldedlogistic": "fl",
    "beta-binomial": "bb",
    "betabinomial": "bb",
    "betabinomialprentice": "bb",
    "q-power": "qpower",
    "p-power": "ppower",
}


def resolve_family(family) -> str:
    if isinstance(family, type) and issubclass(family, FamilySpec):
        return family.name
    key = str(family).lower()
    key = ALIASES.get(key, key)
    get_family(key)
    return key


# --------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizeResult:
    theta: np.ndarray
    value: float
    converged: bool
    iterations: int
    grad_norm: float
    message: str


def newton_maximize(f, theta0, *, max_iter=200, gtol=1e-6, ftol=1e-10, max_step=5.0):
    """Damped Newton ascent with finite-difference derivatives.

    Uses the Newton direction when the Hessian is negative definite and a unit
    gradient step otherwise; steps are accepted by Armijo backtracking (factor
    0.5).  Stops when the gradient norm reaches ``gtol`` (converged) or the
    relative change of ``f`` stays below ``ftol`` for two consecutive steps.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    value = f(theta)
    if not np.isfinite(value):
        return OptimizeResult(theta, value, False, 0, np.inf, "objective not finite at start")
    small_changes = 0
    gn = np.inf
    for it in range(1, max_iter + 1):
        try:
            g = fd_gradient(f, theta)
        except EvaluationError as exc:
            return OptimizeResult(theta, value, False, it - 1, gn, f"gradient failed: {exc}")
        gn = float(np.linalg.norm(g))
        if gn <= gtol:
            return OptimizeResult(theta, value, True, it - 1, gn, "gradient tolerance reached")
        direction = None
        try:
            H = fd_hessian(f, theta, value)
            if np.all(np.isfinite(H)) and np.linalg.eigvalsh(H).max() < 0:
                direction = -np.linalg.solve(H, g)
        except (EvaluationError, np.linalg.LinAlgError):
            pass
        if direction is None:
            direction = g / gn
        step_len = np.linalg.norm(direction)
        if step_len > max_step:
            direction *= max_step / step_len
        slope = float(g @ direction)
        t = 1.0
        while t > 1e-14:
            cand = theta + t * direction
            new = f(cand)
            if np.isfinite(new) and new >= value + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return OptimizeResult(theta, value, gn <= gtol, it, gn, "line search failed")
        rel = abs(new - value) / max(abs(value), 1e-300)
        theta, value = cand, new
        small_changes = small_changes + 1 if rel <= ftol else 0
        if small_changes >= 2:
            try:
                gn = float(np.linalg.norm(fd_gradient(f, theta)))
            except EvaluationError:
                pass
            return OptimizeResult(theta, value, gn <= gtol, it, gn, "relative change tolerance reached")
    return OptimizeResult(theta, value, False, max_iter, gn, "maximum iterations reached")


# --------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    """Outcome of a maximum-likelihood fit.

    ``cov`` is over the natural parameters (``spec.param_names`` order);
    ``grad_norm`` is measured on the per-cluster mean log-likelihood in the
    unconstrained parameterization.
    """

    family: str
    spec: FamilySpec
    loglik: float
    cov: np.ndarray | None
    p_hat: float
    rho_hat: float
    se_p: float | None
    se_rho: float | None
    converged: bool
    iterations: int
    grad_norm: float
    theta: np.ndarray
    cov_theta: np.ndarray | None = None
    boundary: bool = False
    message: str = ""
    n_clusters: int = 0


def moment_estimates(data: SumDataset) -> tuple[float, float]:
    """Method-of-moments marginal probability and intra-cluster correlation."""
    p = data.successes / data.trials
    m, s, c = data.m.astype(float), data.s.astype(float), data.count.astype(float)
    v = p * (1 - p)
    den = np.dot(c, m * (m - 1)) * v
    if den <= 0:
        return p, 0.0
    num = np.dot(c, (s - m * p) ** 2 - m * v)
    return p, float(num / den)


def starting_spec(family: str, data: SumDataset) -> FamilySpec:
    p0, rho0 = moment_estimates(data)
    p0 = float(np.clip(p0, 0.01, 0.99))
    rho0 = float(np.clip(rho0, 0.01, 0.9))
    return LINKS[family].start(p0, rho0, int(data.cluster_sizes.max()))


def _mean_loglik_objective(link, data, m_max):
    n = data.n_clusters

    def f(theta):
        try:
            spec = link.from_theta(theta, m_max)
            return log_likelihood(spec, data) / n
        except (ConstraintViolation, DomainError, FloatingPointError, OverflowError):
            return -np.inf

    return f


def delta_method(natural, cov, transform) -> tuple[np.ndarray | None, str]:
    """Standard errors of ``transform(natural)`` given the covariance of ``natural``.

    Returns ``(se, message)``; ``se`` is None when ``cov`` is unusable.
    """
    if cov is None:
        return None, "no covariance available"
    cov = np.asarray(cov, dtype=float)
    if not np.all(np.isfinite(cov)):
        return None, "covariance is not finite"
    w = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        return None, "covariance is not positive semidefinite"
    J = fd_jacobian(transform, natural)
    var = np.einsum("ij,jk,ik->i", J, cov, J)
    return np.sqrt(np.maximum(var, 0.0)), ""


def _covariance(f_total, theta):
    H = fd_hessian(f_total, theta)
    info = -H
    w = np.linalg.eigvalsh(info)
    if w.min() <= 0:
        return None, "observed information is not positive definite"
    return np.linalg.inv(info), ""


def fit_mle(
    family,
    data: SumDataset,
    *,
    start: FamilySpec | None = None,
    max_iter: int = 200,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
    restarts: int = 5,
    compute_se: bool = True,
    seed: int = 0,
) -> FitResult:
    """Fit a parametric family by maximum likelihood.

    Optimization runs in an unconstrained parameterization (log / logit /
    shifted log) from method-of-moments starting values; if that run does not
    converge, ``restarts`` jittered starts are tried and the best is kept.
    """
    family = resolve_family(family)
    link = LINKS[family]
    m_max = int(data.cluster_sizes.max())
    n = data.n_clusters
    f = _mean_loglik_objective(link, data, m_max)

    spec0 = start if start is not None else starting_spec(family, data)
    theta0 = link.to_theta(spec0, m_max)
    best = newton_maximize(f, theta0, max_iter=max_iter, gtol=gtol, ftol=ftol)
    if not best.converged and restarts:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            trial = newton_maximize(f, theta0 + rng.normal(0.0, 0.5, theta0.size),
                                    max_iter=max_iter, gtol=gtol, ftol=ftol)
            if (trial.converged, trial.value) > (best.converged, best.value):
                best = trial
            if best.converged:
                break

    spec = link.from_theta(best.theta, m_max)
    loglik = log_likelihood(spec, data)
    boundary = data.successes in (0, data.trials)
    natural = spec.params
    try:
        p_hat, rho_hat = (float(v) for v in link.moments(natural))
    except (ZeroDivisionError, FloatingPointError):
        p_hat, rho_hat = float(natural[0]), float("nan")
    result = FitResult(
        family=family, spec=spec, loglik=loglik, cov=None, p_hat=p_hat, rho_hat=rho_hat,
        se_p=None, se_rho=None, converged=best.converged, iterations=best.iterations,
        grad_norm=best.grad_norm, theta=best.theta, boundary=boundary, message=best.message,
        n_clusters=n,
    )
    if boundary:
        result.converged = False
        result.p_hat = data.successes / data.trials
        result.message = "degenerate data: MLE on the parameter boundary, no covariance"
        return result
    if not compute_se:
        return result

    def f_total(theta):
        return f(theta) * n

    try:
        cov_theta, msg = _covariance(f_total, best.theta)
    except (EvaluationError, np.linalg.LinAlgError) as exc:
        cov_theta, msg = None, str(exc)
    if cov_theta is None:
        result.message = msg
        return result
    J = fd_jacobian(lambda t: link.natural(t, m_max), best.theta)
    result.cov_theta = cov_theta
    result.cov = J @ cov_theta @ J.T
    se, msg = delta_method(natural, result.cov, link.moments)
    if se is None:
        result.message = msg
    else:
        result.se_p, result.se_rho = float(se[0]), float(se[1])
        if family == "binomial":
            result.se_rho = 0.0
    return result


# --------------------------------------------------------------------------
# saturated (nonparametric) estimation


def inversion_matrix(m: int) -> np.ndarray:
    """Linear map from the pmf (index s) to the joint probabilities p_0..p_m."""
    A = np.zeros((m + 1, m + 1))
    for j in range(m + 1):
        k = np.arange(m - j + 1)
        A[j, m - k] = np.exp(log_binom(m - j, k) - log_binom(m, k))
    return A


def saturated_fit(data: SumDataset) -> tuple[ProbabilitySequence, np.ndarray]:
    """Empirical pmf pushed through the inversion formula.

    Returns the estimated sequence (possibly violating monotonicity, which is
    logged rather than repaired) and the covariance of ``(p_1, ..., p_m)``
    from the multinomial covariance of the empirical pmf.
    """
    sizes = data.cluster_sizes
    if sizes.size != 1:
        raise DomainError("saturated_fit needs a single cluster size")
    m = int(sizes[0])
    counts = data.counts_for(m).astype(float)
    n = counts.sum()
    pi = counts / n
    A = inversion_matrix(m)
    p = A @ pi
    p[0] = 1.0
    seq = ProbabilitySequence(m, p)
    try:
        seq.check()
    except ConstraintViolation as exc:
        log.info("saturated estimate is not a valid sequence: %s", exc)
    cov_pi = (np.diag(pi) - np.outer(pi, pi)) / n
    cov = A @ cov_pi @ A.T
    return seq, cov[1:, 1:]


def saturated_loglik(data: SumDataset) -> float:
    total = 0.0
    for m, s, c in data.groups():
        nm = c.sum()
        total += float(np.dot(c, np.log(c / nm)))
    return total
