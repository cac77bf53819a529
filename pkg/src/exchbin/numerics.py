"""Numerical kernel shared by the rest of the package.

Special functions are thin, domain-checked wrappers around :mod:`scipy.special`.
Alternating binomial sums are evaluated with error-free products followed by an
exactly rounded floating-point sum, which keeps the heavy cancellation in the
inclusion-exclusion formulas under control for cluster sizes up to ~60.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .exceptions import DomainError, EvaluationError

EPS = np.finfo(float).eps
_SPLITTER = 134217729.0  # 2**27 + 1


def log_gamma(x):
    """ln Gamma(x) for x > 0 (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    out = special.gammaln(arr)
    return float(out) if out.ndim == 0 else out


def log_binom(m, k):
    """ln C(m, k) for integers 0 <= k <= m (broadcasts over arrays)."""
    m = np.asarray(m)
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k > m):
        raise DomainError(f"log_binom requires 0 <= k <= m, got m={m}, k={k}")
    out = special.gammaln(m + 1.0) - special.gammaln(k + 1.0) - special.gammaln(m - k + 1.0)
    return float(out) if out.ndim == 0 else out


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail P(chi2_df > x), i.e. the regularized upper incomplete gamma Q(df/2, x/2)."""
    if x < 0 or df < 1:
        raise DomainError(f"chi_square_sf requires x >= 0 and df >= 1, got x={x}, df={df}")
    if x == 0:
        return 1.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def two_product(a, b):
    """Error-free product: returns (p, e) with p = fl(a*b) and a*b = p + e exactly.

    Dekker's splitting; valid while |a*b| stays well inside the float range.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = a * b
    t = _SPLITTER * a
    a_hi = t - (t - a)
    a_lo = a - a_hi
    t = _SPLITTER * b
    b_hi = t - (t - b)
    b_lo = b - b_hi
    e = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, e


def alternating_sum(terms: Sequence[float]) -> float:
    """Sum ``terms`` without losing the small result of a cancelling series.

    Uses Shewchuk's error-free partial sums (``math.fsum``), so the result is
    the correctly rounded value of the exact sum and does not depend on order.
    """
    vals = [float(t) for t in terms]
    if not all(math.isfinite(v) for v in vals):
        raise EvaluationError("alternating_sum received a non-finite term")
    return math.fsum(vals)


def binomial_weighted_sums(coef: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row sums of ``coef * values`` with exact products and exactly rounded sums.

    ``coef`` holds exactly representable integers (signed binomial
    coefficients); padding entries must be zero in ``coef``.
    """
    p, e = two_product(coef, values)
    both = np.concatenate([p, e], axis=-1)
    if not np.all(np.isfinite(both)):
        raise EvaluationError("non-finite term in alternating binomial sum")
    return np.array([math.fsum(row) for row in both.tolist()])


@dataclass(frozen=True)
class DifferenceTable:
    """Forward differences of a sequence; ``rows[r][j]`` is the r-th difference at j."""

    rows: tuple

    def __getitem__(self, r):
        return self.rows[r]

    def __len__(self):
        return len(self.rows)


def difference_table(seq: Sequence[float], r_max: int | None = None) -> DifferenceTable:
    seq = np.asarray(seq, dtype=float)
    if r_max is None:
        r_max = len(seq) - 1
    if r_max < 0 or r_max > len(seq) - 1:
        raise IndexError(f"r_max={r_max} out of range for a sequence of length {len(seq)}")
    rows = [seq.copy()]
    for _ in range(r_max):
        rows.append(np.diff(rows[-1]))
    return DifferenceTable(tuple(rows))


def _check_finite(val, theta):
    if not np.isfinite(val):
        raise EvaluationError(f"objective is not finite at {np.asarray(theta)!r}")
    return val


def fd_gradient(f: Callable[[np.ndarray], float], theta) -> np.ndarray:
    """Central-difference gradient with steps cbrt(eps) * max(1, |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    h = np.cbrt(EPS) * np.maximum(1.0, np.abs(theta))
    grad = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h[i]
        fp = _check_finite(f(theta + step), theta + step)
        fm = _check_finite(f(theta - step), theta - step)
        grad[i] = (fp - fm) / (2 * h[i])
    return grad


def fd_hessian(f: Callable[[np.ndarray], float], theta, f0: float | None = None) -> np.ndarray:
    """Central-difference Hessian with steps eps**(1/4) * max(1, |theta_i|), symmetrized."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    h = EPS ** 0.25 * np.maximum(1.0, np.abs(theta))
    if f0 is None:
        f0 = f(theta)
    _check_finite(f0, theta)
    eye = np.diag(h)

    def ev(x):
        return _check_finite(f(x), x)

    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = (ev(theta + eye[i]) - 2 * f0 + ev(theta - eye[i])) / h[i] ** 2
        for j in range(i + 1, n):
            H[i, j] = (
                ev(theta + eye[i] + eye[j])
                - ev(theta + eye[i] - eye[j])
                - ev(theta - eye[i] + eye[j])
                + ev(theta - eye[i] - eye[j])
            ) / (4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], theta) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued map (rows = outputs)."""
    theta = np.asarray(theta, dtype=float)
    h = np.cbrt(EPS) * np.maximum(1.0, np.abs(theta))
    cols = []
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h[i]
        fp = np.atleast_1d(np.asarray(f(theta + step), dtype=float))
        fm = np.atleast_1d(np.asarray(f(theta - step), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvaluationError(f"map is not finite near {theta!r}")
        cols.append((fp - fm) / (2 * h[i]))
    return np.column_stack(cols)
