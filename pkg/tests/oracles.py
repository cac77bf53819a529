"""Independent reference computations used only by the tests."""
import itertools
import math

import mpmath
import numpy as np
from scipy import integrate, special


def chi2_sf_quadrature(x, df):
    def density(t):
        return t ** (df / 2 - 1) * math.exp(-t / 2) / (2 ** (df / 2) * math.gamma(df / 2))

    val, _ = integrate.quad(density, x, math.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def exact_float_sum(terms, prec=256):
    """Sum of the given binary64 values carried out in 256-bit arithmetic."""
    with mpmath.workprec(prec):
        return float(mpmath.fsum(mpmath.mpf(float(t)) for t in terms))


def beta_moments(a, b, m):
    """p_j = E[P^j] for P ~ Beta(a, b), j = 0..m."""
    j = np.arange(m + 1)
    return np.exp(special.betaln(a + j, b) - special.betaln(a, b))


def beta_moments_extended(a, b, m, prec=256):
    """beta_moments computed with mpmath and rounded to long double.

    The alternating sums amplify relative input error by roughly 2**m, so
    float64 moments alone limit the pmf to about 1e-12 at m = 10.
    """
    with mpmath.workprec(prec):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        out, cur = [], mpmath.mpf(1)
        for j in range(m + 1):
            out.append(np.longdouble(mpmath.nstr(cur, 40)))
            cur *= (a + j) / (a + b + j)
    return np.array(out, dtype=np.longdouble)


def enumerate_beta_mixture(a, b, m):
    """Law of the sum by summing P(Y = y) over all 2^m binary vectors.

    For an exchangeable vector mixed over P ~ Beta(a, b),
    P(Y = y) = B(a + s, b + m - s) / B(a, b) with s = sum(y).
    """
    mass = np.zeros(m + 1)
    for y in itertools.product((0, 1), repeat=m):
        s = sum(y)
        mass[s] += math.exp(special.betaln(a + s, b + m - s) - special.betaln(a, b))
    return mass


def binomial_expansion_difference(seq, r, nu):
    return sum(math.comb(r, k) * (-1) ** (r + k) * seq[nu + k] for k in range(r + 1))


def lapgam_score(alpha, beta, records):
    """Hand-derived gradient of the grouped LapGam log-likelihood in (alpha, beta).

    With p_j = (1 + beta j)^-alpha:
      d p_j / d alpha = -log(1 + beta j) p_j,  d p_j / d beta = -alpha j p_j / (1 + beta j).
    """
    g = np.zeros(2)
    for m, s, c in records:
        k = np.arange(m - s + 1)
        j = s + k
        w = (-1.0) ** k * special.comb(m - s, k)
        pj = (1 + beta * j) ** -alpha
        base = np.dot(w, pj)
        da = np.dot(w, -np.log1p(beta * j) * pj)
        db = np.dot(w, -alpha * j * pj / (1 + beta * j))
        g += c * np.array([da, db]) / base
    return g


def bivariate_orthant_2d(t, r):
    """P(Z1 > t, Z2 > t) by 2-D quadrature of the bivariate normal density."""
    det = 1 - r * r

    def dens(y, x):
        return math.exp(-(x * x - 2 * r * x * y + y * y) / (2 * det)) / (2 * math.pi * math.sqrt(det))

    val, _ = integrate.dblquad(dens, t, t + 12, t, t + 12, epsabs=1e-12, epsrel=1e-10)
    return val
