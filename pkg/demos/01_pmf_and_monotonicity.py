# Distributions of the number of successes in an exchangeable cluster
#
# An exchangeable binary vector of length m is described by the joint success
# probabilities p_j = P(first j units all succeed). The law of the cluster sum
# follows by inclusion-exclusion, and any completely monotone sequence gives a
# valid pmf.

import numpy as np

from exchbin import (
    BetaBinomialPrentice, Binomial, LapGam, ProbabilitySequence, QPower,
    check_complete_monotone, exact_pmf, family_moments, family_pmf, invert_pmf,
)

# Independence: p_j = p**j reproduces the binomial law.
seq = ProbabilitySequence(3, np.array([1, 0.5, 0.25, 0.125]))
print("p_j = 0.5^j ->", exact_pmf(seq).mass)

# LapGam: p_j = (1 + beta j)^(-alpha), the Laplace transform of a gamma law
# evaluated at the integers. Completely monotone for every alpha, beta.
lg = LapGam(alpha=2.0, beta=0.5)
print("LapGam(2, 0.5), m=3:", family_pmf(lg, 3).mass)
print("completely monotone:", check_complete_monotone(ProbabilitySequence(12, np.array(
    [(1 + 0.5 * j) ** -2.0 for j in range(13)]))))

# A sequence that violates the condition is caught by the difference table.
print("[1, .9, .2, .1]:", check_complete_monotone(ProbabilitySequence(3, np.array([1, 0.9, 0.2, 0.1]))))

# Mean and intra-cluster correlation from p_1 and p_2.
for spec in (lg, QPower(0.4, 0.7), BetaBinomialPrentice(0.3, 0.2), Binomial(0.3)):
    p, rho = family_moments(spec)
    print(f"{spec!r:45s} p={p:.4f} rho={rho:.4f}")

# Going back from a pmf to the sequence.
pmf = family_pmf(lg, 6)
print("round trip error:", np.abs(invert_pmf(pmf).p - np.array([(1 + 0.5 * j) ** -2.0 for j in range(7)])).max())

# Large clusters: the alternating sums are evaluated exactly, so even m = 20
# with p near 1 keeps the total mass at 1 to ~1e-13.
for m in (10, 15, 20):
    print(m, abs(family_pmf(Binomial(0.9), m).mass.sum() - 1))
