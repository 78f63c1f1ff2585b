"""Brute-force verification of the sampler on small instances.

Two independent ways to compute click-pattern probabilities:

* exhaustive application of the sequential chain (enumerate_distribution),
* a structurally different closed form: inclusion-exclusion over multimode
  vacuum projections,

      P(clicks exactly on S) = sum_{Z subseteq S} (-1)^{|Z|} P_vac(Z u S^c),

  with P_vac(B) = 2^{|B|} exp(-r_B^T (V_B+I)^{-1} r_B) / sqrt(det(V_B+I)).

Agreement between the two is the package's primary correctness evidence;
nothing here shares update code with the sampler beyond the GaussianState
container itself.

Cost grows as 3^l over clicked sets, so enumeration is capped at small mode
counts; the caps are arguments, not constants, but the defaults are the
supported envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalDomainError
from .sampler import ClickPattern, pattern_probability
from .states import assert_physical

# Default caps: 2^10 patterns to enumerate, 2^16 subsets per pattern.
ENUMERATION_LIMIT = 10
SUBSET_LIMIT = 16

# Invariant slack on an enumerated distribution.
PROB_FLOOR = -1e-12
SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DistributionTable:
    """All 2^l pattern probabilities of an l-mode state.

    ``probs[i]`` is the probability of the pattern whose bit for mode j+1 is
    (i >> j) & 1, i.e. mode 1 is the least significant bit of the index.
    """

    n_modes: int
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (2 ** self.n_modes,):
            raise ValueError("probs must have length 2^n_modes")

    def pattern(self, index):
        """The ClickPattern for a table index."""
        bits = tuple((index >> j) & 1 for j in range(self.n_modes))
        return ClickPattern(bits)

    def index(self, pattern):
        bits = pattern.bits if isinstance(pattern, ClickPattern) else pattern
        return sum((1 << j) for j, b in enumerate(bits) if b)

    def prob(self, pattern):
        return float(self.probs[self.index(pattern)])

    def items(self):
        """Iterate (ClickPattern, probability) in index order."""
        for i in range(self.probs.shape[0]):
            yield self.pattern(i), float(self.probs[i])

    def total(self):
        return math.fsum(self.probs.tolist())

    def check(self):
        """Raise if any probability is materially negative or the sum is off."""
        low = float(self.probs.min())
        if low < PROB_FLOOR:
            raise NumericalDomainError("enumerated probability %r below floor" % low)
        total = self.total()
        if abs(total - 1.0) > SUM_TOL:
            raise NumericalDomainError("enumerated distribution sums to %r" % total)


def enumerate_distribution(state, limit=ENUMERATION_LIMIT, execution=None):
    """Evaluate every pattern probability through the forced chain.

    Refuses more than ``limit`` modes (2^limit chain evaluations).
    """
    l = state.n_modes
    if l > limit:
        raise ValueError(
            "enumeration over %d modes (2^%d patterns) exceeds the limit of %d"
            % (l, l, limit)
        )
    assert_physical(state)
    probs = np.empty(2 ** l)
    for i in range(2 ** l):
        bits = tuple((i >> j) & 1 for j in range(l))
        probs[i] = pattern_probability(state, bits, execution=execution, validate=False)
    return DistributionTable(l, probs)


def multimode_vacuum_prob(state, modes):
    """Probability that every mode in ``modes`` shows no click.

    P_vac(B) = 2^{|B|} exp(-r_B^T (V_B+I)^{-1} r_B) / sqrt(det(V_B+I)),
    the multimode generalization of the single-mode vacuum overlap. The
    empty set gives 1 by convention.
    """
    modes = tuple(modes)
    l = state.n_modes
    if len(set(modes)) != len(modes):
        raise ValueError("mode subset %r has duplicates" % (modes,))
    if any(not 1 <= m <= l for m in modes):
        raise ValueError("mode subset %r out of range 1..%d" % (modes, l))
    b = len(modes)
    if b == 0:
        return 1.0
    idx = np.empty(2 * b, dtype=np.intp)
    srt = sorted(modes)
    idx[0::2] = [2 * (m - 1) for m in srt]
    idx[1::2] = [2 * (m - 1) + 1 for m in srt]
    T = state.cov[np.ix_(idx, idx)] + np.eye(2 * b)
    try:
        chol = np.linalg.cholesky(T)
    except np.linalg.LinAlgError:
        raise NumericalDomainError("V_B + I is not positive definite") from None
    # det via the Cholesky factor; solve for the quadratic form.
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(chol))))
    rB = state.mean[idx]
    y = np.linalg.solve(T, rB)
    return float(2.0 ** b * np.exp(-float(rB @ y) - 0.5 * logdet))


def inclusion_exclusion_prob(state, pattern, limit=SUBSET_LIMIT):
    """Exact pattern probability by inclusion-exclusion over vacuum sets.

    Sums (-1)^{|Z|} P_vac(Z u S^c) over all subsets Z of the clicked set S;
    the unclicked set S^c is required vacuum throughout. 2^|S| terms,
    accumulated exactly with fsum; refuses |S| > limit.
    """
    bits = pattern.bits if isinstance(pattern, ClickPattern) else tuple(pattern)
    l = state.n_modes
    if len(bits) != l:
        raise ValueError("pattern length %d != %d modes" % (len(bits), l))
    clicked = [j + 1 for j, b in enumerate(bits) if b]
    silent = tuple(j + 1 for j, b in enumerate(bits) if not b)
    s = len(clicked)
    if s > limit:
        raise ValueError(
            "inclusion-exclusion over %d clicks (2^%d terms) exceeds the limit of %d"
            % (s, s, limit)
        )
    terms = []
    for z in range(2 ** s):
        subset = tuple(clicked[j] for j in range(s) if (z >> j) & 1)
        sign = -1.0 if (bin(z).count("1") & 1) else 1.0
        terms.append(sign * multimode_vacuum_prob(state, subset + silent))
    return math.fsum(terms)
