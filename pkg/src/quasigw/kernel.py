"""Fitness and mutation kernels for the sharp peak model.

Genotypes are length-``ell`` tuples over the alphabet ``{0, ..., kappa-1}``;
the all-zeros tuple plays the role of the master sequence.  The Hamming
class of a genotype is its Hamming distance to the master sequence.
Mutation acts independently per locus: with probability ``q`` the letter
is replaced by one of the ``kappa - 1`` other letters, chosen uniformly.

The class-level ("lumped") kernel gives the probability that a child of
a class-``b`` parent lands in class ``c``.  It depends on the parent only
through ``b``, which is what makes the process of class counts a
branching process in its own right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ModelParams",
    "master_sequence",
    "genotypes",
    "hamming_distance",
    "hamming_class",
    "class_size",
    "fitness_class",
    "fitness_genotype",
    "mutation_prob_genotype",
    "lumped_kernel_entry",
    "lumped_kernel_matrix",
    "limit_kernel",
]

Genotype = tuple


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the sharp peak model.

    sigma : fitness of the master sequence; every other genotype has fitness 1
    ell   : sequence length
    kappa : alphabet size; a mutating locus picks one of the kappa - 1 other letters
    q     : per-locus mutation probability

    q = 0 is the faithful-replication degenerate and is allowed; q = 1 is not.
    """

    sigma: float
    ell: int
    kappa: int
    q: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.sigma) or self.sigma < 1:
            raise ValueError(f"sigma must be finite and >= 1, got {self.sigma}")
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")
        if self.kappa < 2:
            raise ValueError(f"kappa must be >= 2, got {self.kappa}")
        if not 0.0 <= self.q < 1.0:
            raise ValueError(f"q must lie in [0, 1), got {self.q}")

    @property
    def a(self) -> float:
        """Expected number of mutated loci per replication, ell * q."""
        return self.ell * self.q


def master_sequence(ell: int) -> Genotype:
    """The all-zeros genotype of length ell."""
    return (0,) * ell


def genotypes(ell: int, kappa: int) -> Iterator[Genotype]:
    """Iterate over all kappa**ell genotypes.  Only sensible for small instances."""
    return product(range(kappa), repeat=ell)


def hamming_distance(u: Sequence[int], v: Sequence[int]) -> int:
    """Number of loci at which u and v differ."""
    if len(u) != len(v):
        raise ValueError(f"length mismatch: {len(u)} vs {len(v)}")
    return sum(1 for x, y in zip(u, v) if x != y)


def hamming_class(u: Sequence[int]) -> int:
    """Hamming distance from u to the master sequence (all zeros)."""
    return sum(1 for x in u if x != 0)


def class_size(ell: int, kappa: int, k: int) -> int:
    """Number of genotypes in Hamming class k: C(ell, k) * (kappa - 1)**k."""
    if not 0 <= k <= ell:
        raise ValueError(f"class index {k} outside [0, {ell}]")
    return math.comb(ell, k) * (kappa - 1) ** k


def fitness_class(k: int, params: ModelParams) -> float:
    """Reproduction rate of class k: sigma for the master class, 1 otherwise."""
    if not 0 <= k <= params.ell:
        raise ValueError(f"class index {k} outside [0, {params.ell}]")
    return params.sigma if k == 0 else 1.0


def fitness_genotype(u: Sequence[int], params: ModelParams) -> float:
    """Reproduction rate of genotype u."""
    if len(u) != params.ell:
        raise ValueError(f"genotype length {len(u)} != ell {params.ell}")
    return fitness_class(0 if hamming_class(u) == 0 else 1, params)


def mutation_prob_genotype(u: Sequence[int], v: Sequence[int], params: ModelParams) -> float:
    """Probability that a child of u is exactly v.

    Per-locus independence gives (1-q)^(matches) * (q/(kappa-1))^(mismatches);
    the product only depends on the number of mismatched loci.
    """
    if len(u) != params.ell or len(v) != params.ell:
        raise ValueError("genotype length does not match params.ell")
    d = hamming_distance(u, v)
    q = params.q
    return (1.0 - q) ** (params.ell - d) * (q / (params.kappa - 1)) ** d


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def lumped_kernel_entry(b: int, c: int, params: ModelParams) -> float:
    """Probability that a child of a class-b parent lies in class c.

    Sums over l back-mutations (mutated locus reverting to the master
    letter) and k = c - b + l forward moves (correct locus leaving the
    master letter).  Each term is evaluated in log space and the terms
    are combined with a max-shifted exponential sum, so the entry stays
    accurate for sequence lengths well beyond 10**4.
    """
    ell, kappa, q = params.ell, params.kappa, params.q
    if not 0 <= b <= ell:
        raise ValueError(f"class index {b} outside [0, {ell}]")
    if not 0 <= c <= ell:
        raise ValueError(f"class index {c} outside [0, {ell}]")
    if q == 0.0:
        return 1.0 if b == c else 0.0

    q_back = q / (kappa - 1)
    log_q = math.log(q)
    log_stay = math.log1p(-q)
    log_back = math.log(q_back)
    log_keep = math.log1p(-q_back)

    lo = max(0, b - c)
    hi = min(b, ell - c)
    terms = []
    for l in range(lo, hi + 1):
        k = c - b + l
        t = (
            _log_binom(ell - b, k)
            + k * log_q
            + (ell - b - k) * log_stay
            + _log_binom(b, l)
            + l * log_back
            + (b - l) * log_keep
        )
        terms.append(t)
    m = max(terms)
    if m == -math.inf:
        return 0.0
    return math.exp(m) * math.fsum(math.exp(t - m) for t in terms)


def _binom_pmf(n: int, p: float) -> np.ndarray:
    """Binomial(n, p) pmf on 0..n, computed through log-gamma."""
    if n == 0:
        return np.ones(1)
    if p == 0.0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return out
    k = np.arange(n + 1)
    logpmf = (
        gammaln(n + 1)
        - gammaln(k + 1)
        - gammaln(n - k + 1)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )
    return np.exp(logpmf)


def lumped_kernel_matrix(params: ModelParams) -> np.ndarray:
    """Dense (ell+1) x (ell+1) class transition matrix, row b = parent class.

    Row b is the law of b + G - L where G ~ Binomial(ell-b, q) counts
    correct loci that mutate away and L ~ Binomial(b, q/(kappa-1)) counts
    mutated loci that revert.  The row is assembled as the convolution of
    the two binomial pmfs, which is term-for-term the same sum as
    lumped_kernel_entry but vectorized over whole rows.
    """
    ell, kappa, q = params.ell, params.kappa, params.q
    m = np.empty((ell + 1, ell + 1))
    for b in range(ell + 1):
        gain = _binom_pmf(ell - b, q)
        loss = _binom_pmf(b, q / (kappa - 1))
        # conv(gain, loss[::-1])[c] = sum_{k-l=c-b} P(G=k) P(L=l)
        m[b] = np.convolve(gain, loss[::-1])
    return m


def limit_kernel(i: int, k: int, a: float) -> float:
    """Long-sequence limit of the class kernel with q = a / ell.

    Back-mutations vanish in the limit, so a class-i parent begets a
    class-k child with the Poisson(a) weight at k - i, and never moves
    down in class.
    """
    if i < 0 or k < 0:
        raise ValueError("class indices must be nonnegative")
    if not (math.isfinite(a) and a >= 0):
        raise ValueError(f"a must be finite and >= 0, got {a}")
    if k < i:
        return 0.0
    d = k - i
    if a == 0.0:
        return 1.0 if d == 0 else 0.0
    return math.exp(-a + d * math.log(a) - math.lgamma(d + 1))
