"""Limiting class distribution in the long-sequence regime.

With q = a / ell and ell growing, the model is governed by the two
numbers sigma (master fitness) and a (expected mutations per
replication).  When sigma * exp(-a) > 1 the surviving population
organizes around the master class with class probabilities

    pmf(k) = (sigma e^{-a} - 1) * (a^k / k!) * sum_{i >= 1} i^k / sigma^i,

a proper distribution on the nonnegative integers.  At or below the
threshold sigma * exp(-a) = 1 the mass of every fixed class vanishes
and the limiting pmf is identically zero ("disordered").
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Regime",
    "QuasispeciesParams",
    "classify_regime",
    "power_sigma_series",
    "qs_pmf",
    "qs_pmf_by_recurrence",
    "qs_normalization_check",
]


class Regime(enum.Enum):
    DISORDERED = "disordered"
    QUASISPECIES = "quasispecies"


@dataclass(frozen=True)
class QuasispeciesParams:
    """Limit parameters: master fitness sigma > 1 and mutation pressure a >= 0."""

    sigma: float
    a: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.sigma) or self.sigma <= 1.0:
            raise ValueError(f"sigma must be finite and > 1, got {self.sigma}")
        if not math.isfinite(self.a) or self.a < 0.0:
            raise ValueError(f"a must be finite and >= 0, got {self.a}")

    @property
    def threshold(self) -> float:
        """sigma * exp(-a); the population survives selection iff this exceeds 1."""
        return self.sigma * math.exp(-self.a)


def classify_regime(params: QuasispeciesParams) -> Regime:
    """Quasispecies iff sigma * exp(-a) > 1; the boundary counts as disordered."""
    return Regime.QUASISPECIES if params.threshold > 1.0 else Regime.DISORDERED


def _logaddexp(x: float, y: float) -> float:
    if x < y:
        x, y = y, x
    if y == -math.inf:
        return x
    return x + math.log1p(math.exp(y - x))


def _log_power_series(k: int, log_base: float, rel_tol: float) -> float:
    """log of sum_{i >= 1} i^k * exp(-i * log_base), for log_base > 0.

    Terms are accumulated in log space.  Once the term ratio
    ((i+1)/i)^k * exp(-log_base) falls below one it keeps falling, so the
    remaining tail is dominated by a geometric series; the loop stops as
    soon as that bound is below rel_tol times the partial sum.
    """
    if log_base <= 0.0:
        raise ValueError("series requires log_base > 0")
    total = -math.inf
    i = 0
    while i < 50_000_000:
        i += 1
        total = _logaddexp(total, k * math.log(i) - i * log_base)
        ratio = math.exp(k * math.log1p(1.0 / i) - log_base)
        if ratio < 1.0:
            log_next = k * math.log(i + 1) - (i + 1) * log_base
            log_tail = log_next - math.log1p(-ratio)
            if log_tail <= math.log(rel_tol) + total:
                return total
    raise RuntimeError("series failed to terminate; parameters out of sensible range")


def power_sigma_series(k: int, sigma: float, tol: float = 1e-15) -> float:
    """sum_{i >= 1} i^k / sigma^i for sigma > 1, truncated at relative error tol."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if not sigma > 1.0:
        raise ValueError(f"series diverges unless sigma > 1, got {sigma}")
    return math.exp(_log_power_series(k, math.log(sigma), tol))


def qs_pmf(params: QuasispeciesParams, k: int, tol: float = 1e-15) -> float:
    """Limiting probability of class k.

    Returns 0 for every k in the disordered regime.  The Poisson-like
    factor a^k / k! and the power series are combined in log space, so
    large k and near-threshold parameters pose no overflow problem.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if classify_regime(params) is Regime.DISORDERED:
        return 0.0
    if params.a == 0.0:
        return 1.0 if k == 0 else 0.0
    log_val = (
        math.log(params.threshold - 1.0)
        + k * math.log(params.a)
        - math.lgamma(k + 1)
        + _log_power_series(k, math.log(params.sigma), tol)
    )
    return math.exp(log_val)


def qs_pmf_by_recurrence(params: QuasispeciesParams, k_max: int) -> np.ndarray:
    """Classes 0..k_max via the self-consistency recurrence.

    The limiting pmf satisfies, for each k,

        sigma e^{-a} pmf(k) = sigma pmf(0) e^{-a} a^k / k!
                              + sum_{i=1}^{k} pmf(i) e^{-a} a^{k-i} / (k-i)!

    Moving the i = k term to the left and dividing by e^{-a} gives

        pmf(k) = (sigma pmf(0) w(k) + sum_{i=1}^{k-1} pmf(i) w(k-i)) / (sigma - 1)

    with w(j) = a^j / j!, seeded by pmf(0) = (sigma e^{-a} - 1) / (sigma - 1).
    Entirely independent of the series evaluation in qs_pmf, which makes
    the two routes useful cross-checks.

    Raises ValueError in the disordered regime, where no such pmf exists.
    """
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    if classify_regime(params) is Regime.DISORDERED:
        raise ValueError(
            "recurrence is only defined above the threshold sigma * exp(-a) > 1; "
            "the disordered limit has no class distribution"
        )
    sigma, a = params.sigma, params.a
    pmf = np.zeros(k_max + 1)
    pmf[0] = (params.threshold - 1.0) / (sigma - 1.0)
    w = np.zeros(k_max + 1)
    w[0] = 1.0
    for j in range(1, k_max + 1):
        w[j] = w[j - 1] * a / j
    for k in range(1, k_max + 1):
        acc = sigma * pmf[0] * w[k]
        for i in range(1, k):
            acc += pmf[i] * w[k - i]
        pmf[k] = acc / (sigma - 1.0)
    return pmf


def qs_normalization_check(
    params: QuasispeciesParams, k_max: int, tol: float = 1e-15
) -> tuple[float, float]:
    """(partial sum of the pmf up to k_max, analytic bound on the missing tail).

    Writing the tail as (sigma e^{-a} - 1) sum_i (sigma e^{-a})^{-i}
    P(Poisson(a i) > K), two valid bounds are combined:

    * replacing the Poisson tail by (a i)^{K+1} / (K+1)! e^{a i}, which
      turns the sum into the k = K+1 power series at base sigma e^{-a}
      (sharp when a is small against log(sigma e^{-a}));
    * a Chernoff bound e^{-a i} (e a i / (K+1))^{K+1} on the Poisson
      tail for i up to i0 ~ (K+1) / (2a), plus the trivial bound 1 and a
      geometric remainder beyond i0.

    The minimum of the two is returned.  It may still exceed the true
    missing mass by a wide margin close to the threshold; it is reported
    as computed, not clipped.
    """
    if classify_regime(params) is Regime.DISORDERED:
        raise ValueError("normalization check applies to the quasispecies regime only")
    partial = math.fsum(qs_pmf(params, k, tol) for k in range(k_max + 1))
    if params.a == 0.0:
        return partial, 0.0
    a, thr = params.a, params.threshold
    n = k_max + 1
    log_plain = (
        math.log(thr - 1.0)
        + n * math.log(a)
        - math.lgamma(n + 1)
        + _log_power_series(n, math.log(thr), tol)
    )
    plain = math.exp(log_plain) if log_plain < 700.0 else math.inf
    i0 = max(1, math.floor(n / (2.0 * a)))
    log_chernoff = (
        math.log(thr - 1.0)
        + n * (1.0 + math.log(a) - math.log(n))
        + _log_power_series(n, math.log(params.sigma), tol)
    )
    chernoff = (math.exp(log_chernoff) if log_chernoff < 700.0 else math.inf) + thr**-i0
    return partial, min(plain, chernoff)
