"""Mean matrix of the class-level branching process and derived quantities.

The mean matrix W(i, j) = A(i) * M(i, j) combines the class fitness A
(sigma for class 0, else 1) with the lumped mutation kernel M.  Its
Perron eigenvalue is the mean growth factor of the population, and the
left Perron eigenvector, normalized to total mass one, is the asymptotic
class-frequency profile on survival.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import ModelParams, lumped_kernel_matrix

__all__ = [
    "ConvergenceError",
    "PerronPair",
    "BoundsRow",
    "BoundsReport",
    "fitness_vector",
    "mean_matrix",
    "perron",
    "perron_bounds_check",
    "extinction_probabilities",
]


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations before meeting its tolerance."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class PerronPair:
    """Perron eigenvalue and left eigenvector (unit total mass)."""

    lam: float
    rho: np.ndarray
    residual: float
    iterations: int


def fitness_vector(params: ModelParams) -> np.ndarray:
    """Per-class reproduction rates (sigma, 1, ..., 1)."""
    a = np.ones(params.ell + 1)
    a[0] = params.sigma
    return a


def mean_matrix(params: ModelParams, kernel: np.ndarray | None = None) -> np.ndarray:
    """W(i, j) = A(i) * M(i, j); pass a precomputed kernel to skip rebuilding it."""
    m = lumped_kernel_matrix(params) if kernel is None else np.asarray(kernel, dtype=float)
    w = m.copy()
    w[0] *= params.sigma
    return w


def perron(w: np.ndarray, tol: float = 1e-12, max_iter: int = 10**6) -> PerronPair:
    """Left power iteration for the Perron eigenpair of a nonnegative matrix.

    Starts from the uniform distribution, renormalizes in 1-norm each
    step, and stops once both the change in the eigenvalue estimate and
    the residual ||rho W - lam rho||_1 drop below tol (relative to lam).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"matrix must be square, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("matrix must be entrywise nonnegative")
    n = w.shape[0]
    v = np.full(n, 1.0 / n)
    lam_prev = np.inf
    residual = np.inf
    for it in range(1, max_iter + 1):
        y = v @ w
        lam = float(y.sum())
        if not lam > 0.0:
            raise ValueError("power iteration hit a zero vector; matrix has a zero row sum")
        residual = float(np.abs(y - lam * v).sum())
        if residual < tol * lam and abs(lam - lam_prev) <= tol * max(1.0, lam):
            return PerronPair(lam=lam, rho=v, residual=residual, iterations=it)
        lam_prev = lam
        v = y / lam
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


@dataclass(frozen=True)
class BoundsRow:
    k: int
    lower: float
    value: float
    upper: float
    ok: bool


@dataclass(frozen=True)
class BoundsReport:
    rows: list[BoundsRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def perron_bounds_check(
    pair: PerronPair,
    params: ModelParams,
    kernel: np.ndarray | None = None,
    k_max: int = 10,
    rtol: float = 1e-11,
) -> BoundsReport:
    """Sandwich check on the eigenvalue equations.

    For each class k, the eigenvalue equation lam * rho(k) =
    sigma rho(0) M(0,k) + sum_{i>=1} rho(i) M(i,k) is bracketed by
    dropping the i > k terms (lower bound) and by replacing them with
    max_{i>k} M(i,k) (upper bound, since the dropped rho mass is < 1).
    For q = 0 the brackets collapse to equalities, so the comparison
    allows a small slack proportional to lam.
    """
    m = lumped_kernel_matrix(params) if kernel is None else np.asarray(kernel, dtype=float)
    lam = pair.lam
    rho = np.asarray(pair.rho, dtype=float)
    slack = rtol * max(1.0, lam)
    rows = []
    for k in range(min(k_max, params.ell) + 1):
        lower = params.sigma * rho[0] * m[0, k] + float(rho[1 : k + 1] @ m[1 : k + 1, k])
        above = m[k + 1 :, k]
        upper = lower + (float(above.max()) if above.size else 0.0)
        value = lam * rho[k]
        ok = (lower - slack <= value) and (value <= upper + slack)
        rows.append(BoundsRow(k=k, lower=lower, value=value, upper=upper, ok=ok))
    return BoundsReport(rows=rows)


def extinction_probabilities(
    params: ModelParams,
    tol: float = 1e-12,
    max_iter: int = 10**5,
    kernel: np.ndarray | None = None,
) -> np.ndarray:
    """Extinction probability per starting class.

    The generating function of the class-k offspring vector is
    f_k(s) = exp(A(k) * (sum_l M(k,l) s(l) - 1)), and the extinction
    vector is its minimal fixed point, reached by iterating from the
    zero vector (the iterates increase monotonically).

    Near-critical classes converge slowly: stopping when successive
    iterates differ by less than tol leaves those entries roughly
    sqrt(2 * tol) short of 1, and reaching that point takes about
    sqrt(2 / tol) iterations, so pick tol and max_iter together.
    """
    m = lumped_kernel_matrix(params) if kernel is None else np.asarray(kernel, dtype=float)
    a = fitness_vector(params)
    s = np.zeros(params.ell + 1)
    diff = np.inf
    for _ in range(max_iter):
        s_next = np.exp(a * (m @ s - 1.0))
        diff = float(np.max(np.abs(s_next - s)))
        s = s_next
        if diff < tol:
            return s
    raise ConvergenceError(
        f"extinction fixed point not reached in {max_iter} iterations "
        f"(last sup-change {diff:.3e})",
        residual=diff,
        iterations=max_iter,
    )
