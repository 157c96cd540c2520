"""Batched ordinary least squares with t-statistics.

One operator per distinct month mask: funds sharing coverage share the Gram
factorization, which is what makes fitting thousands of funds per bootstrap
run cheap. Solve path is Cholesky on the normal equations with an SVD
fallback; rank deficiency is rejected up front via the reciprocal condition
number of X'X.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .panel import AlignedSample

__all__ = [
    "RegressionError",
    "SingularDesignError",
    "InsufficientObservationsError",
    "DegenerateFitError",
    "RegressionResult",
    "BatchSolution",
    "DesignOperator",
    "BatchDesignCache",
    "ols_fit",
    "batch_fit",
    "tstat_of_alpha",
]

# X'X reciprocal condition below this is treated as rank deficient.
RCOND_MIN = 1e-12
# SSR at or below this fraction of y'y flags a perfect (degenerate) fit.
_DEGENERATE_REL = 1e-24


class RegressionError(ValueError):
    """Base class for per-fit failures."""


class SingularDesignError(RegressionError):
    """X'X is singular within tolerance (collinear or constant factor columns)."""


class InsufficientObservationsError(RegressionError):
    """Fewer observations than coefficients plus one degree of freedom."""


class DegenerateFitError(RegressionError):
    """Residual variance is zero; t-statistics are undefined."""


@dataclass(frozen=True, eq=False)
class RegressionResult:
    """OLS fit of excess returns on [intercept, factors].

    se and tstats are aligned with [alpha, *betas]; degenerate fits carry
    NaN t-statistics rather than infinities.
    """

    alpha: float
    betas: np.ndarray
    se: np.ndarray
    tstats: np.ndarray
    sigma2: float
    residuals: np.ndarray
    n_obs: int
    dof: int
    degenerate: bool
    factor_names: tuple[str, ...]

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate(([self.alpha], self.betas))


@dataclass(frozen=True, eq=False)
class BatchSolution:
    """Column-per-fund arrays for one shared design solved against many y vectors."""

    coef: np.ndarray       # (p, m)
    se: np.ndarray         # (p, m)
    tstats: np.ndarray     # (p, m), NaN columns where degenerate
    sigma2: np.ndarray     # (m,)
    residuals: np.ndarray  # (n, m)
    degenerate: np.ndarray  # (m,) bool


class DesignOperator:
    """Precomputed solve operator for one design matrix (one month mask).

    Applying the operator to any y reproduces a fresh per-sample solve;
    construction raises for rank-deficient or too-short designs.
    """

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        n, p = X.shape
        if n < p + 1:
            raise InsufficientObservationsError(
                f"insufficient observations: n={n}, need at least {p + 1} for {p} coefficients"
            )
        gram = X.T @ X
        eig = np.linalg.eigvalsh(gram)
        rcond = eig[0] / eig[-1]
        if not rcond > RCOND_MIN:
            raise SingularDesignError(f"singular design (rcond={rcond:.3e})")
        self.X = X
        self.n_obs = n
        self.n_coef = p
        self.dof = n - p
        self._solve, self.inv_diag = self._factorize(X, gram)

    @staticmethod
    def _factorize(X: np.ndarray, gram: np.ndarray) -> tuple[Callable[[np.ndarray], np.ndarray], np.ndarray]:
        try:
            lower = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            # rank-revealing fallback for matrices that pass the rcond gate
            # but defeat Cholesky numerically
            _, sv, vt = np.linalg.svd(X, full_matrices=False)
            inv = (vt.T * (1.0 / sv**2)) @ vt
            return (lambda b: inv @ b), inv.diagonal().copy()
        lower_inv = solve_triangular(lower, np.eye(gram.shape[0]), lower=True)
        inv_diag = np.einsum("ij,ij->j", lower_inv, lower_inv)

        def solve(b: np.ndarray) -> np.ndarray:
            z = solve_triangular(lower, b, lower=True)
            return solve_triangular(lower.T, z, lower=False)

        return solve, inv_diag

    def solve_many(self, Y: np.ndarray) -> BatchSolution:
        """Fit every column of Y against this design in one pass."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[0] != self.n_obs:
            raise ValueError(f"Y must be ({self.n_obs}, m), got {Y.shape}")
        coef = self._solve(self.X.T @ Y)
        residuals = Y - self.X @ coef
        ssr = np.einsum("ij,ij->j", residuals, residuals)
        yy = np.einsum("ij,ij->j", Y, Y)
        degenerate = ssr <= yy * _DEGENERATE_REL
        sigma2 = ssr / self.dof
        se = np.sqrt(np.maximum(sigma2, 0.0)[None, :] * self.inv_diag[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            tstats = coef / se
        tstats[:, degenerate] = np.nan
        return BatchSolution(coef, se, tstats, sigma2, residuals, degenerate)

    def solve(self, y: np.ndarray, factor_names: tuple[str, ...] = ()) -> RegressionResult:
        """Fit a single response vector."""
        sol = self.solve_many(np.asarray(y, dtype=np.float64)[:, None])
        return RegressionResult(
            alpha=float(sol.coef[0, 0]),
            betas=sol.coef[1:, 0].copy(),
            se=sol.se[:, 0].copy(),
            tstats=sol.tstats[:, 0].copy(),
            sigma2=float(sol.sigma2[0]),
            residuals=sol.residuals[:, 0].copy(),
            n_obs=self.n_obs,
            dof=self.dof,
            degenerate=bool(sol.degenerate[0]),
            factor_names=factor_names,
        )


class BatchDesignCache:
    """Month-mask key -> DesignOperator, insert-once and thread-safe."""

    def __init__(self) -> None:
        self._ops: dict[bytes, DesignOperator] = {}
        self._lock = threading.Lock()

    def operator_for(self, key: bytes, build: Callable[[], DesignOperator]) -> DesignOperator:
        with self._lock:
            op = self._ops.get(key)
            if op is None:
                op = build()
                self._ops[key] = op
            return op

    def __len__(self) -> int:
        return len(self._ops)


def ols_fit(sample: AlignedSample) -> RegressionResult:
    """OLS fit of one aligned sample; minimizes the squared-error loss.

    sigma2 = SSR / (n - k - 1); se_j = sqrt(sigma2 * [(X'X)^-1]_jj);
    t_j = coef_j / se_j.
    """
    return DesignOperator(sample.X).solve(sample.y, sample.factor_names)


FitSlot = Union[RegressionResult, RegressionError]


def batch_fit(
    samples: Sequence[AlignedSample],
    *,
    cache: BatchDesignCache | None = None,
) -> list[FitSlot]:
    """Fit many samples sharing one panel and model.

    Funds with identical month coverage share one cache entry and are solved
    jointly. Per-sample failures are returned in their slot as the raised
    RegressionError; they never abort the batch.
    """
    if cache is None:
        cache = BatchDesignCache()
    if len({s.factor_names for s in samples}) > 1:
        raise ValueError("batch_fit requires samples aligned under one model")
    results: list[FitSlot] = [None] * len(samples)  # type: ignore[list-item]

    by_mask: dict[bytes, list[int]] = {}
    for i, sample in enumerate(samples):
        by_mask.setdefault(sample.panel_rows.tobytes(), []).append(i)

    for key, indices in by_mask.items():
        first = samples[indices[0]]
        try:
            op = cache.operator_for(key, lambda: DesignOperator(first.X))
        except RegressionError as err:
            for i in indices:
                results[i] = err
            continue
        Y = np.column_stack([samples[i].y for i in indices])
        sol = op.solve_many(Y)
        for j, i in enumerate(indices):
            results[i] = RegressionResult(
                alpha=float(sol.coef[0, j]),
                betas=sol.coef[1:, j].copy(),
                se=sol.se[:, j].copy(),
                tstats=sol.tstats[:, j].copy(),
                sigma2=float(sol.sigma2[j]),
                residuals=sol.residuals[:, j].copy(),
                n_obs=op.n_obs,
                dof=op.dof,
                degenerate=bool(sol.degenerate[j]),
                factor_names=samples[i].factor_names,
            )
    return results


def tstat_of_alpha(result: RegressionResult) -> float:
    """The intercept's t-statistic; undefined for degenerate fits."""
    if result.degenerate:
        raise DegenerateFitError("t(alpha) undefined: degenerate fit with zero residual variance")
    return float(result.tstats[0])
