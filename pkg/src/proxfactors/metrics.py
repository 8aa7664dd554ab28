"""Closeness and fit measures between factor sets, loading sets and panels."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .panel_io import as_matrix

GRAM_COND_MAX = 1e12


@dataclass(frozen=True)
class GenCorrResult:
    total: float
    individual: np.ndarray  # descending, each in [0, 1]


def _checked_inverse(G, what: str) -> np.ndarray:
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > GRAM_COND_MAX:
        raise NumericalError(f"{what} Gram matrix is singular (condition number {cond:.3e})")
    return np.linalg.inv(G)


def generalized_correlation(A, B) -> GenCorrResult:
    """Trace of ``(AᵀA)⁻¹AᵀB(BᵀB)⁻¹BᵀA`` and the square roots of its eigenvalues.

    Invariant to invertible column mixing of either argument; ranges over
    ``[0, min(K_A, K_B)]``. Columns are not demeaned.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise InputError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    GA = _checked_inverse(A.T @ A, "first")
    GB = _checked_inverse(B.T @ B, "second")
    AB = A.T @ B
    M = GA @ AB @ GB @ AB.T
    # M is similar to a symmetric PSD matrix; use that form for the spectrum
    LA = np.linalg.cholesky(A.T @ A)
    S = np.linalg.solve(LA, np.linalg.solve(LA, AB @ GB @ AB.T).T)
    eig = np.sort(np.linalg.eigvalsh(0.5 * (S + S.T)))[::-1]
    if eig.max(initial=0.0) > 1.0 + 1e-8:
        warnings.warn(f"generalized correlation eigenvalue {eig.max():.12f} exceeds 1; clipped",
                      RuntimeWarning, stacklevel=2)
    eig = np.clip(eig, 0.0, 1.0)
    total = float(np.trace(M))
    total = min(max(total, 0.0), float(min(A.shape[1], B.shape[1])))
    return GenCorrResult(total, np.sqrt(eig))


def loading_generalized_correlation(L1, L2) -> GenCorrResult:
    """Same measure on loading matrices (rows are cross-section units)."""
    return generalized_correlation(L1, L2)


def per_factor_r2(target_factors, regressors, intercept: bool = False) -> np.ndarray:
    """R² of each target column regressed on all regressor columns.

    Without an intercept the R² is uncentered (``1 - SSR / yᵀy``), which is the
    right notion for mean-zero factors from a demeaned panel.
    """
    Y = np.asarray(target_factors, dtype=float)
    Z = np.asarray(regressors, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Z.ndim == 1:
        Z = Z[:, None]
    if Y.shape[0] != Z.shape[0]:
        raise InputError(f"row counts differ: {Y.shape[0]} vs {Z.shape[0]}")
    if intercept:
        Z = np.column_stack([np.ones(Z.shape[0]), Z])
        Yc = Y - Y.mean(axis=0)
    else:
        Yc = Y
    _checked_inverse(Z.T @ Z, "regressor")
    coef, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    ssr = np.sum((Y - Z @ coef) ** 2, axis=0)
    sst = np.sum(Yc ** 2, axis=0)
    scale = np.maximum(np.sum(Y ** 2, axis=0), np.finfo(float).tiny)
    if np.any(sst <= 1e-14 * scale) or np.any(sst == 0):
        j = int(np.argmin(sst / scale))
        raise InputError(f"target column {j} has zero variation")
    return 1.0 - ssr / sst


def projection_fit(panel, factors) -> np.ndarray:
    """Regression of every unit's series on the factors: ``X F (FᵀF)⁻¹ Fᵀ``."""
    X = as_matrix(panel)
    F = np.asarray(factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != X.shape[1]:
        raise InputError(f"factors have {F.shape[0]} rows, panel has T={X.shape[1]}")
    G = _checked_inverse(F.T @ F, "factor")
    return (X @ F) @ G @ F.T


def variance_explained(panel, factors) -> float:
    X = as_matrix(panel)
    total = float(np.sum(X * X))
    if total == 0.0:
        raise InputError("panel is identically zero")
    resid = X - projection_fit(X, factors)
    return 1.0 - float(np.sum(resid * resid)) / total


def rmse_common_component(panel, predicted) -> float:
    X = as_matrix(panel)
    P = np.asarray(predicted, dtype=float)
    if P.shape != X.shape:
        raise InputError(f"predicted shape {P.shape} differs from panel shape {X.shape}")
    return float(np.sqrt(np.mean((X - P) ** 2)))


def r2_table_rows(results: dict) -> list[list]:
    """Rows ``[m, r2_1, ..., r2_K]`` from ``{m: per-factor R² array}``, sorted by m."""
    return [[m, *map(float, r2)] for m, r2 in sorted(results.items())]
