"""Sparse-PCA baseline: l1-penalized loadings on fixed PCA factors.

Given PCA factors ``F̂`` the loadings minimize ``‖X - ΛF̂ᵀ‖²_F + α‖Λ‖₁`` row by
row. Writing ``D = F̂ᵀF̂`` and ``λ̂_i`` for the OLS loading of unit i, the row
objective is ``Σ_j D_jj λ_ij² - 2 D_jj λ̂_ij λ_ij + α|λ_ij|`` (plus a constant)
when D is diagonal. Each coordinate then decouples and the first-order
condition ``2 D_jj (λ_ij - λ̂_ij) + α sign(λ_ij) = 0`` gives soft thresholding
of ``λ̂_ij`` at ``α / (2 D_jj)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InputError, NumericalError
from .factor_core import FactorFit
from .metrics import GRAM_COND_MAX
from .panel_io import as_matrix
from .proximate import proximate_loadings

DIAG_TOL = 1e-8


@dataclass(frozen=True)
class SpcaFit:
    sparse_loadings: np.ndarray  # N x K
    factors: np.ndarray  # T x K
    alpha: float | np.ndarray
    nnz_per_column: np.ndarray

    def __post_init__(self):
        nnz = np.count_nonzero(self.sparse_loadings, axis=0)
        if not np.array_equal(nnz, np.asarray(self.nnz_per_column)):
            raise InputError("nonzero counts disagree with the sparse loadings")
        if not np.all(np.isfinite(self.factors)):
            raise NumericalError("sparse PCA factors are not finite")


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _alphas(alpha, K):
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (K,))
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise InputError(f"alpha must be finite and non-negative, got {alpha}")
    return a


def _is_diagonal(G):
    off = G - np.diag(np.diag(G))
    return np.abs(off).max(initial=0.0) <= DIAG_TOL * max(np.abs(np.diag(G)).max(), 1.0)


def spca_lasso_loadings(panel, pca_factors, alpha, max_sweeps: int = 10000) -> np.ndarray:
    """Penalized loadings ``Λ̄``; alpha may be a scalar or one value per factor."""
    X = as_matrix(panel)
    F = np.asarray(pca_factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != X.shape[1]:
        raise InputError(f"factors have {F.shape[0]} rows, panel has T={X.shape[1]}")
    K = F.shape[1]
    a = _alphas(alpha, K)
    G = F.T @ F
    if np.any(np.diag(G) <= 0):
        raise InputError("a factor column is identically zero")
    C = X @ F
    if _is_diagonal(G):
        d = np.diag(G)
        return soft_threshold(C / d, a / (2.0 * d))
    # general Gram: cyclic coordinate descent on all rows at once
    L = np.linalg.solve(G, C.T).T
    d = np.diag(G)

    def objective(L):
        return float(np.sum(X * X) - 2 * np.sum(L * C) + np.sum((L @ G) * L) + np.sum(np.abs(L) * a))

    prev = objective(L)
    for _ in range(max_sweeps):
        for j in range(K):
            z = C[:, j] - L @ G[:, j] + L[:, j] * d[j]
            L[:, j] = soft_threshold(z, a[j] / 2.0) / d[j]
        cur = objective(L)
        if prev - cur <= 1e-10 * max(abs(prev), 1.0):
            return L
        prev = cur
    raise ConvergenceError("coordinate descent did not stall within the sweep cap", residual=prev - cur)


def spca_factors(panel, sparse_loadings, alpha=None) -> np.ndarray:
    """``F̄ = XᵀΛ̄(Λ̄ᵀΛ̄)⁻¹`` (columns are not renormalized)."""
    X = as_matrix(panel)
    L = np.asarray(sparse_loadings, dtype=float)
    if L.ndim == 1:
        L = L[:, None]
    zero = np.flatnonzero(~np.any(L != 0, axis=0))
    if zero.size:
        raise InputError(f"sparse loading column {int(zero[0])} is all zero at alpha={alpha}")
    G = L.T @ L
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > GRAM_COND_MAX:
        raise NumericalError(f"sparse loadings are collinear (condition number {cond:.3e})")
    return np.linalg.solve(G, (X.T @ L).T).T


def spca_modified_loadings(panel, spca_factors_) -> np.ndarray:
    """Second-stage (non-sparse) loadings from regressing X on ``F̄``."""
    return proximate_loadings(panel, spca_factors_)


def spca_fit(panel, fit: FactorFit, alpha) -> SpcaFit:
    L = spca_lasso_loadings(panel, fit.factors, alpha)
    F = spca_factors(panel, L, alpha)
    return SpcaFit(L, F, alpha, np.count_nonzero(L, axis=0))


def breakpoints(panel, fit: FactorFit) -> np.ndarray:
    """``2 D_jj |λ̂_ij|``: entry (i, j) is nonzero exactly when alpha is below it."""
    X = as_matrix(panel)
    F = fit.factors
    G = F.T @ F
    if not _is_diagonal(G):
        raise InputError("breakpoints are closed form only for a diagonal factor Gram")
    return 2.0 * np.abs(X @ F)


def nonzero_count(panel, fit: FactorFit, alpha) -> np.ndarray:
    return np.count_nonzero(spca_lasso_loadings(panel, fit.factors, alpha), axis=0)


def _alpha_for_count(b, target):
    """Alpha inside the plateau where ``#{b > alpha}`` equals target."""
    s = np.sort(np.ravel(b))[::-1]
    n = s.size
    if target >= n:
        return 0.0
    hi, lo = s[target - 1], s[target]  # count(alpha) = target for lo <= alpha < hi
    if hi > lo:
        return lo + 0.5 * (hi - lo)
    # tie at the target: the count jumps over it, so settle for the plateau just below
    warnings.warn(f"nonzero count jumps over {target}; returning alpha for the nearest smaller count",
                  RuntimeWarning, stacklevel=3)
    upper = s[s > lo].min(initial=np.inf)
    return lo + 0.5 * (upper - lo) if np.isfinite(upper) else 2.0 * lo + 1.0


def match_alpha_to_m(panel, fit: FactorFit, m: int, per_column: bool = False):
    """Penalty whose total nonzero count equals ``m·K``.

    Within a count plateau the midpoint is returned. With ``per_column=True``
    an array of per-factor penalties giving m nonzeros in every column.
    """
    X = as_matrix(panel)
    N, K = X.shape[0], fit.K
    if not 1 <= m <= N:
        raise InputError(f"m must lie in [1, {N}], got {m}")
    G = fit.factors.T @ fit.factors
    if not _is_diagonal(G):
        return _bisect_alpha(X, fit, m, per_column)
    b = breakpoints(X, fit)
    if per_column:
        return np.array([_alpha_for_count(b[:, j], m) for j in range(K)])
    return float(_alpha_for_count(b, m * K))


def _bisect_alpha(X, fit, m, per_column, iters=200):
    def solve(count_fn, target, hi):
        lo = 0.0
        if count_fn(lo) < target:
            raise InputError(f"even alpha = 0 gives fewer than {target} nonzeros")
        while count_fn(hi) >= target:
            hi *= 2.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if count_fn(mid) >= target:
                lo = mid
            else:
                hi = mid
        if count_fn(lo) != target:
            warnings.warn(f"nonzero count jumps over {target}", RuntimeWarning, stacklevel=3)
        return lo

    scale = 2.0 * np.abs(X @ fit.factors).max() + 1.0
    if per_column:
        out = np.zeros(fit.K)
        for j in range(fit.K):
            def cnt(a, j=j):
                al = np.zeros(fit.K)
                al[j] = a
                return int(nonzero_count(X, fit, al)[j])
            out[j] = solve(cnt, m, scale)
        return out
    return solve(lambda a: int(nonzero_count(X, fit, a).sum()), m * fit.K, scale)
