"""Proximate factors: hard-thresholded PCA weights and the regressions built on them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BoundUnattainableError, InputError, NumericalError
from .evt_bounds import BoundConfig, bound_at, eligible_rows, overlap_cap
from .factor_core import FactorFit, pca_fit
from .metrics import GRAM_COND_MAX, generalized_correlation
from .panel_io import as_matrix, write_table



@dataclass(frozen=True)
class SparseWeights:
    """Column-sparse unit-norm weights ``W̃`` with mask and per-column count ``m``.

    ``exact=False`` marks weights whose support is not exactly m per column
    (the practical rotate-and-threshold variant mixes thresholded columns).
    """

    weights: np.ndarray
    mask: np.ndarray
    m: int
    exact: bool = True

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        M = np.asarray(self.mask, dtype=bool)
        if W.ndim != 2 or W.shape != M.shape:
            raise InputError(f"weights {W.shape} and mask {M.shape} must be equal-shape matrices")
        if np.any(W[~M] != 0):
            raise InputError("weights are nonzero outside the mask")
        if self.exact and np.any(M.sum(axis=0) != self.m):
            raise InputError(f"each column must have exactly m={self.m} selected rows, got {M.sum(axis=0).tolist()}")
        norms = np.linalg.norm(W, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InputError(f"weight columns must have unit norm, got {norms.tolist()}")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "mask", M)

    @property
    def K(self) -> int:
        return self.weights.shape[1]

    def save(self, path, unit_ids=None) -> None:
        """Long-format CSV of the nonzero entries: unit id, factor index, weight."""
        N = self.weights.shape[0]
        unit_ids = unit_ids or [str(i) for i in range(N)]
        rows = [(unit_ids[i], k + 1, self.weights[i, k])
                for k in range(self.K) for i in np.flatnonzero(self.mask[:, k])]
        write_table(path, ["unit", "factor", "weight"], rows)

    def composition(self, unit_ids, group_of_unit) -> dict:
        """``{group: [count in factor 1, ..., count in factor K]}``."""
        out: dict = {}
        for k in range(self.K):
            for i in np.flatnonzero(self.mask[:, k]):
                g = group_of_unit.get(unit_ids[i], "unassigned")
                out.setdefault(g, [0] * self.K)[k] += 1
        return dict(sorted(out.items()))

    def save_composition(self, path, unit_ids, group_of_unit) -> None:
        comp = self.composition(unit_ids, group_of_unit)
        write_table(path, ["group", *[f"factor{k + 1}" for k in range(self.K)]],
                    ([g, *counts] for g, counts in comp.items()))


def _normalize_columns(W):
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0):
        raise NumericalError(f"weight column {int(np.argmin(norms))} is identically zero")
    return W / norms


def _top_rows(col, m):
    # stable sort: among equal |entries| the lower row index comes first
    return np.argsort(-np.abs(col), kind="stable")[:m]


def hard_threshold_weights(loadings, m: int) -> SparseWeights:
    """Keep the m largest-|entry| rows of each loading column, then normalize.

    Ties at the m-th largest absolute value go to the lower row index.
    """
    L = np.asarray(loadings, dtype=float)
    if L.ndim == 1:
        L = L[:, None]
    N, K = L.shape
    if not 1 <= m <= N:
        raise InputError(f"m must lie in [1, N] = [1, {N}], got {m}")
    mask = np.zeros((N, K), dtype=bool)
    for k in range(K):
        nz = np.count_nonzero(L[:, k])
        if nz == 0:
            raise InputError(f"loading column {k} is entirely zero")
        if nz < m:
            raise InputError(f"loading column {k} has only {nz} nonzero entries, fewer than m={m}")
        mask[_top_rows(L[:, k], m), k] = True
    W = np.where(mask, L, 0.0)
    return SparseWeights(_normalize_columns(W), mask, m)


def _regress(Y, Z, what):
    """``Y Z (ZᵀZ)⁻¹`` with a condition check on ``ZᵀZ``."""
    G = Z.T @ Z
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > GRAM_COND_MAX:
        raise NumericalError(f"{what} (condition number {cond:.3e})")
    return np.linalg.solve(G, (Y @ Z).T).T


def proximate_factors(panel, weights) -> np.ndarray:
    """``F̃ = XᵀW̃(W̃ᵀW̃)⁻¹``."""
    X = as_matrix(panel)
    W = weights.weights if isinstance(weights, SparseWeights) else np.asarray(weights, dtype=float)
    if W.shape[0] != X.shape[0]:
        raise InputError(f"weights have {W.shape[0]} rows, panel has N={X.shape[0]}")
    return _regress(X.T, W, "sparse weights are collinear; try a larger m or the rotate-and-threshold variant")


def proximate_loadings(panel, prox_factors) -> np.ndarray:
    """``Λ̃ = X F̃ (F̃ᵀF̃)⁻¹``: regression of each unit's series on the factors."""
    X = as_matrix(panel)
    F = np.asarray(prox_factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != X.shape[1]:
        raise InputError(f"factors have {F.shape[0]} rows, panel has T={X.shape[1]}")
    return _regress(X, F, "factor Gram matrix is singular")


@dataclass(frozen=True)
class ProximateFit:
    weights: SparseWeights
    factors: np.ndarray  # T x K
    loadings: np.ndarray  # N x K

    @property
    def K(self) -> int:
        return self.factors.shape[1]


def proximate_fit(panel, fit: FactorFit, m: int, rotation: "RotationSpec | None" = None,
                  variant: str = "theory") -> ProximateFit:
    """Weights, factors and second-stage loadings in one call."""
    if rotation is None:
        W = hard_threshold_weights(fit.loadings, m)
    else:
        W = rotate_threshold_weights(fit, rotation, m, variant=variant)
    F = proximate_factors(panel, W)
    return ProximateFit(W, F, proximate_loadings(panel, F))


# --------------------------------------------------------------------------- rotation


def varimax_criterion(L) -> float:
    L2 = np.asarray(L, dtype=float) ** 2
    return float(np.sum(np.mean(L2**2, axis=0) - np.mean(L2, axis=0) ** 2))


def varimax_rotation(loadings, max_iter: int = 1000, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal ``P`` (K x K) locally maximizing the varimax criterion of ``Λ P``.

    Standard SVD ascent: at each step the rotation is the polar factor of the
    criterion's gradient. Stops when the criterion improves by less than tol
    and the rotation itself has settled (the criterion is flat at the optimum,
    so a small criterion change alone leaves the angle loose).
    """
    L = np.asarray(loadings, dtype=float)
    if L.ndim != 2 or L.shape[1] < 2:
        raise InputError("varimax needs at least two factors")
    N, K = L.shape
    P = np.eye(K)
    crit = varimax_criterion(L)
    best_P, best = P, crit
    for _ in range(max_iter):
        B = L @ P
        grad = L.T @ (B**3 - B * np.mean(B**2, axis=0))
        U, _, Vt = np.linalg.svd(grad)
        P, prev = U @ Vt, P
        new = varimax_criterion(L @ P)
        if new > best:
            best_P, best = P, new
        if abs(new - crit) < tol and np.abs(P - prev).max() < 1e-10:
            return best_P
        crit = new
    warnings.warn("varimax did not converge; returning the best iterate", RuntimeWarning, stacklevel=2)
    return best_P


@dataclass(frozen=True)
class RotationSpec:
    P: np.ndarray
    c: float
    variant: str = "supplied"  # none | varimax | supplied

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise InputError(f"rotation must be square, got {P.shape}")
        if np.abs(P.T @ P - np.eye(P.shape[0])).max() > 1e-10:
            raise InputError("rotation matrix is not orthonormal")
        cap = overlap_cap(P.shape[0])
        if not 0 < self.c < cap:
            raise InputError(f"c = {self.c} must lie in (0, {cap:.6g}) for K={P.shape[0]}")
        if self.variant not in ("none", "varimax", "supplied"):
            raise InputError(f"unknown rotation variant {self.variant!r}")
        object.__setattr__(self, "P", P)

    @classmethod
    def build(cls, fit: FactorFit, variant: str, c: float, P=None, signal_weighted: bool = True) -> "RotationSpec":
        K = fit.K
        if variant == "none":
            return cls(np.eye(K), c, "none")
        if variant == "varimax":
            V = fit.loadings * np.sqrt(fit.eigenvalues) if signal_weighted else fit.loadings
            return cls(varimax_rotation(V), c, "varimax")
        if P is None:
            raise InputError("a supplied rotation needs P")
        return cls(P, c, "supplied")


def rotate_threshold_weights(fit: FactorFit, spec: RotationSpec, m: int, variant: str = "theory",
                             signal_weighted: bool = True) -> SparseWeights:
    """Sparse weights after rotating the loadings.

    ``variant="theory"`` thresholds each column of ``Λ̂Ŝ^½P`` (or ``Λ̂P``) among
    rows where the column dominates every other by the ratio c. The
    ``"practical"`` variant thresholds ``Λ̂`` first and then mixes the sparse
    columns by ``Ŝ^½P``; its support is no longer exactly m per column.
    """
    L = np.asarray(fit.loadings, dtype=float)
    N, K = L.shape
    if spec.P.shape[0] != K:
        raise InputError(f"rotation is {spec.P.shape[0]}x{spec.P.shape[0]}, fit has K={K}")
    if not 1 <= m <= N:
        raise InputError(f"m must lie in [1, {N}], got {m}")
    scale = np.sqrt(fit.eigenvalues) if signal_weighted else np.ones(K)
    if variant == "practical":
        W = hard_threshold_weights(L, m).weights * scale @ spec.P
        W[np.abs(W) < 1e-300] = 0.0
        return SparseWeights(_normalize_columns(W), W != 0, m, exact=False)
    if variant != "theory":
        raise InputError(f"unknown variant {variant!r}")
    V = (L * scale) @ spec.P
    E = eligible_rows(V, spec.c)
    short = {j: int(E[:, j].sum()) for j in range(K) if E[:, j].sum() < m}
    if short:
        detail = ", ".join(f"column {j}: {n} eligible" for j, n in short.items())
        raise InputError(f"fewer than m={m} eligible rows ({detail})")
    mask = np.zeros((N, K), dtype=bool)
    for j in range(K):
        rows = np.flatnonzero(E[:, j])
        mask[rows[_top_rows(V[rows, j], m)], j] = True
    return SparseWeights(_normalize_columns(np.where(mask, V, 0.0)), mask, m)


# --------------------------------------------------------------------------- choosing m


def correlation_profile(panel, fit: FactorFit, ms) -> dict:
    """``{m: ρ(F̂, F̃(m)) / K}``; NaN where the weights are singular."""
    out = {}
    for m in ms:
        try:
            F = proximate_factors(panel, hard_threshold_weights(fit.loadings, m))
            out[m] = generalized_correlation(fit.factors, F).total / fit.K
        except NumericalError:
            out[m] = math.nan
    return out


def choose_m_data_driven(train, K: int, target_rho_avg: float, method: str = "scan",
                         fit: FactorFit | None = None, tol: float = 1e-10) -> int:
    """Smallest m whose proximate factors reach ``ρ/K >= target`` on the training panel.

    ``method="scan"`` checks every m in order. ``"bisect"`` assumes the profile
    is monotone in m, which finite samples need not respect.
    """
    if not 0 <= target_rho_avg <= 1:
        raise InputError(f"target must lie in [0, 1], got {target_rho_avg}")
    X = as_matrix(train)
    N = X.shape[0]
    fit = fit or pca_fit(X, K)
    if target_rho_avg == 0:
        return 1

    def ok(m):
        val = correlation_profile(X, fit, [m])[m]
        return not math.isnan(val) and val >= target_rho_avg - tol

    if not ok(N):
        raise NumericalError(f"target {target_rho_avg} not reached even at m = N = {N}")
    if method == "scan":
        return next(m for m in range(1, N + 1) if ok(m))
    if method != "bisect":
        raise InputError(f"unknown search method {method!r}")
    lo, hi = 0, N  # ok(hi) holds; ok(lo) treated as false
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def choose_m_theory(bound_cfg: BoundConfig, target_prob: float, target_rho: float) -> int:
    """Smallest m whose bound certifies ``P(ρ/K > target_rho) >= target_prob``."""
    if not 0 <= target_prob <= 1:
        raise InputError(f"target probability must lie in [0, 1], got {target_prob}")
    if target_prob == 0:
        return 1
    rho0 = bound_cfg.K * target_rho
    best = (0, -1.0)
    for m in range(1, bound_cfg.N + 1):
        p = bound_at(bound_cfg, m, rho0).prob_lower_bound
        if p >= target_prob:
            return m
        if p > best[1]:
            best = (m, p)
    raise BoundUnattainableError(
        f"no m <= N={bound_cfg.N} reaches probability {target_prob}; best bound {best[1]:.6g} at m={best[0]}",
        best=best,
    )
