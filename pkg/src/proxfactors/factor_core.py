"""K-factor PCA estimation with the ``Λ̂ᵀΛ̂/N = I`` normalization.

Loadings are ``sqrt(N)`` times the top-K eigenvectors of ``XXᵀ/(NT)`` and
factors are ``XᵀΛ̂/N``. When ``T < N`` the eigenproblem is solved on the
smaller ``XᵀX/(NT)`` and mapped back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, InputError, NumericalError
from .panel_io import as_matrix, read_matrix, write_matrix, write_table


def symmetric_eigen(A, top_k: int, method: str = "lapack", tol: float = 1e-8):
    """Top-``k`` eigenpairs of a symmetric matrix, values in descending order.

    ``method="lapack"`` calls ``numpy.linalg.eigh``; ``method="jacobi"`` runs a
    cyclic Jacobi sweep in pure numpy (slow, but dependency free). Either way
    the residuals ``||Av - λv||`` are checked against ``tol * ||A||_F``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if not 1 <= top_k <= n:
        raise InputError(f"top_k must lie in [1, {n}], got {top_k}")
    scale = np.linalg.norm(A)
    if np.abs(A - A.T).max(initial=0.0) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise InputError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    if method == "lapack":
        vals, vecs = np.linalg.eigh(A)
    elif method == "jacobi":
        vals, vecs = _jacobi_eigen(A)
    else:
        raise InputError(f"unknown eigensolver {method!r}")
    order = np.argsort(-vals, kind="stable")[:top_k]
    vals, vecs = vals[order], vecs[:, order]
    resid = np.linalg.norm(A @ vecs - vecs * vals, axis=0).max()
    if resid > tol * max(scale, 1.0):
        raise ConvergenceError(f"eigensolver residual {resid:.3e} exceeds {tol:.0e} * ||A||_F", residual=resid)
    return vals, vecs


def _jacobi_eigen(A, max_sweeps: int = 100):
    A = A.copy()
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= 1e-15 * max(norm, 1e-300):
            return np.diag(A).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps", residual=off)


@dataclass(frozen=True)
class FactorFit:
    factors: np.ndarray  # T x K
    loadings: np.ndarray  # N x K
    eigenvalues: np.ndarray  # K, descending

    @property
    def K(self) -> int:
        return self.loadings.shape[1]

    def save(self, directory, unit_ids=None, time_ids=None, prefix: str = "") -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        N, T = self.loadings.shape[0], self.factors.shape[0]
        unit_ids = unit_ids or [str(i) for i in range(N)]
        time_ids = time_ids or [str(t) for t in range(T)]
        paths = [directory / f"{prefix}factors.csv", directory / f"{prefix}loadings.csv",
                 directory / f"{prefix}eigenvalues.csv"]
        write_matrix(paths[0], self.factors, time_ids, index_name="time")
        write_matrix(paths[1], self.loadings, unit_ids, index_name="unit")
        write_table(paths[2], ["factor", "eigenvalue"], ((k + 1, v) for k, v in enumerate(self.eigenvalues)))
        return paths

    @classmethod
    def load(cls, directory, prefix: str = "") -> "FactorFit":
        directory = Path(directory)
        _, F = read_matrix(directory / f"{prefix}factors.csv")
        _, L = read_matrix(directory / f"{prefix}loadings.csv")
        _, ev = read_matrix(directory / f"{prefix}eigenvalues.csv")
        return cls(F, L, ev[:, 0])


def canonical_signs(loadings: np.ndarray) -> np.ndarray:
    """+1/-1 per column so that each column's largest-|entry| is positive."""
    idx = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[idx, np.arange(loadings.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def pca_fit(panel, K: int, method: str = "lapack") -> FactorFit:
    X = as_matrix(panel)
    N, T = X.shape
    if not 1 <= K <= min(N, T):
        raise InputError(f"K={K} must lie in [1, min(N, T)] = [1, {min(N, T)}]")
    k_extra = min(K + 1, min(N, T))
    if T < N:
        vals, V = symmetric_eigen(X.T @ X / (N * T), k_extra, method=method)
    else:
        vals, U = symmetric_eigen(X @ X.T / (N * T), k_extra, method=method)
    top = vals[:K]
    floor = max(N, T) * np.finfo(float).eps * max(abs(vals[0]), np.finfo(float).tiny)
    if np.any(top <= floor):
        raise NumericalError(f"non-positive eigenvalue among the top {K}: {top.min():.3e}")
    if k_extra > K and abs(vals[K - 1] - vals[K]) <= 1e-12 * max(abs(vals[0]), 1.0):
        warnings.warn(
            f"eigenvalues {K} and {K + 1} coincide; the factor space is not identified",
            RuntimeWarning, stacklevel=2,
        )
    if T < N:
        # XᵀX v = NT s v  =>  XXᵀ (Xv) = NT s (Xv), with ||Xv||² = NT s
        U = X @ V[:, :K] / np.sqrt(N * T * top)
    else:
        U = U[:, :K]
    loadings = np.sqrt(N) * U
    loadings = loadings * canonical_signs(loadings)
    factors = X.T @ loadings / N
    return FactorFit(factors, loadings, top)


def common_component(fit) -> np.ndarray:
    """``loadings @ factors.T`` for any fit exposing those two arrays."""
    L, F = np.asarray(fit.loadings), np.asarray(fit.factors)
    if L.ndim != 2 or F.ndim != 2 or L.shape[1] != F.shape[1]:
        raise InputError(f"loadings {L.shape} and factors {F.shape} do not conform")
    return L @ F.T
