"""Monte Carlo experiments: exceedance probabilities against the bounds, and the
method comparison with sparse PCA.

Every replicate draws from its own Philox substreams keyed by
``(seed, replicate, purpose)``, so tables do not depend on execution order.
Different grid points reuse the same replicate streams (common random numbers).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import InputError, NumericalError
from .evt_bounds import BoundConfig, GevSpec, bound_at, h_of_m, toeplitz_corr
from .factor_core import pca_fit
from .metrics import generalized_correlation
from .panel_io import Panel
from .proximate import hard_threshold_weights, proximate_factors, proximate_loadings
from .rng import substream
from .spca_baseline import spca_factors, spca_lasso_loadings, spca_modified_loadings

ERROR_KINDS = ("iid", "heteroskedastic", "toeplitz", "hetero_toeplitz")


@dataclass(frozen=True)
class ErrorModel:
    kind: str = "iid"
    sigma_e: float = 1.0
    lo: float = 0.5
    hi: float = 1.5
    base: float = 0.5

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise InputError(f"unknown error model {self.kind!r}; expected one of {ERROR_KINDS}")
        if not self.sigma_e > 0:
            raise InputError("sigma_e must be positive")
        if not 0 < self.lo <= self.hi:
            raise InputError(f"need 0 < lo <= hi, got ({self.lo}, {self.hi})")
        if not -1 < self.base < 1:
            raise InputError(f"toeplitz base must lie in (-1, 1), got {self.base}")

    @property
    def correlated(self) -> bool:
        return self.kind in ("toeplitz", "hetero_toeplitz")


@lru_cache(maxsize=16)
def _toeplitz_chol(N: int, base: float) -> np.ndarray:
    try:
        return np.linalg.cholesky(toeplitz_corr(N, base))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"toeplitz error covariance (N={N}, base={base}) is not positive definite") from exc


@dataclass(frozen=True)
class SimConfig:
    N: int
    T: int
    K: int = 1
    sigma_f: tuple = (1.0,)
    error_model: ErrorModel = ErrorModel()
    loading_dist: str | Callable = "standard_normal"
    m: int = 4
    rho0: float = 0.95
    reps: int = 100
    seed: int = 0

    def __post_init__(self):
        sf = tuple(float(s) for s in np.broadcast_to(np.asarray(self.sigma_f, dtype=float), (self.K,)))
        object.__setattr__(self, "sigma_f", sf)
        if self.reps < 1:
            raise InputError("reps must be >= 1")
        if self.N < 1 or self.T < 2 or self.K < 1:
            raise InputError(f"invalid dimensions N={self.N}, T={self.T}, K={self.K}")
        if any(s <= 0 for s in sf):
            raise InputError("factor standard deviations must be positive")
        if not (callable(self.loading_dist) or self.loading_dist == "standard_normal"):
            raise InputError(f"unknown loading distribution {self.loading_dist!r}")


def draw_panel(cfg: SimConfig, replicate: int):
    """``(X, F, Λ)`` as plain arrays for one replicate."""
    N, T, K = cfg.N, cfg.T, cfg.K
    g_load = substream(cfg.seed, replicate, "loadings")
    if callable(cfg.loading_dist):
        L = np.asarray(cfg.loading_dist(g_load, (N, K)), dtype=float).reshape(N, K)
    else:
        L = g_load.standard_normal((N, K))
    F = substream(cfg.seed, replicate, "factors").standard_normal((T, K)) * np.asarray(cfg.sigma_f)
    em = cfg.error_model
    v = substream(cfg.seed, replicate, "errors").standard_normal((N, T))
    if em.correlated:
        v = _toeplitz_chol(N, em.base) @ v
    if em.kind in ("heteroskedastic", "hetero_toeplitz"):
        v = v * substream(cfg.seed, replicate, "hetero").uniform(em.lo, em.hi, N)[:, None]
    e = em.sigma_e * v
    return L @ F.T + e, F, L


def gen_factor_panel(cfg: SimConfig, replicate: int):
    """``(Panel, F, Λ)``; bit-identical for the same ``(seed, replicate)``."""
    X, F, L = draw_panel(cfg, replicate)
    return Panel.from_array(X), F, L


def replicate_rhos(cfg: SimConfig, replicate: int, ms) -> np.ndarray:
    """``ρ(F, F̃(m))`` for each m, all from one panel and one PCA fit."""
    X, F, _ = draw_panel(cfg, replicate)
    fit = pca_fit(X, cfg.K)
    out = np.empty(len(ms))
    for i, m in enumerate(ms):
        Ft = proximate_factors(X, hard_threshold_weights(fit.loadings, m))
        out[i] = generalized_correlation(F, Ft).total
    return out


def _safe_rhos(args):
    cfg, rep, ms = args
    try:
        return replicate_rhos(cfg, rep, ms)
    except (NumericalError, InputError):
        return None


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items, chunksize=16))
    return [fn(x) for x in items]


@dataclass(frozen=True)
class Exceedance:
    prob: float
    se: float
    n_ok: int
    n_fail: int


def _exceedance_from(rhos, rho0):
    n = len(rhos)
    if n == 0:
        return Exceedance(math.nan, math.nan, 0, 0)
    p = float(np.mean(np.asarray(rhos) > rho0))
    return Exceedance(p, math.sqrt(p * (1.0 - p) / n), n, 0)


def exceedance_grid(cfg: SimConfig, ms, rho0: float | None = None, workers: int = 1) -> dict:
    """``{m: Exceedance}`` with every m evaluated on the same replicate panels."""
    ms = list(ms)
    rho0 = cfg.rho0 if rho0 is None else rho0
    res = _map(_safe_rhos, [(cfg, r, ms) for r in range(cfg.reps)], workers)
    ok = np.array([r for r in res if r is not None]).reshape(-1, len(ms))
    fails = sum(r is None for r in res)
    out = {}
    for j, m in enumerate(ms):
        e = _exceedance_from(ok[:, j], rho0)
        out[m] = replace(e, n_fail=fails)
    return out


def monte_carlo_exceedance(cfg: SimConfig, workers: int = 1) -> Exceedance:
    """Fraction of replicates with ``ρ(F, F̃) > ρ₀`` (strict) and its binomial SE."""
    return exceedance_grid(cfg, [cfg.m], workers=workers)[cfg.m]


# --------------------------------------------------------------------------- figure experiments


@dataclass(frozen=True)
class FigureDesign:
    name: str
    K: int
    Ns: tuple
    Ts: tuple
    ms: tuple
    sigma_fs: tuple  # tuple of per-factor tuples
    rho0: float
    reps: int = 1000
    seed: int = 20240101
    error_model: ErrorModel = ErrorModel()


FIGURES = {
    "fig1": FigureDesign("fig1", 1, (100,), (50, 100, 200), tuple(range(1, 11)), ((0.8,), (1.0,), (1.2,)), 0.95),
    "fig2a": FigureDesign("fig2a", 1, (50, 100, 200, 400), (50, 100, 200), (4,), ((1.0,),), 0.95),
    "fig3": FigureDesign("fig3", 2, (100,), (50, 100, 200), tuple(range(2, 11)),
                         ((1.0, 0.8), (1.2, 1.0), (1.5, 1.2)), 1.9),
    "fig4": FigureDesign("fig4", 2, (50, 100, 200, 400), (50, 100, 200), (4,), ((1.2, 1.0),), 1.9),
}
FIGURES["fig2b"] = replace(FIGURES["fig4"], name="fig2b")

FIGURE_COLUMNS = ["figure", "sigma_f", "T", "N", "m", "rho0", "reps", "failures", "empirical", "se", "bound"]


def _parse_numbers(text, kind=float):
    return tuple(kind(x) for x in str(text).replace(" ", "").split(",") if x)


def apply_overrides(design: FigureDesign, overrides: dict | None) -> FigureDesign:
    """Override design fields from strings or values (lists comma-separated;
    sigma_f groups separated by ';')."""
    if not overrides:
        return design
    known = {f.name for f in fields(FigureDesign)} | {"N", "T", "m", "sigma_f", "error_model", "sigma_e",
                                                       "lo", "hi", "base"}
    upd = {}
    em = {}
    for key, val in overrides.items():
        if key not in known or key == "name":
            raise InputError(f"unknown override {key!r}")
        if key in ("N", "Ns"):
            upd["Ns"] = _as_tuple(val, int)
        elif key in ("T", "Ts"):
            upd["Ts"] = _as_tuple(val, int)
        elif key in ("m", "ms"):
            upd["ms"] = _as_tuple(val, int)
        elif key in ("sigma_f", "sigma_fs"):
            if isinstance(val, str):
                upd["sigma_fs"] = tuple(_parse_numbers(g) for g in val.split(";") if g.strip())
            else:
                upd["sigma_fs"] = tuple(tuple(np.atleast_1d(g).astype(float)) for g in val)
        elif key in ("reps", "seed", "K"):
            upd[key] = int(val)
        elif key == "rho0":
            upd[key] = float(val)
        elif key == "error_model":
            em["kind"] = str(val)
        else:
            em[key] = float(val)
    if em:
        upd["error_model"] = replace(design.error_model, **em)
    out = replace(design, **upd)
    for sf in out.sigma_fs:
        if len(sf) != out.K:
            raise InputError(f"sigma_f group {sf} does not have K={out.K} entries")
    return out


def _as_tuple(val, kind):
    if isinstance(val, str):
        return _parse_numbers(val, kind)
    return tuple(kind(v) for v in np.atleast_1d(val))


def design_h(error_model: ErrorModel, N: int, m: int) -> float:
    """h(m) implied by the error model (exact search when small, else greedy)."""
    if not error_model.correlated or m == 1:
        return 0.0
    C = toeplitz_corr(N, error_model.base)
    method = "exact" if math.comb(N, m) <= 10**6 else "greedy"
    return h_of_m(C, m, method=method)


def figure_bound(design: FigureDesign, N: int, m: int, sigma_f) -> float:
    cfg = BoundConfig(N=N, K=design.K, sigma_f=tuple(sigma_f), sigma_e=design.error_model.sigma_e,
                      specs=GevSpec.from_family("folded_normal"),
                      h=design_h(design.error_model, N, m))
    return bound_at(cfg, m, design.rho0).prob_lower_bound


def run_figure_experiment(which: str, overrides: dict | None = None, workers: int = 1) -> list[list]:
    """Rows of :data:`FIGURE_COLUMNS`, one per grid point."""
    if which not in FIGURES:
        raise InputError(f"unknown experiment {which!r}; expected one of {sorted(FIGURES)}")
    d = apply_overrides(FIGURES[which], overrides)
    rows = []
    for sf in d.sigma_fs:
        for T in d.Ts:
            for N in d.Ns:
                ms = [m for m in d.ms if m <= N]
                cfg = SimConfig(N=N, T=T, K=d.K, sigma_f=sf, error_model=d.error_model,
                                rho0=d.rho0, reps=d.reps, seed=d.seed)
                grid = exceedance_grid(cfg, ms, workers=workers)
                for m in ms:
                    e = grid[m]
                    rows.append([d.name, ";".join(f"{s:g}" for s in sf), T, N, m, d.rho0, d.reps, e.n_fail,
                                 e.prob, e.se, figure_bound(d, N, m, sf)])
    return rows


# --------------------------------------------------------------------------- method comparison


@dataclass(frozen=True)
class CompareConfig:
    N: int = 100
    T: int = 100
    K: int = 5
    sigma_f: tuple = (1.0,)
    error_model: ErrorModel = ErrorModel("hetero_toeplitz")
    kappas: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    reps: int = 200
    seed: int = 7
    train_fraction: float = 0.5

    def sim(self) -> SimConfig:
        return SimConfig(N=self.N, T=self.T, K=self.K, sigma_f=self.sigma_f, error_model=self.error_model,
                         reps=self.reps, seed=self.seed)


METHODS = ("PCA", "PPCA", "SPCA", "SPCA-mod")
COMPARE_COLUMNS = ["method", "kappa", "alpha", "m", "n", "factor_gc_in", "factor_gc_out",
                   "loading_gc_in", "loading_gc_out", "rmse_in", "rmse_out"]


def _rmse(X, L, F):
    return float(np.sqrt(np.mean((X - L @ F.T) ** 2)))


def _gc(A, B, K):
    return generalized_correlation(A, B).total / K


def _evaluate(Xtr, Xte, Ftr_true, Fte_true, L_true, K, weights, loadings_train, second_stage_test):
    """Metrics for one method given its training weights and loadings.

    Factors on either sample are the regression of the panel on the weights.
    Test loadings come from a second-stage regression unless the method keeps
    its training loadings.
    """
    Ftr = spca_factors(Xtr, weights)
    Fte = spca_factors(Xte, weights)
    Lte = proximate_loadings(Xte, Fte) if second_stage_test else loadings_train
    return [_gc(Ftr_true, Ftr, K), _gc(Fte_true, Fte, K), _gc(L_true, loadings_train, K),
            _gc(L_true, Lte, K), _rmse(Xtr, loadings_train, Ftr), _rmse(Xte, Lte, Fte)]


def compare_replicate(cc: CompareConfig, replicate: int):
    """``{(method, kappa): [alpha, m, six metrics]}`` for one panel."""
    X, F, L = draw_panel(cc.sim(), replicate)
    T_tr = int(math.floor(cc.train_fraction * cc.T))
    if T_tr < 2 or cc.T - T_tr < 2:
        raise InputError("train/test split leaves fewer than 2 periods on one side")
    Xtr, Xte, Ftr, Fte = X[:, :T_tr], X[:, T_tr:], F[:T_tr], F[T_tr:]
    K, N = cc.K, cc.N
    fit = pca_fit(Xtr, K)
    out = {}
    pca = _evaluate(Xtr, Xte, Ftr, Fte, L, K, fit.loadings, fit.loadings, True)
    s_min = float(fit.eigenvalues[-1])
    for kappa in cc.kappas:
        alpha = kappa * s_min * T_tr
        try:
            Lbar = spca_lasso_loadings(Xtr, fit.factors, alpha)
            nnz = int(np.count_nonzero(Lbar))
            m = int(min(N, max(1, round(nnz / K))))
            Fbar = spca_factors(Xtr, Lbar, alpha)
            W = hard_threshold_weights(fit.loadings, m).weights
            Lppca = proximate_loadings(Xtr, proximate_factors(Xtr, W))
            Lmod = spca_modified_loadings(Xtr, Fbar)
            res = {
                "PCA": pca,
                "PPCA": _evaluate(Xtr, Xte, Ftr, Fte, L, K, W, Lppca, True),
                "SPCA": _evaluate(Xtr, Xte, Ftr, Fte, L, K, Lbar, Lbar, False),
                "SPCA-mod": _evaluate(Xtr, Xte, Ftr, Fte, L, K, Lbar, Lmod, True),
            }
        except (NumericalError, InputError):
            continue
        for meth, vals in res.items():
            out[(meth, kappa)] = [alpha, m, *vals]
    return out


def _safe_compare(args):
    cc, rep = args
    try:
        return compare_replicate(cc, rep)
    except (NumericalError, InputError):
        return None


def run_comparison_experiment(cc: CompareConfig | None = None, workers: int = 1) -> list[list]:
    """Rows of :data:`COMPARE_COLUMNS`, averaged over replicates, per method and κ.

    The penalty is ``α = κ·ŝ_K·T_train`` so every column's soft threshold is at
    most κ/2 on the loading scale; PPCA uses ``m = round(nnz / K)``.
    """
    cc = cc or CompareConfig()
    res = _map(_safe_compare, [(cc, r) for r in range(cc.reps)], workers)
    rows = []
    for kappa in cc.kappas:
        for meth in METHODS:
            vals = [r[(meth, kappa)] for r in res if r is not None and (meth, kappa) in r]
            if not vals:
                rows.append([meth, kappa] + [math.nan] * 2 + [0] + [math.nan] * 6)
                continue
            mean = np.mean(np.array(vals), axis=0)
            rows.append([meth, kappa, float(mean[0]), float(mean[1]), len(vals), *map(float, mean[2:])])
    return rows


def loading_consistency(cc: CompareConfig, sizes, m: int | None = None, workers: int = 1) -> list[list]:
    """Mean ``ρ(Λ̃, Λ)/K`` over replicates for each ``(N, T)``; full-sample fits."""
    rows = []
    for N, T in sizes:
        cfg = replace(cc, N=N, T=T).sim()
        mm = cc.K if m is None else m
        vals = _map(_loading_rho, [(cfg, r, mm) for r in range(cfg.reps)], workers)
        ok = [v for v in vals if v is not None]
        rows.append([N, T, mm, len(ok), float(np.mean(ok)) if ok else math.nan])
    return rows


def _loading_rho(args):
    cfg, rep, m = args
    try:
        X, _, L = draw_panel(cfg, rep)
        fit = pca_fit(X, cfg.K)
        Ft = proximate_factors(X, hard_threshold_weights(fit.loadings, m))
        return generalized_correlation(L, proximate_loadings(X, Ft)).total / cfg.K
    except (NumericalError, InputError):
        return None


def delta_rho_replicate(cfg: SimConfig, replicate: int, kappas) -> list:
    """``[κ, nnz, ρ_PPCA, ρ_SPCA]`` per penalty on one one-factor panel (vs true F)."""
    X, F, _ = draw_panel(cfg, replicate)
    fit = pca_fit(X, cfg.K)
    T = X.shape[1]
    out = []
    for kappa in kappas:
        alpha = kappa * float(fit.eigenvalues[0]) * T
        Lbar = spca_lasso_loadings(X, fit.factors, alpha)
        nnz = np.count_nonzero(Lbar, axis=0)
        if np.any(nnz == 0):
            continue
        m = int(round(nnz.sum() / cfg.K))
        rho_s = generalized_correlation(F, spca_factors(X, Lbar, alpha)).total
        rho_p = generalized_correlation(F, proximate_factors(X, hard_threshold_weights(fit.loadings, m))).total
        out.append([kappa, int(nnz.sum()), rho_p, rho_s])
    return out


def compare_config_from(overrides: dict | None, base: CompareConfig | None = None) -> CompareConfig:
    """CompareConfig with string or value overrides applied."""
    cc = base or CompareConfig()
    if not overrides:
        return cc
    upd, em = {}, {}
    for key, val in overrides.items():
        if key in ("N", "T", "K", "reps", "seed"):
            upd[key] = int(val)
        elif key == "train_fraction":
            upd[key] = float(val)
        elif key in ("sigma_f", "kappas"):
            upd[key] = _as_tuple(val, float)
        elif key == "error_model":
            em["kind"] = str(val)
        elif key in ("sigma_e", "lo", "hi", "base"):
            em[key] = float(val)
        else:
            raise InputError(f"unknown override {key!r}")
    if em:
        upd["error_model"] = replace(cc.error_model, **em)
    return replace(cc, **upd)
