"""Extreme-value lower bounds for the generalized correlation of proximate factors.

The central objects are the quantile sequence ``u_N(τ)`` of the largest
absolute loading (from a GEV tail description and norming constants), the
limit law ``G_m(τ)`` of the m-th largest absolute loading, and the thresholds
``ρ₀(τ)`` that turn a statement about order statistics into a statement about
the generalized correlation. Also here: the counting (binomial) bound for
i.i.d. loadings, the cross-signal matrix correction, the rotate-and-threshold
bound, the blocks estimator of the extremal index, and the error-dependence
statistic ``h(m)``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import norm

from .errors import BoundUnattainableError, InputError, NumericalError
from .rng import substream

log = logging.getLogger(__name__)

FAMILIES = ("gumbel", "frechet", "weibull", "folded_normal", "normal", "exponential", "uniform", "custom")
XI_SERIES = 1e-6
EXACT_SUBSET_LIMIT = 10**6


# --------------------------------------------------------------------------- GEV tail spec


def norming_constants(family: str, N: int) -> tuple[float, float]:
    """``(a_N, b_N)`` so that ``(max - b_N) / a_N`` has a non-degenerate limit.

    The exponential family uses ``b_N = log N`` (standard EVT).
    """
    if N < 2:
        raise InputError(f"norming constants need N >= 2, got {N}")
    if family == "uniform" or family == "weibull":
        return 1.0 / N, 1.0
    if family == "normal":
        b = float(norm.ppf(1.0 - 1.0 / N))
        return 1.0 / (N * float(norm.pdf(b))), b
    if family == "folded_normal":
        b = float(norm.ppf(1.0 - 1.0 / (2 * N)))
        return 1.0 / (2 * N * float(norm.pdf(b))), b
    if family == "frechet":
        return float(N), 0.0
    if family == "exponential" or family == "gumbel":
        return 1.0, math.log(N)
    raise InputError(f"unknown loading family {family!r}; expected one of {FAMILIES[:-1]}")


# standardized GEV parameters of each family's maximum under the norming above
_FAMILY_GEV = {
    "normal": (0.0, 1.0, 0.0),
    "folded_normal": (0.0, 1.0, 0.0),
    "exponential": (0.0, 1.0, 0.0),
    "gumbel": (0.0, 1.0, 0.0),
    "frechet": (1.0, 1.0, 1.0),
    "uniform": (-1.0, 1.0, -1.0),
    "weibull": (-1.0, 1.0, -1.0),
}


@dataclass(frozen=True)
class GevSpec:
    """GEV tail description of the largest absolute loading.

    ``norming`` maps N to ``(a_N, b_N)``; when omitted it is derived from
    ``family_hint``.
    """

    mu: float = 0.0
    sigma: float = 1.0
    xi: float = 0.0
    theta: float = 1.0
    family_hint: str = "custom"
    norming: Callable[[int], tuple[float, float]] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InputError(f"GEV scale must be positive, got {self.sigma}")
        if not 0 < self.theta <= 1:
            raise InputError(f"extremal index must lie in (0, 1], got {self.theta}")
        if self.family_hint not in FAMILIES:
            raise InputError(f"unknown family hint {self.family_hint!r}")
        if self.norming is None and self.family_hint == "custom":
            raise InputError("a custom GevSpec needs a norming function")

    @classmethod
    def from_family(cls, family: str, theta: float = 1.0) -> "GevSpec":
        if family not in _FAMILY_GEV:
            raise InputError(f"unknown loading family {family!r}")
        mu, sigma, xi = _FAMILY_GEV[family]
        return cls(mu, sigma, xi, theta, family)

    def constants(self, N: int) -> tuple[float, float]:
        a, b = self.norming(N) if self.norming is not None else norming_constants(self.family_hint, N)
        if not a > 0:
            raise InputError(f"norming scale a_N must be positive, got {a}")
        return float(a), float(b)


def _box_cox(tau, xi):
    """``(τ^(-ξ) - 1) / ξ`` with its ``-log τ`` limit at ξ = 0."""
    lt = np.log(tau)
    if abs(xi) < XI_SERIES:
        return -lt + 0.5 * xi * lt**2 - xi**2 * lt**3 / 6.0
    return np.expm1(-xi * lt) / xi


def gev_starred(spec: GevSpec) -> tuple[float, float]:
    """Location/scale of ``G^θ``, the maximum law of a dependent sequence.

    ``σ* = σθ^ξ`` and ``μ* = μ - (σ/ξ)(1 - θ^ξ)``, tending to ``μ + σ log θ``
    as ξ → 0.
    """
    if not spec.theta > 0:
        raise InputError(f"extremal index must be positive, got {spec.theta}")
    lt = math.log(spec.theta)
    xi = spec.xi
    if abs(xi) < XI_SERIES:
        shift = lt + 0.5 * xi * lt**2 + xi**2 * lt**3 / 6.0
    else:
        shift = math.expm1(xi * lt) / xi
    return spec.mu + spec.sigma * shift, spec.sigma * math.exp(xi * lt)


def gev_cdf(z, mu: float, sigma: float, xi: float):
    z = np.asarray(z, dtype=float)
    s = (z - mu) / sigma
    if abs(xi) < XI_SERIES:
        t = np.exp(-s)
    else:
        base = 1.0 + xi * s
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(base > 0, np.power(np.maximum(base, 1e-300), -1.0 / xi), np.inf if xi > 0 else 0.0)
    return np.exp(-t)


def u_quantile(spec: GevSpec, N: int, tau):
    """``u_N(τ) = a_N(μ* + σ*(τ^(-ξ) - 1)/ξ) + b_N``; strictly decreasing in τ."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise InputError("tau must be positive")
    a, b = spec.constants(N)
    mu_s, sig_s = gev_starred(spec)
    out = a * (mu_s + sig_s * _box_cox(tau, spec.xi)) + b
    return float(out) if out.ndim == 0 else out


def tau_of_u(spec: GevSpec, N: int, u: float) -> float:
    """Inverse of :func:`u_quantile`; ``inf`` below the support, 0 above it."""
    a, b = spec.constants(N)
    mu_s, sig_s = gev_starred(spec)
    y = ((u - b) / a - mu_s) / sig_s  # (τ^-ξ - 1)/ξ
    if abs(spec.xi) < XI_SERIES:
        return math.exp(-y)
    base = 1.0 + spec.xi * y
    if base <= 0:
        return math.inf if spec.xi > 0 else 0.0
    return math.exp(-math.log(base) / spec.xi)


# --------------------------------------------------------------------------- order statistic laws


def g1m_independent(tau, m: int):
    """``e^(-τ) Σ_{l<m} τ^l / l!`` (Poisson count of exceedances below m)."""
    if m < 1:
        raise InputError(f"m must be >= 1, got {m}")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    l = np.arange(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = np.log(tau)[..., None]
        terms = np.where(l == 0, 0.0, l * logt - gammaln(l + 1))
    out = np.exp(logsumexp(terms, axis=-1) - tau)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ClusterSizeDist:
    """Limiting cluster-size probabilities ``π(1), ..., π(m-1)``."""

    pi: tuple

    def __post_init__(self):
        pi = tuple(float(p) for p in self.pi)
        object.__setattr__(self, "pi", pi)
        if any(p < 0 for p in pi):
            raise InputError("cluster-size probabilities must be non-negative")
        if sum(pi) > 1 + 1e-12:
            raise InputError(f"cluster-size probabilities sum to {sum(pi)} > 1")

    def convolution_powers(self, size: int) -> np.ndarray:
        """``C[l, i] = π^{*l}(i)`` for ``0 <= l, i <= size`` (``C[0, 0] = 1``)."""
        pi = np.zeros(size + 1)
        n = min(size, len(self.pi))
        pi[1 : n + 1] = self.pi[:n]
        C = np.zeros((size + 1, size + 1))
        C[0, 0] = 1.0
        for l in range(1, size + 1):
            for i in range(l, size + 1):
                # last cluster has size j >= 1, remaining l-1 clusters sum to i-j >= l-1
                j = np.arange(1, i - l + 2)
                C[l, i] = np.dot(pi[j], C[l - 1, i - j])
        return C


def g1m_dependent(tau, m: int, cluster: ClusterSizeDist):
    """``e^(-τ)[1 + Σ_{l=1}^{m-1} τ^l/l! Σ_{i=l}^{m-1} π^{*l}(i)]``."""
    if m < 1:
        raise InputError(f"m must be >= 1, got {m}")
    if len(cluster.pi) < m - 1:
        raise InputError(f"cluster distribution has {len(cluster.pi)} entries, need m-1 = {m - 1}")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    if m == 1:
        out = np.exp(-tau)
        return float(out) if out.ndim == 0 else out
    C = cluster.convolution_powers(m - 1)
    weights = np.array([C[l, l:m].sum() for l in range(1, m)])
    l = np.arange(1, m)
    with np.errstate(divide="ignore"):
        logt = np.log(tau)[..., None]
    poly = np.sum(weights * np.exp(l * logt - gammaln(l + 1) - tau[..., None]), axis=-1)
    out = np.clip(np.exp(-tau) + poly, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def g_m(tau, m: int, cluster: ClusterSizeDist | None = None):
    return g1m_independent(tau, m) if cluster is None else g1m_dependent(tau, m, cluster)


# --------------------------------------------------------------------------- counting bound


def folded_normal_cdf(y):
    """CDF of |Z| for standard normal Z: ``2Φ(y) - 1``."""
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    out = 2.0 * norm.cdf(y) - 1.0
    return float(out) if out.ndim == 0 else out


def y_threshold(rho0: float, m: int, sigma_f: float, sigma_e: float, h_m: float) -> float:
    """Loading level whose m-fold exceedance guarantees squared correlation > ρ₀."""
    if not 0 < rho0 < 1:
        raise InputError(f"rho0 must lie in (0, 1), got {rho0}")
    return math.sqrt((1.0 + h_m) / m * sigma_e**2 / sigma_f**2 * rho0 / (1.0 - rho0))


def binomial_upper_tail(N: int, m: int, p: float) -> float:
    """``P(Binomial(N, p) >= m)`` evaluated in log space."""
    if m <= 0:
        return 1.0
    if m > N or p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    j = np.arange(m, N + 1)
    logterms = gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1) + j * math.log(p) + (N - j) * math.log1p(-p)
    lower = np.arange(0, m)
    loglower = (gammaln(N + 1) - gammaln(lower + 1) - gammaln(N - lower + 1)
                + lower * math.log(p) + (N - lower) * math.log1p(-p))
    # sum whichever side is smaller to keep relative accuracy
    upper = float(np.exp(logsumexp(logterms)))
    if upper > 0.5:
        return float(min(1.0, max(0.0, 1.0 - np.exp(logsumexp(loglower)))))
    return min(1.0, upper)


def prop1_lower_bound(rho0: float, m: int, N: int, sigma_f: float, sigma_e: float, h_m: float,
                      cdf_abs_loading: Callable = folded_normal_cdf) -> float:
    """``1 - Σ_{j<m} C(N,j)(1-F(y_m))^j F(y_m)^(N-j)`` for i.i.d. loadings."""
    if not 1 <= m <= N:
        raise InputError(f"need 1 <= m <= N, got m={m}, N={N}")
    y = y_threshold(rho0, m, sigma_f, sigma_e, h_m)
    x = float(cdf_abs_loading(y))
    if not (0.0 <= x <= 1.0) or math.isnan(x):
        raise InputError(f"cdf value F(y_m) = {x} lies outside [0, 1]")
    return binomial_upper_tail(N, m, 1.0 - x)


# --------------------------------------------------------------------------- EVT thresholds


def one_factor_rho0(u, m: int, sigma_f: float, sigma_e: float, h_m: float):
    """``mσ_f²u² / ((1+h)σ_e² + mσ_f²u²)``."""
    q = m * sigma_f**2 * np.square(u)
    return q / ((1.0 + h_m) * sigma_e**2 + q)


def multi_factor_rho0(us, m: int, signals, sigma_e: float, h_m: float, gamma_underbar: float = 1.0) -> float:
    """``K - (1+h)σ_e²/(mγ²) Σ_j 1/(s_j u_j²)``."""
    us = np.asarray(us, dtype=float)
    signals = np.asarray(signals, dtype=float)
    K = us.size
    with np.errstate(divide="ignore"):
        total = np.sum(1.0 / (signals * us**2))
    return float(K - (1.0 + h_m) * sigma_e**2 / (m * gamma_underbar**2) * total)


def _as_specs(specs, K):
    if isinstance(specs, GevSpec):
        return [specs] * K
    specs = list(specs)
    if len(specs) != K:
        raise InputError(f"need {K} GEV specs, got {len(specs)}")
    return specs


def _rho0_of_tau(tau, m, N, specs, sigma_e, h_m, signals, gamma_underbar, form):
    us = np.array([u_quantile(s, N, tau) for s in specs])
    if np.any(us <= 0):
        return -math.inf if form == "multi" else 0.0
    if form == "one":
        return float(one_factor_rho0(us[0], m, math.sqrt(signals[0]), sigma_e, h_m))
    return multi_factor_rho0(us, m, signals, sigma_e, h_m, gamma_underbar)


def _log_tau_bounds(specs, N):
    lo = -460.0
    hi = 690.0
    for s in specs:
        if s.xi > XI_SERIES:
            lo = max(lo, -600.0 / s.xi)
        t0 = tau_of_u(s, N, 0.0)
        if 0 < t0 < math.inf:
            hi = min(hi, math.log(t0))
    return lo, hi


def solve_tau_for_rho0(rho0_target: float, m: int, N: int, K: int, specs, sigma_e: float, h_m: float,
                       signals, gamma_underbar: float = 1.0, form: str | None = None) -> float:
    """Bisection (in log τ) for the τ whose threshold ρ₀(τ) equals the target.

    ``signals`` are the factor signal levels ``s_j`` (``σ_f²`` for independent
    standard-normal loadings). ``form`` picks the one-factor exact threshold or
    the multi-factor trace threshold; default is by K.
    """
    signals = np.broadcast_to(np.asarray(signals, dtype=float), (K,))
    specs = _as_specs(specs, K)
    form = form or ("one" if K == 1 else "multi")
    f = lambda lt: _rho0_of_tau(math.exp(lt), m, N, specs, sigma_e, h_m, signals, gamma_underbar, form)
    lo, hi = _log_tau_bounds(specs, N)
    f_lo, f_hi = f(lo), f(hi)
    if not f_hi <= rho0_target <= f_lo:
        raise BoundUnattainableError(
            f"rho0 = {rho0_target} is outside the attainable range [{f_hi:.6g}, {f_lo:.6g}] for m={m}, N={N}",
            best=(f_hi, f_lo),
        )
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if f(mid) >= rho0_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(lo)):
            break
    tau = math.exp(lo)
    if abs(f(lo) - rho0_target) > 1e-10:
        raise NumericalError(f"bisection stalled at |rho0(tau) - target| = {abs(f(lo) - rho0_target):.3e}")
    return tau


@dataclass(frozen=True)
class BoundResult:
    rho0: float
    prob_lower_bound: float
    params: dict


def one_factor_bound_curve(m: int, N: int, spec: GevSpec, sigma_f: float, sigma_e: float, h_m: float,
                           taus: Sequence[float], cluster: ClusterSizeDist | None = None) -> list[BoundResult]:
    """Points ``(ρ₀(τ), 1 - G_m(τ))`` of the one-factor EVT bound."""
    out = []
    for tau in np.asarray(taus, dtype=float):
        if tau <= 0:
            raise InputError("tau grid must be positive")
        u = u_quantile(spec, N, tau)
        rho0 = float(one_factor_rho0(u, m, sigma_f, sigma_e, h_m)) if u > 0 else 0.0
        prob = 1.0 - g_m(tau, m, cluster)
        out.append(BoundResult(rho0, float(prob), dict(m=m, N=N, K=1, tau=float(tau), u=float(u), h_m=h_m,
                                                       sigma_f=sigma_f, sigma_e=sigma_e)))
    return out


def multi_factor_bound(m: int, N: int, K: int, specs, signals, sigma_e: float, h_m: float,
                       gamma_underbar: float = 1.0, correction_prob: float = 0.0, tau: float | None = None,
                       rho0: float | None = None, clusters=None) -> BoundResult:
    """``Π_j(1 - G_{j,m}(τ)) - P(σ_min(B) < γ)`` at a given τ or a given ρ₀."""
    if not 0 < gamma_underbar <= 1:
        raise InputError(f"gamma_underbar must lie in (0, 1], got {gamma_underbar}")
    if not 0 <= correction_prob <= 1:
        raise InputError(f"correction probability must lie in [0, 1], got {correction_prob}")
    signals = np.broadcast_to(np.asarray(signals, dtype=float), (K,))
    if np.any(signals <= 0):
        raise InputError("signal levels must be positive")
    specs = _as_specs(specs, K)
    if (tau is None) == (rho0 is None):
        raise InputError("give exactly one of tau or rho0")
    if tau is None:
        tau = solve_tau_for_rho0(rho0, m, N, K, specs, sigma_e, h_m, signals, gamma_underbar, form="multi")
    us = np.array([u_quantile(s, N, tau) for s in specs])
    rho = multi_factor_rho0(us, m, signals, sigma_e, h_m, gamma_underbar) if np.all(us > 0) else -math.inf
    clusters = clusters if clusters is not None else [None] * K
    prob = float(np.prod([1.0 - g_m(tau, m, c) for c in clusters]))
    prob = max(0.0, prob - correction_prob)
    return BoundResult(rho, prob, dict(m=m, N=N, K=K, tau=float(tau), u=us.tolist(), h_m=h_m,
                                       signals=signals.tolist(), sigma_e=sigma_e,
                                       gamma_underbar=gamma_underbar, correction_prob=correction_prob))


# --------------------------------------------------------------------------- bound configuration


@dataclass(frozen=True)
class BoundConfig:
    """Everything needed to evaluate a bound at a given (m, ρ₀).

    ``h`` is a constant or a callable ``m -> h(m)``. ``method="evt"`` uses the
    extreme-value bound, ``"prop1"`` the binomial counting bound (one factor).
    """

    N: int
    K: int = 1
    sigma_f: tuple = (1.0,)
    sigma_e: float = 1.0
    specs: tuple | GevSpec = GevSpec.from_family("folded_normal")
    h: float | Callable[[int], float] = 0.0
    gamma_underbar: float = 1.0
    correction_prob: float = 0.0
    method: str = "evt"
    cdf_abs_loading: Callable = folded_normal_cdf
    cluster: ClusterSizeDist | None = None

    def h_at(self, m: int) -> float:
        return float(self.h(m)) if callable(self.h) else float(self.h)

    @property
    def signals(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma_f, dtype=float) ** 2, (self.K,)).copy()


def bound_at(cfg: BoundConfig, m: int, rho0: float) -> BoundResult:
    """Probability lower bound for ``ρ > ρ₀`` at sparsity m (0 when ρ₀ is out of reach)."""
    h = cfg.h_at(m)
    if cfg.method == "prop1":
        if cfg.K != 1:
            raise InputError("the counting bound is stated for one factor")
        p = prop1_lower_bound(rho0, m, cfg.N, float(cfg.signals[0]) ** 0.5, cfg.sigma_e, h, cfg.cdf_abs_loading)
        return BoundResult(rho0, p, dict(m=m, N=cfg.N, K=1, h_m=h, method="prop1"))
    if cfg.method != "evt":
        raise InputError(f"unknown bound method {cfg.method!r}")
    specs = _as_specs(cfg.specs, cfg.K)
    try:
        tau = solve_tau_for_rho0(rho0, m, cfg.N, cfg.K, specs, cfg.sigma_e, h, cfg.signals, cfg.gamma_underbar)
    except BoundUnattainableError as exc:
        lo, hi = exc.best
        if rho0 > hi:
            return BoundResult(rho0, 0.0, dict(m=m, N=cfg.N, K=cfg.K, h_m=h, tau=0.0, method="evt"))
        return BoundResult(rho0, max(0.0, 1.0 - cfg.correction_prob),
                           dict(m=m, N=cfg.N, K=cfg.K, h_m=h, tau=math.inf, method="evt"))
    if cfg.K == 1:
        prob = 1.0 - g_m(tau, m, cfg.cluster)
        prob = max(0.0, prob - cfg.correction_prob)
        return BoundResult(rho0, float(prob), dict(m=m, N=cfg.N, K=1, h_m=h, tau=tau, method="evt"))
    res = multi_factor_bound(m, cfg.N, cfg.K, specs, cfg.signals, cfg.sigma_e, h, cfg.gamma_underbar,
                             cfg.correction_prob, tau=tau,
                             clusters=[cfg.cluster] * cfg.K if cfg.cluster is not None else None)
    return BoundResult(rho0, res.prob_lower_bound, {**res.params, "method": "evt"})


# --------------------------------------------------------------------------- overlap corrections


def b_matrix(V, signals, m: int) -> np.ndarray:
    """Normalized cross-signal matrix ``B`` over each column's top-m rows.

    ``β_ll = 1``, ``β_kl = s_k^½ Σ_i v_{i,k} v_{i,l} / (s_l^½ Σ_i v_{i,l}²)`` with
    the sums over the m rows of largest ``|v_{·,l}|``.
    """
    V = np.asarray(V, dtype=float)
    N, K = V.shape
    s = np.sqrt(np.broadcast_to(np.asarray(signals, dtype=float), (K,)))
    B = np.eye(K)
    for l in range(K):
        rows = np.argsort(-np.abs(V[:, l]), kind="stable")[:m]
        denom = np.sum(V[rows, l] ** 2)
        if denom <= 0:
            raise NumericalError(f"column {l} has no signal among its top {m} rows")
        for k in range(K):
            if k != l:
                B[k, l] = s[k] * np.dot(V[rows, k], V[rows, l]) / (s[l] * denom)
    return B


def sigma_min_B_bootstrap(fit, m: int, gamma_underbar: float, reps: int = 500, seed: int = 0,
                          max_redraws: int = 100) -> float:
    """Bootstrap estimate of ``P(σ_min(B) < γ)`` by resampling rows of the loadings."""
    if reps < 1:
        raise InputError("reps must be >= 1")
    L = np.asarray(fit.loadings, dtype=float)
    s = np.asarray(fit.eigenvalues, dtype=float)
    N, K = L.shape
    if K == 1:
        return 0.0
    hits = 0
    for r in range(reps):
        rng = substream(seed, r, "bootstrap")
        for _ in range(max_redraws + 1):
            idx = rng.integers(0, N, size=N)
            try:
                B = b_matrix(L[idx], s, m)
            except NumericalError:
                continue
            break
        else:
            raise NumericalError(f"replicate {r}: {max_redraws} degenerate resamples in a row")
        if np.linalg.svd(B, compute_uv=False).min() < gamma_underbar:
            hits += 1
    return hits / reps


def overlap_cap(K: int) -> float:
    """Upper limit on the dominance ratio c (where γ(c, K) reaches 1)."""
    if K < 1:
        raise InputError(f"K must be >= 1, got {K}")
    if K == 1:
        return math.inf
    if K == 2:
        return 1.0 / (2.0 * math.sqrt(K * (K - 1)))
    return (math.sqrt(1.0 + (K - 2) / math.sqrt(K * (K - 1))) - 1.0) / (K - 2)


def gamma_of_c(c: float, K: int) -> tuple[float, float]:
    """``γ = c(2 + c(K-2))√(K(K-1))`` and the admissible cap on c."""
    cap = overlap_cap(K)
    if not 0 <= c < cap:
        raise InputError(f"c = {c} outside the admissible range [0, {cap:.6g}) for K={K}")
    return c * (2.0 + c * (K - 2)) * math.sqrt(K * (K - 1)), cap


def eligible_rows(V, c: float) -> np.ndarray:
    """Boolean ``N x K``: row i is eligible for column j if ``max_{k≠j} |v_ik / v_ij| < c``."""
    V = np.asarray(V, dtype=float)
    N, K = V.shape
    if K == 1:
        return V != 0
    A = np.abs(V)
    out = np.zeros((N, K), dtype=bool)
    for j in range(K):
        others = np.delete(A, j, axis=1).max(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(A[:, j] > 0, others / np.where(A[:, j] > 0, A[:, j], 1.0), np.inf)
        out[:, j] = ratio < c
    return out


def constrained_order_stats(V, m: int, c: float) -> np.ndarray:
    """m-th largest ``|v_ij|`` among eligible rows of each column (0 if fewer than m)."""
    V = np.asarray(V, dtype=float)
    E = eligible_rows(V, c)
    out = np.zeros(V.shape[1])
    for j in range(V.shape[1]):
        vals = np.sort(np.abs(V[E[:, j], j]))[::-1]
        out[j] = vals[m - 1] if vals.size >= m else 0.0
    return out


def rotate_threshold_bound(m: int, K: int, sigma_e: float, h_m: float, c: float, order_stat_samples,
                           rho0: float) -> float:
    """Fraction of samples with ``Σ_j 1/v̄_j² < m(1-γ)(K-ρ₀)/((1+h)σ_e²)``."""
    samples = np.atleast_2d(np.asarray(order_stat_samples, dtype=float))
    if samples.shape[1] != K:
        raise InputError(f"samples must have {K} columns, got {samples.shape[1]}")
    if K >= 2:
        cap = overlap_cap(K)
        if c >= cap:
            raise InputError(f"c = {c} gives gamma >= 1 (cap {cap:.6g}); the bound is vacuous")
    gamma = 0.0 if K == 1 else c * (2.0 + c * (K - 2)) * math.sqrt(K * (K - 1))
    if gamma >= 1:
        raise InputError("gamma >= 1; the bound is vacuous")
    rhs = m * (1.0 - gamma) * (K - rho0) / ((1.0 + h_m) * sigma_e**2)
    with np.errstate(divide="ignore"):
        lhs = np.sum(1.0 / samples**2, axis=1)
    return float(np.mean(lhs < rhs))


# --------------------------------------------------------------------------- extremal index, h(m)


def extremal_index_blocks(series, threshold: float, block_length: int, form: str = "ratio") -> float:
    """Blocks estimator of the extremal index.

    ``form="ratio"`` is blocks with an exceedance over the total exceedance
    count. At moderate thresholds it is biased low even for i.i.d. data since
    a block often holds several independent exceedances. ``form="log"``
    corrects for that: ``log(1 - Z/k) / (r·log(1 - N_exc/n))``.
    """
    x = np.asarray(series, dtype=float).ravel()
    if block_length < 1:
        raise InputError("block length must be >= 1")
    if form not in ("ratio", "log"):
        raise InputError(f"unknown form {form!r}")
    exceed = x > threshold
    n_exc = int(exceed.sum())
    if n_exc == 0:
        raise InputError(f"no exceedances of threshold {threshold}")
    n_blocks = x.size // block_length
    if n_blocks < 1:
        raise InputError("series is shorter than one block")
    used = exceed[: n_blocks * block_length].reshape(n_blocks, block_length)
    z = int(used.any(axis=1).sum())
    if form == "ratio":
        return min(1.0, z / n_exc)
    n_used = int(used.sum())
    if z == n_blocks or n_used == used.size or n_used == 0:
        raise InputError("log form needs some blocks without exceedances")
    est = math.log1p(-z / n_blocks) / (block_length * math.log1p(-n_used / used.size))
    return float(min(1.0, max(est, np.finfo(float).tiny)))


def _corr_matrix(corr, N=None):
    if callable(corr):
        if N is None:
            raise InputError("a correlation accessor needs N")
        return np.array([[corr(i, j) for j in range(N)] for i in range(N)], dtype=float)
    C = np.asarray(corr, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InputError(f"correlation matrix must be square, got {C.shape}")
    return C


def h_of_m(corr, m: int, method: str = "exact", sigma_e2: float = 1.0, N: int | None = None,
           return_subset: bool = False):
    """``max_S sqrt(Σ_{k≠l∈S} τ_kl² / σ_e⁴)`` over m-subsets S of units.

    ``corr`` is an ``N x N`` covariance/correlation matrix or a callable
    ``(i, j) -> τ_ij``. ``method="greedy"`` grows the subset one unit at a time
    and returns a lower bound on the exact maximum.
    """
    C = _corr_matrix(corr, N)
    n = C.shape[0]
    if m > n:
        raise InputError(f"m = {m} exceeds N = {n}")
    if m < 1:
        raise InputError("m must be >= 1")
    if np.any(np.abs(C) > sigma_e2 * (1 + 1e-12)):
        raise InputError("entries exceed sigma_e^2 in absolute value")
    Q = (C / sigma_e2) ** 2
    np.fill_diagonal(Q, 0.0)
    if m == 1:
        return (0.0, (0,)) if return_subset else 0.0
    if method == "exact":
        count = math.comb(n, m)
        if count > EXACT_SUBSET_LIMIT:
            raise InputError(f"C({n}, {m}) = {count} subsets exceeds {EXACT_SUBSET_LIMIT}; use method='greedy'")
        best, best_s = -1.0, None
        combos = itertools.combinations(range(n), m)
        while True:
            chunk = np.array(list(itertools.islice(combos, 50000)), dtype=np.intp)
            if chunk.size == 0:
                break
            vals = Q[chunk[:, :, None], chunk[:, None, :]].sum(axis=(1, 2))
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, best_s = float(vals[i]), tuple(int(x) for x in chunk[i])
    elif method == "greedy":
        i, j = np.unravel_index(int(np.argmax(Q)), Q.shape)
        chosen = [int(min(i, j)), int(max(i, j))] if i != j else [0, 1]
        while len(chosen) < m:
            gain = 2.0 * Q[:, chosen].sum(axis=1)
            gain[chosen] = -np.inf
            chosen.append(int(np.argmax(gain)))
        best = float(Q[np.ix_(chosen, chosen)].sum())
        best_s = tuple(sorted(chosen))
        log.info("h(m) from greedy search is a heuristic lower bound on the exact maximum")
    else:
        raise InputError(f"unknown method {method!r}")
    h = math.sqrt(max(best, 0.0))
    return (h, best_s) if return_subset else h


def toeplitz_corr(N: int, base: float) -> np.ndarray:
    idx = np.arange(N)
    return base ** np.abs(idx[:, None] - idx[None, :])
