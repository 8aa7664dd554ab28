import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gammaincc
from scipy.stats import genextreme, norm, poisson

from oracles import g1m_dependent_bruteforce, sigma_min_2x2
from proxfactors.errors import BoundUnattainableError, InputError
from proxfactors.evt_bounds import (
    BoundConfig,
    ClusterSizeDist,
    GevSpec,
    b_matrix,
    binomial_upper_tail,
    bound_at,
    constrained_order_stats,
    extremal_index_blocks,
    folded_normal_cdf,
    g1m_dependent,
    g1m_independent,
    gamma_of_c,
    gev_starred,
    h_of_m,
    multi_factor_bound,
    multi_factor_rho0,
    norming_constants,
    one_factor_bound_curve,
    one_factor_rho0,
    overlap_cap,
    prop1_lower_bound,
    rotate_threshold_bound,
    sigma_min_B_bootstrap,
    solve_tau_for_rho0,
    tau_of_u,
    toeplitz_corr,
    u_quantile,
    y_threshold,
)
from proxfactors.factor_core import FactorFit

FOLDED = GevSpec.from_family("folded_normal")


# ---------------------------------------------------------------- h(m)

def test_h_iid_is_zero():
    assert h_of_m(np.eye(10), 4) == 0.0


def test_h_perfect_dependence():
    assert h_of_m(np.ones((8, 8)), 3) == pytest.approx(math.sqrt(3 * 2))


def test_h_toeplitz_pair():
    assert h_of_m(toeplitz_corr(12, 0.5), 2) == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_h_accessor_and_greedy():
    C = toeplitz_corr(9, 0.6)
    exact = h_of_m(lambda i, j: C[i, j], 3, N=9)
    greedy = h_of_m(C, 3, method="greedy")
    assert greedy <= exact + 1e-12
    assert exact == pytest.approx(h_of_m(C, 3))


def test_h_errors():
    with pytest.raises(InputError):
        h_of_m(np.eye(3), 4)
    with pytest.raises(InputError, match="greedy"):
        h_of_m(np.eye(200), 5)


# ---------------------------------------------------------------- GEV pieces

def test_starred_identity_at_theta_one():
    assert gev_starred(GevSpec(0.3, 1.7, 0.4, 1.0, "frechet")) == pytest.approx((0.3, 1.7))


def test_starred_xi_one_half_theta():
    # G(z)^θ is GEV(μ*, σ*, ξ); location shifts by (θ^ξ - 1)/ξ·σ = -0.5
    mu, sig = gev_starred(GevSpec(0.0, 1.0, 1.0, 0.5, "frechet"))
    assert sig == pytest.approx(0.5)
    assert mu == pytest.approx(-0.5)


@pytest.mark.parametrize("xi", [-0.4, 0.0, 0.3, 1.0])
@pytest.mark.parametrize("theta", [0.3, 0.7, 1.0])
def test_starred_matches_power_of_cdf(xi, theta):
    spec = GevSpec(0.2, 1.3, xi, theta, "frechet")
    mu_s, sig_s = gev_starred(spec)
    z = np.linspace(-0.5, 3.0, 9)
    lhs = genextreme.cdf(z, -xi, loc=0.2, scale=1.3) ** theta
    rhs = genextreme.cdf(z, -xi, loc=mu_s, scale=sig_s)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_starred_small_xi_limit():
    lim = gev_starred(GevSpec(0.0, 1.0, 0.0, 0.4, "gumbel"))
    near = gev_starred(GevSpec(0.0, 1.0, 1e-8, 0.4, "gumbel"))
    assert lim[0] == pytest.approx(math.log(0.4))
    np.testing.assert_allclose(near, lim, atol=1e-6)


def test_u_quantile_at_tau_one():
    spec = GevSpec(0.5, 2.0, 0.3, 1.0, "frechet")
    a, b = norming_constants("frechet", 20)
    assert u_quantile(spec, 20, 1.0) == pytest.approx(a * 0.5 + b)


def test_u_quantile_plugs_back_into_gev():
    N = 100
    a, b = norming_constants("folded_normal", N)
    for tau in (0.05, 0.5, 1.0, 3.0, 20.0):
        z = (u_quantile(FOLDED, N, tau) - b) / a
        assert genextreme.cdf(z, 0.0) == pytest.approx(math.exp(-tau), abs=1e-10)


@given(st.floats(1e-3, 50), st.floats(1e-3, 50))
def test_u_quantile_decreasing(t1, t2):
    if t1 == t2:
        return
    lo, hi = sorted((t1, t2))
    assert u_quantile(FOLDED, 100, lo) > u_quantile(FOLDED, 100, hi)


def test_tau_of_u_inverts():
    for fam in ("folded_normal", "frechet", "uniform"):
        spec = GevSpec.from_family(fam, theta=0.8)
        for tau in (0.1, 0.9, 2.5):
            assert tau_of_u(spec, 50, u_quantile(spec, 50, tau)) == pytest.approx(tau, rel=1e-10)


def test_norming_constants():
    assert norming_constants("uniform", 10) == (0.1, 1.0)
    assert norming_constants("frechet", 7) == (7.0, 0.0)
    a, b = norming_constants("exponential", 1000)
    assert (a, b) == (1.0, pytest.approx(6.907755, abs=1e-6))
    a, b = norming_constants("normal", 100)
    assert b == pytest.approx(norm.ppf(0.99))
    with pytest.raises(InputError):
        norming_constants("cauchy", 10)
    with pytest.raises(InputError):
        norming_constants("uniform", 1)


def test_exponential_norming_monte_carlo():
    # median of the max of 1000 Exp(1) draws vs b + a·(-log log 2); the max is drawn
    # exactly through its cdf (1 - e^-x)^n, i.e. x = -log(1 - U^(1/n))
    n, reps = 1000, 100_000
    U = np.random.default_rng(3).random(reps)
    maxima = -np.log1p(-U ** (1.0 / n))
    a, b = norming_constants("exponential", n)
    target = b + a * (-math.log(math.log(2)))
    assert abs(np.median(maxima) - target) / target < 0.03


# ---------------------------------------------------------------- G_{1,m}

def test_g1m_independent_values():
    assert g1m_independent(1.3, 1) == pytest.approx(math.exp(-1.3))
    assert g1m_independent(0.0, 5) == 1.0
    assert g1m_independent(1.0, 3) == pytest.approx(0.91970, abs=1e-5)
    taus = np.linspace(0, 30, 31)
    for m in (1, 4, 10):
        np.testing.assert_allclose(g1m_independent(taus, m), gammaincc(m, taus), atol=1e-13)


@given(st.floats(0.01, 40), st.integers(1, 30))
def test_g1m_monotone(tau, m):
    assert g1m_independent(tau, m + 1) >= g1m_independent(tau, m) - 1e-15
    assert g1m_independent(tau * 1.1, m) <= g1m_independent(tau, m) + 1e-15


def test_g1m_dependent_reductions():
    for m in (1, 2, 5, 9):
        for tau in (0.2, 3.0, 11.0):
            assert g1m_dependent(tau, m, ClusterSizeDist([1.0] + [0.0] * 10)) == pytest.approx(
                g1m_independent(tau, m), abs=1e-14)
    assert g1m_dependent(2.0, 2, ClusterSizeDist([0.3])) == pytest.approx(math.exp(-2) * (1 + 2 * 0.3))


def test_g1m_dependent_matches_compositions():
    for tau in (0.5, 2.0, 6.0):
        assert g1m_dependent(tau, 3, ClusterSizeDist([0.6, 0.4])) == pytest.approx(
            g1m_dependent_bruteforce(tau, 3, [0.6, 0.4]), abs=1e-14)
    pi = [0.5, 0.2, 0.2, 0.1]
    assert g1m_dependent(1.7, 5, ClusterSizeDist(pi)) == pytest.approx(
        g1m_dependent_bruteforce(1.7, 5, pi), abs=1e-14)


def test_g1m_dependent_length_check():
    with pytest.raises(InputError):
        g1m_dependent(1.0, 4, ClusterSizeDist([0.5, 0.5]))
    with pytest.raises(InputError):
        ClusterSizeDist([0.8, 0.5])


# ---------------------------------------------------------------- counting bound

def test_prop1_support_below_threshold_gives_zero():
    assert prop1_lower_bound(0.95, 3, 50, 1.0, 1.0, 0.0, lambda y: 1.0) == 0.0


def test_prop1_m_equals_one():
    y = y_threshold(0.9, 1, 1.0, 1.0, 0.0)
    assert prop1_lower_bound(0.9, 1, 60, 1.0, 1.0, 0.0) == pytest.approx(1 - folded_normal_cdf(y) ** 60, abs=1e-14)


def test_prop1_exact_binomial_oracle():
    y = math.sqrt(0.95 / 0.05 / 4)
    x = math.erf(y / math.sqrt(2))
    direct = 1 - sum(math.comb(100, j) * (1 - x) ** j * x ** (100 - j) for j in range(4))
    assert prop1_lower_bound(0.95, 4, 100, 1.0, 1.0, 0.0) == pytest.approx(direct, abs=1e-12)


def test_prop1_cdf_out_of_range():
    with pytest.raises(InputError):
        prop1_lower_bound(0.9, 2, 10, 1.0, 1.0, 0.0, lambda y: 1.5)


def test_prop1_comparative_statics():
    rhos = np.linspace(0.5, 0.99, 12)
    vals = [prop1_lower_bound(r, 5, 100, 1.0, 1.0, 0.0) for r in rhos]
    assert np.all(np.diff(vals) <= 1e-15)
    sfs = np.linspace(0.5, 2.0, 12)
    vals = [prop1_lower_bound(0.95, 5, 100, s, 1.0, 0.0) for s in sfs]
    assert np.all(np.diff(vals) >= -1e-15)
    ses = np.linspace(0.5, 2.0, 12)
    vals = [prop1_lower_bound(0.95, 5, 100, 1.0, s, 0.0) for s in ses]
    assert np.all(np.diff(vals) <= 1e-15)
    hs = np.linspace(0.0, 3.0, 12)
    vals = [prop1_lower_bound(0.95, 5, 100, 1.0, 1.0, h) for h in hs]
    assert np.all(np.diff(vals) <= 1e-15)


@given(st.integers(1, 300), st.integers(0, 300), st.floats(0.0, 1.0))
def test_binomial_tail_matches_scipy(N, m, p):
    from scipy.stats import binom
    m = min(m, N + 1)
    expected = 1.0 if m == 0 else float(binom.sf(m - 1, N, p))
    assert binomial_upper_tail(N, m, p) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------- thresholds and bisection

def test_solve_tau_round_trip():
    for m in (1, 3, 8):
        for rho0 in (0.5, 0.9, 0.95):
            tau = solve_tau_for_rho0(rho0, m, 100, 1, FOLDED, 1.0, 0.0, 1.0)
            u = u_quantile(FOLDED, 100, tau)
            assert one_factor_rho0(u, m, 1.0, 1.0, 0.0) == pytest.approx(rho0, abs=1e-8)


def test_solve_tau_matches_closed_form():
    a, b = norming_constants("folded_normal", 100)
    for m in range(1, 11):
        tau = solve_tau_for_rho0(0.95, m, 100, 1, FOLDED, 1.0, 0.0, 1.0)
        u = math.sqrt(0.95 / (m * 0.05))
        assert math.isfinite(tau)
        assert tau == pytest.approx(math.exp(-(u - b) / a), rel=1e-8)


def test_solve_tau_unattainable():
    spec = GevSpec.from_family("uniform")
    with pytest.raises(BoundUnattainableError, match="attainable range"):
        solve_tau_for_rho0(0.999, 1, 20, 1, spec, 1.0, 0.0, 1.0)


def test_bound_decreasing_in_rho0():
    cfg = BoundConfig(N=100)
    vals = [bound_at(cfg, 5, r).prob_lower_bound for r in np.linspace(0.8, 0.98, 10)]
    assert np.all(np.diff(vals) <= 1e-12)


def test_one_factor_curve():
    taus = np.array([0.01, 0.5, 2.0, 50.0, 500.0])
    curve = one_factor_bound_curve(1, 100, FOLDED, 1.0, 1.0, 0.0, taus)
    np.testing.assert_allclose([r.prob_lower_bound for r in curve], 1 - np.exp(-taus), atol=1e-14)
    assert curve[-1].prob_lower_bound > 0.999 and curve[-1].rho0 < curve[0].rho0
    with pytest.raises(InputError):
        one_factor_bound_curve(1, 100, FOLDED, 1.0, 1.0, 0.0, [0.0])


def test_one_factor_bound_increases_in_m():
    cfg = BoundConfig(N=100)
    vals = [bound_at(cfg, m, 0.95).prob_lower_bound for m in range(2, 11)]
    assert np.all(np.diff(vals) > 0)


def test_multi_factor_figure_four_point():
    r = multi_factor_bound(4, 100, 2, FOLDED, [1.44, 1.0], 1.0, 0.0, 1.0, 0.0, rho0=1.9)
    a, b = norming_constants("folded_normal", 100)
    u = math.sqrt((1 / 1.44 + 1.0) / (0.1 * 4))
    tau = math.exp(-(u - b) / a)
    oracle = (1 - poisson.cdf(3, tau)) ** 2
    assert r.params["tau"] == pytest.approx(tau, rel=1e-8)
    assert r.prob_lower_bound == pytest.approx(oracle, abs=1e-10)
    assert 0 < r.prob_lower_bound < 1
    assert r.rho0 == pytest.approx(1.9, abs=1e-8)


def test_multi_factor_single_factor_probability():
    one = bound_at(BoundConfig(N=100), 4, 0.95)
    multi = multi_factor_bound(4, 100, 1, FOLDED, [1.0], 1.0, 0.0, 1.0, 0.0, tau=one.params["tau"])
    assert multi.prob_lower_bound == pytest.approx(one.prob_lower_bound, abs=1e-14)
    u = u_quantile(FOLDED, 100, one.params["tau"])
    assert multi.rho0 == pytest.approx(1 - 1 / (4 * u * u))


def test_multi_factor_correction_and_checks():
    r = multi_factor_bound(4, 100, 2, FOLDED, [1.44, 1.0], 1.0, 0.0, 1.0, 1.0, rho0=1.9)
    assert r.prob_lower_bound == 0.0
    with pytest.raises(InputError):
        multi_factor_bound(4, 100, 2, FOLDED, [1.44, 1.0], 1.0, 0.0, 1.5, 0.0, rho0=1.9)
    with pytest.raises(InputError):
        multi_factor_bound(4, 100, 2, FOLDED, [1.44, 1.0], 1.0, 0.0, 1.0, 0.0)


def test_multi_rho0_formula():
    assert multi_factor_rho0([2.0, 4.0], 2, [1.0, 1.0], 1.0, 1.0, 0.5) == pytest.approx(
        2 - 2.0 / (2 * 0.25) * (1 / 4 + 1 / 16))


# ---------------------------------------------------------------- B matrix and rotation bound

def test_sigma_min_bootstrap_special_cases():
    rng = np.random.default_rng(0)
    fit1 = FactorFit(rng.standard_normal((50, 1)), rng.standard_normal((30, 1)), np.array([2.0]))
    assert sigma_min_B_bootstrap(fit1, 3, 0.9, reps=5) == 0.0
    L = np.zeros((40, 2))
    L[:20, 0] = rng.uniform(1, 2, 20)
    L[20:, 1] = rng.uniform(1, 2, 20)
    fit2 = FactorFit(rng.standard_normal((50, 2)), L, np.array([2.0, 1.0]))
    assert sigma_min_B_bootstrap(fit2, 4, 0.99, reps=50, seed=1) == 0.0


def test_b_matrix_against_two_by_two_svd():
    rng = np.random.default_rng(5)
    V = rng.standard_normal((30, 2))
    s = np.array([1.5, 0.7])
    B = b_matrix(V, s, 6)
    rows1 = np.argsort(-np.abs(V[:, 1]), kind="stable")[:6]
    beta01 = math.sqrt(1.5) * V[rows1, 0] @ V[rows1, 1] / (math.sqrt(0.7) * np.sum(V[rows1, 1] ** 2))
    assert B[0, 1] == pytest.approx(beta01)
    assert np.linalg.svd(B, compute_uv=False).min() == pytest.approx(sigma_min_2x2(B), abs=1e-12)


def test_bootstrap_deterministic():
    rng = np.random.default_rng(9)
    fit = FactorFit(rng.standard_normal((20, 2)), rng.standard_normal((40, 2)), np.array([2.0, 1.0]))
    a = sigma_min_B_bootstrap(fit, 5, 0.8, reps=40, seed=3)
    assert a == sigma_min_B_bootstrap(fit, 5, 0.8, reps=40, seed=3)
    assert 0.0 <= a <= 1.0


def test_gamma_of_c():
    assert gamma_of_c(0.0, 2)[0] == 0.0
    g, cap = gamma_of_c(0.1, 2)
    assert g == pytest.approx(0.28284, abs=1e-5)
    assert cap == pytest.approx(0.35355, abs=1e-5)
    with pytest.raises(InputError, match="0.353553"):
        gamma_of_c(0.36, 2)
    for K in (3, 4, 7):
        cap = overlap_cap(K)
        assert gamma_of_c(cap * (1 - 1e-9), K)[0] == pytest.approx(1.0, abs=1e-6)


def test_rotate_bound_limits_and_constant_samples():
    K, m = 2, 5
    big = np.full((100, K), 50.0)
    assert rotate_threshold_bound(m, K, 1.0, 0.0, 0.1, big, 0.0) == 1.0
    v = 1.3
    gamma = gamma_of_c(0.1, K)[0]
    rhs = m * (1 - gamma) * (K - 1.5)
    expected = float(2 / v ** 2 < rhs)
    assert rotate_threshold_bound(m, K, 1.0, 0.0, 0.1, np.full((7, K), v), 1.5) == expected
    with pytest.raises(InputError):
        rotate_threshold_bound(m, K, 1.0, 0.0, 0.4, big, 0.0)


def test_rotate_bound_one_factor_matches_counting_machinery():
    # K=1, c=0: the event is v_(m)² > (1+h)σ_e²/(m(1-ρ₀)); with ρ₀' = 1/(2-ρ₀) this is
    # v_(m) > y_m(ρ₀'), the counting-bound threshold
    rng = np.random.default_rng(11)
    N, m, rho0 = 100, 4, 0.95
    draws = rng.standard_normal((2000, N, 1))
    samples = np.array([constrained_order_stats(V, m, 0.0) for V in draws])
    rot = rotate_threshold_bound(m, 1, 1.0, 0.0, 0.0, samples, rho0)
    y = y_threshold(1 / (2 - rho0), m, 1.0, 1.0, 0.0)
    direct = float(np.mean(samples[:, 0] > y))
    assert rot == pytest.approx(direct, abs=1e-12)
    assert abs(rot - prop1_lower_bound(1 / (2 - rho0), m, N, 1.0, 1.0, 0.0)) < 4 * math.sqrt(0.25 / 2000)


# ---------------------------------------------------------------- extremal index

def test_blocks_estimator_cases():
    x = np.zeros(100)
    x[10:14] = 5.0
    assert extremal_index_blocks(x, 1.0, 20) == pytest.approx(0.25)
    y = np.zeros(100)
    y[[5, 25, 45, 65]] = 5.0
    assert extremal_index_blocks(y, 1.0, 20) == 1.0
    with pytest.raises(InputError):
        extremal_index_blocks(np.zeros(10), 1.0, 2)


def test_blocks_estimator_iid_normal():
    rng = np.random.default_rng(4)
    ratio, logf = [], []
    for _ in range(100):
        s = rng.standard_normal(10_000)
        u = np.quantile(s, 0.95)
        ratio.append(extremal_index_blocks(s, u, 50))
        logf.append(extremal_index_blocks(s, u, 50, form="log"))
    # ratio form: E[Z]/E[N_exc] = (1 - 0.95^50)/2.5 for i.i.d. data
    assert np.mean(ratio) == pytest.approx((1 - 0.95 ** 50) / 2.5, abs=0.01)
    assert 0.8 <= np.mean(logf) <= 1.0


def test_blocks_log_form_clustered():
    # every exceedance comes in a pair: θ = 1/2
    rng = np.random.default_rng(8)
    x = np.zeros(200_000)
    starts = rng.choice(np.arange(0, 200_000, 2), 2000, replace=False)
    x[starts] = x[starts + 1] = 1.0
    assert extremal_index_blocks(x, 0.5, 20, form="log") == pytest.approx(0.5, abs=0.05)
    with pytest.raises(InputError):
        extremal_index_blocks(x, 0.5, 20, form="bogus")
