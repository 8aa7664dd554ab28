"""Independent reference computations used only by the tests."""

import itertools
import math

import numpy as np


def householder_tridiagonal(A):
    """Reduce a symmetric matrix to tridiagonal form (diagonal, off-diagonal)."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        alpha = -math.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        nv = np.linalg.norm(v)
        if nv < 1e-300:
            continue
        v /= nv
        H = np.eye(n)
        H[k + 1:, k + 1:] -= 2.0 * np.outer(v, v)
        A = H @ A @ H
    return np.diag(A).copy(), np.diag(A, 1).copy()


def sturm_count(d, e, x):
    """Number of eigenvalues of the tridiagonal matrix below x."""
    count, q = 0, 1.0
    for i in range(len(d)):
        off = e[i - 1] ** 2 if i > 0 else 0.0
        q = d[i] - x - (off / q if i > 0 else 0.0)
        if q == 0.0:
            q = 1e-300
        if q < 0:
            count += 1
    return count


def sturm_eigenvalues(A, tol=1e-13):
    """All eigenvalues by Householder reduction and Sturm-sequence bisection, descending."""
    d, e = householder_tridiagonal(A)
    n = len(d)
    r = np.abs(d).max() + 2 * np.abs(e).max(initial=0.0) + 1.0
    out = []
    for k in range(n):
        lo, hi = -r, r
        while hi - lo > tol * r:
            mid = 0.5 * (lo + hi)
            if sturm_count(d, e, mid) > k:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.sort(out)[::-1]


def compositions(total, parts):
    """All tuples of `parts` positive integers summing to `total`."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(1, total - parts + 2):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def g1m_dependent_bruteforce(tau, m, pi):
    pi = dict(enumerate(pi, 1))
    acc = 1.0
    for l in range(1, m):
        conv = 0.0
        for i in range(l, m):
            for comp in compositions(i, l):
                conv += math.prod(pi.get(c, 0.0) for c in comp)
        acc += tau ** l / math.factorial(l) * conv
    return math.exp(-tau) * acc


def varimax_angle_grid(L, n_grid=2001):
    """Best 2x2 rotation angle by grid search then golden-section refinement."""
    def crit(theta):
        c, s = math.cos(theta), math.sin(theta)
        R = L @ np.array([[c, -s], [s, c]])
        R2 = R ** 2
        return float(np.sum(np.mean(R2 ** 2, axis=0) - np.mean(R2, axis=0) ** 2))

    grid = np.linspace(0, math.pi / 2, n_grid)
    vals = [crit(t) for t in grid]
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    g = (math.sqrt(5) - 1) / 2
    for _ in range(200):
        c, d = b - g * (b - a), a + g * (b - a)
        if crit(c) > crit(d):
            b = d
        else:
            a = c
    return 0.5 * (a + b), crit(0.5 * (a + b))


def eligible_bruteforce(V, c):
    N, K = V.shape
    out = np.zeros((N, K), dtype=bool)
    for i, j in itertools.product(range(N), range(K)):
        if V[i, j] == 0:
            continue
        out[i, j] = all(abs(V[i, k] / V[i, j]) < c for k in range(K) if k != j)
    return out


def sigma_min_2x2(B):
    """Smallest singular value of a 2x2 matrix from the quadratic formula."""
    a, b, c, d = B[0, 0], B[0, 1], B[1, 0], B[1, 1]
    s = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = math.sqrt(max(s * s - 4 * det * det, 0.0))
    return math.sqrt(max((s - disc) / 2.0, 0.0))


def ols(Y, Z):
    """Coefficients of Y (n x p) on Z (n x k) via the normal equations."""
    return np.linalg.solve(Z.T @ Z, Z.T @ Y)
