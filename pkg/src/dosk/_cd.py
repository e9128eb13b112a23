"""Compiled coordinate-descent kernels for the alpha and w subproblems.

Loss kinds are passed as integers: 0 squared, 1 huberized hinge, 2 deviance.
Every coordinate update minimizes a quadratic upper bound of the objective
along that coordinate (exact for the squared loss), so each update is
non-increasing in the subproblem objective.
"""

import math

import numpy as np
from numba import njit

LOSS_CODES = {"squared": 0, "huberized_hinge": 1, "deviance": 2}


@njit(cache=True)
def _dloss(kind, delta, y, f):
    if kind == 0:
        return 2.0 * (f - y)
    u = y * f
    if kind == 2:
        if u > 0.0:
            e = math.exp(-u)
            return -y * e / (1.0 + e)
        return -y / (1.0 + math.exp(u))
    if u >= 1.0:
        return 0.0
    if u > 1.0 - delta:
        return -y * (1.0 - u) / delta
    return -y


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _dot_row(K, j, v, n):
    g = 0.0
    for i in range(n):
        g += K[j, i] * v[i]
    return g


@njit(cache=True)
def _alpha_kkt(KLt, q, dl, alpha, n, lam1, lam3):
    res = 0.0
    for j in range(n):
        g = _dot_row(KLt, j, dl, n) / n + 2.0 * lam3 * q[j]
        if alpha[j] > 0.0:
            r = abs(g + lam1)
        elif alpha[j] < 0.0:
            r = abs(g - lam1)
        else:
            r = max(abs(g) - lam1, 0.0)
        if r > res:
            res = r
    return res


@njit(cache=True)
def alpha_cd(KLt, KQ, y, b, alpha0, kind, delta, curv, lam1, lam3, tol, max_sweeps):
    """Minimize (1/n) sum L(y, KL a + b) + lam1 |a|_1 + lam3 a'KQ a over a.

    ``KLt`` is the transpose of the loss matrix ``KL``; ``KQ`` must be
    symmetric. Passing ``K`` for both gives the plain alpha subproblem.
    Returns (alpha, kkt_residual, sweeps, converged).
    """
    n = KQ.shape[0]
    alpha = alpha0.copy()
    u = KLt.T @ alpha
    q = KQ @ alpha
    dl = np.empty(n)
    for i in range(n):
        dl[i] = _dloss(kind, delta, y[i], u[i] + b)
    H = np.empty(n)
    for j in range(n):
        H[j] = curv * _dot_row(KLt, j, KLt[j], n) / n + 2.0 * lam3 * KQ[j, j]
    res = _alpha_kkt(KLt, q, dl, alpha, n, lam1, lam3)
    if res <= tol:
        return alpha, res, 0, True
    for sweep in range(max_sweeps):
        for j in range(n):
            if H[j] <= 0.0:
                continue
            g = _dot_row(KLt, j, dl, n) / n + 2.0 * lam3 * q[j]
            new = _soft(alpha[j] - g / H[j], lam1 / H[j])
            d = new - alpha[j]
            if d != 0.0:
                for i in range(n):
                    u[i] += KLt[j, i] * d
                    q[i] += KQ[j, i] * d
                    dl[i] = _dloss(kind, delta, y[i], u[i] + b)
                alpha[j] = new
        res = _alpha_kkt(KLt, q, dl, alpha, n, lam1, lam3)
        if res <= tol:
            return alpha, res, sweep + 1, True
    return alpha, res, max_sweeps, False


@njit(cache=True)
def _w_grad(At, y, f, k, n, kind, delta, dlin):
    g = 0.0
    for i in range(n):
        g += _dloss(kind, delta, y[i], f[i]) * At[k, i]
    return g / n + dlin[k]


@njit(cache=True)
def _w_pgnorm(At, y, f, w, n, p, kind, delta, dlin):
    res = 0.0
    for k in range(p):
        g = _w_grad(At, y, f, k, n, kind, delta, dlin)
        z = min(max(w[k] - g, 0.0), 1.0)
        r = abs(w[k] - z)
        if r > res:
            res = r
    return res


@njit(cache=True)
def w_cd(At, c, y, w0, dlin, kind, delta, curv, tol, max_sweeps):
    """Minimize (1/n) sum L(y, A w + c) + dlin'w over the box [0, 1]^p.

    ``At`` is the transpose of ``A`` (shape p x n). Returns
    (w, projected_gradient_norm, sweeps, converged).
    """
    p, n = At.shape
    w = w0.copy()
    f = c.copy()
    for k in range(p):
        for i in range(n):
            f[i] += At[k, i] * w[k]
    H = np.empty(p)
    for k in range(p):
        s = 0.0
        for i in range(n):
            s += At[k, i] * At[k, i]
        H[k] = curv * s / n
    res = _w_pgnorm(At, y, f, w, n, p, kind, delta, dlin)
    if res <= tol:
        return w, res, 0, True
    for sweep in range(max_sweeps):
        for k in range(p):
            g = _w_grad(At, y, f, k, n, kind, delta, dlin)
            if H[k] > 0.0:
                new = min(max(w[k] - g / H[k], 0.0), 1.0)
            elif g > 0.0:
                new = 0.0
            elif g < 0.0:
                new = 1.0
            else:
                new = w[k]
            d = new - w[k]
            if d != 0.0:
                for i in range(n):
                    f[i] += At[k, i] * d
                w[k] = new
        res = _w_pgnorm(At, y, f, w, n, p, kind, delta, dlin)
        if res <= tol:
            return w, res, sweep + 1, True
    return w, res, max_sweeps, False


@njit(cache=True)
def _loss(kind, delta, y, f):
    if kind == 0:
        return (y - f) * (y - f)
    u = y * f
    if kind == 2:
        if u > 0.0:
            return math.log1p(math.exp(-u))
        return -u + math.log1p(math.exp(u))
    if u >= 1.0:
        return 0.0
    if u > 1.0 - delta:
        return (1.0 - u) * (1.0 - u) / (2.0 * delta)
    return 1.0 - u - delta / 2.0


@njit(cache=True)
def alpha_objective(KL, KQ, y, b, alpha, kind, delta, lam1, lam3):
    """(1/n) sum L(y, KL a + b) + lam1 |a|_1 + lam3 a'KQ a."""
    n = KQ.shape[0]
    u = KL @ alpha
    q = KQ @ alpha
    s = 0.0
    quad = 0.0
    l1 = 0.0
    for i in range(n):
        s += _loss(kind, delta, y[i], u[i] + b)
        quad += alpha[i] * q[i]
        l1 += abs(alpha[i])
    return s / n + lam1 * l1 + lam3 * quad
