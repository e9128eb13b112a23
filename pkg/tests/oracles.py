"""Independent reference computations shared by unit and acceptance tests."""

import math

import numpy as np

from dosk.kernel import gram_matrix
from dosk.loss import loss_derivative, loss_value


def oracle_kernel(spec, w, x1, x2):
    # plain-loop evaluation of K(w * x1, w * x2)
    a = [wk * v for wk, v in zip(w, x1)]
    b = [wk * v for wk, v in zip(w, x2)]
    if spec.family == "linear":
        return sum(p * q for p, q in zip(a, b))
    if spec.family == "polynomial":
        return (spec.offset_c + sum(p * q for p, q in zip(a, b))) ** spec.degree_d
    if spec.family == "gaussian":
        return math.exp(-spec.gamma * sum((p - q) ** 2 for p, q in zip(a, b)))
    return math.exp(-spec.gamma * sum(abs(p - q) for p, q in zip(a, b)))


def central_difference(f, w, h=1e-6):
    g = np.empty_like(w)
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def block_ridge_oracle(K, y, lam3):
    """Kernel ridge with intercept from the bordered stationarity system."""
    n = len(y)
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = K + n * lam3 * np.eye(n)
    M[:n, n] = 1.0
    M[n, :n] = K.sum(axis=0)
    M[n, n] = n
    sol = np.linalg.solve(M, np.r_[y, y.sum()])
    return sol[:n], sol[n]


def prox_gradient_oracle(K, y, b, loss, hp, tol=1e-8, iters=200000):
    """FISTA on the alpha subproblem with a fixed 1/L step.

    Stops once the largest coordinate change falls below ``tol * 1e-5``.
    """
    n = len(y)
    L = loss.curvature_bound * np.linalg.norm(K, 2) ** 2 / n + 2 * hp.lambda3 * np.linalg.norm(K, 2)
    step = 1.0 / L
    a = v = np.zeros(n)
    t = 1.0
    for _ in range(iters):
        g = K @ loss_derivative(loss, y, K @ v + b) / n + 2 * hp.lambda3 * K @ v
        z = v - step * g
        a_new = np.sign(z) * np.maximum(np.abs(z) - step * hp.lambda1, 0.0)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        v = a_new + (t - 1) / t_new * (a_new - a)
        if np.max(np.abs(a_new - a)) < tol * 1e-5:
            return a_new
        a, t = a_new, t_new
    return a


def surrogate_grid_oracle(spec, X, y, alpha, b, w0, loss, hp, resolution=1e-3, h=1e-6):
    """Grid minimizer of the linearized w objective on ``[0, 1]^2``.

    The linearization is built from central differences of ``K_w alpha``,
    not from analytic kernel gradients. Returns ``(w_best, value_fn)``.
    """
    f0 = gram_matrix(spec, w0, X) @ alpha
    A = np.column_stack([
        (gram_matrix(spec, w0 + h * e, X) @ alpha - gram_matrix(spec, w0 - h * e, X) @ alpha) / (2 * h)
        for e in np.eye(len(w0))
    ])

    def value(W):
        W = np.atleast_2d(W)
        F = f0 + (W - w0) @ A.T + b
        return np.mean(loss_value(loss, np.broadcast_to(y, F.shape), F), axis=1) + hp.lambda2 * W.sum(axis=1) \
            + hp.lambda3 * W @ (A.T @ alpha)

    m = int(round(1 / resolution)) + 1
    grid = np.linspace(0, 1, m)
    W = np.stack(np.meshgrid(grid, grid, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = value(W)
    return W[int(np.argmin(vals))], value
