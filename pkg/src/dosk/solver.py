"""Alternating minimization for the double-sparsity kernel objective.

The objective over dual coefficients ``alpha``, intercept ``b`` and kernel
weights ``w`` in ``[0, 1]^p`` is::

    phi = (1/n) sum_i L(y_i, (K_w alpha)_i + b)
          + lambda1 |alpha|_1 + lambda2 |w|_1 + lambda3 alpha' K_w alpha

Each outer iteration runs an alpha step (convex, L1-penalized), a b step
(one-dimensional) and a w step that minimizes a linearized surrogate over
the box. If the true objective rises after the w step, the step is rolled
back and replaced by a sequence of surrogate directions with Armijo
backtracking, which cannot increase ``phi``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _cd
from .exceptions import ConvergenceError, DataError, DimensionError, LabelError, SolverError
from .kernel import PairwiseTerms
from .loss import LossSpec, loss_curvature, loss_derivative, loss_value

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-8


@dataclass(frozen=True)
class Hyperparams:
    """Penalty weights on ``|alpha|_1``, ``|w|_1`` and ``alpha' K_w alpha``."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.5

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite nonnegative number, got {v}")
            object.__setattr__(self, name, v)

    def scaled(self, factor):
        return Hyperparams(self.lambda1 * factor, self.lambda2 * factor, self.lambda3 * factor)

    def to_dict(self):
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "lambda3": self.lambda3}


@dataclass(frozen=True)
class SolverConfig:
    """Iteration caps and tolerances for :func:`fit_dosk`.

    ``alpha_max_iter`` bounds a standalone :func:`alpha_step`. Inside a fit
    each alpha update gets ``alpha_fit_iter`` rounds and may stop short of
    ``alpha_tol``; the next outer iteration resumes from where it stopped.

    ``freeze_w`` keeps ``w`` at its initial value and skips the w step, which
    turns the fit into plain (L1 and/or ridge penalized) kernel learning.
    """

    max_outer_iters: int = 300
    tol_objective: float = 1e-3
    inner_w_iters: int = 50
    tol_w: float = 1e-4
    line_search_max_halvings: int = 50
    armijo_c: float = 1e-4
    n_starts: int = 1
    seed: int = 0
    alpha_tol: float = 1e-6
    alpha_max_iter: int = 500
    alpha_fit_iter: int = 5
    w_tol: float = 1e-6
    w_max_sweeps: int = 5000
    freeze_w: bool = False

    def __post_init__(self):
        for name in ("max_outer_iters", "inner_w_iters", "line_search_max_halvings", "n_starts",
                     "alpha_max_iter", "alpha_fit_iter", "w_max_sweeps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("tol_objective", "tol_w", "alpha_tol", "w_tol", "armijo_c"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass
class IterateState:
    w: np.ndarray
    alpha: np.ndarray
    b: float

    def copy(self):
        return IterateState(self.w.copy(), self.alpha.copy(), float(self.b))


@dataclass
class FitTrace:
    """Objective trajectory and step diagnostics of one fit.

    ``objective_per_iter[0]`` is the objective at the initial point; entry
    ``t`` is the objective after outer iteration ``t``.
    """

    objective_per_iter: list = field(default_factory=list)
    line_search_invocations: int = 0
    converged: bool = False
    iters_used: int = 0
    step_sizes: list = field(default_factory=list)
    start_index: int = 0

    @property
    def final_objective(self):
        return self.objective_per_iter[-1]


def _as_state_arrays(state):
    return np.asarray(state.w, dtype=float), np.asarray(state.alpha, dtype=float), float(state.b)


def objective(state, K, y, loss, hp):
    """Value of the full objective at ``state``; ``K`` must be the gram at ``state.w``."""
    w, alpha, b = _as_state_arrays(state)
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(alpha)) and np.isfinite(b)
            and np.all(np.isfinite(K)) and np.all(np.isfinite(y))):
        raise DataError("objective received non-finite inputs")
    Ka = K @ alpha
    data = float(np.mean(loss_value(loss, y, Ka + b)))
    return data + hp.lambda1 * float(np.sum(np.abs(alpha))) + hp.lambda2 * float(np.sum(np.abs(w))) \
        + hp.lambda3 * float(alpha @ Ka)


def _kkt(alpha, KL, KQ, y, b, loss, hp):
    g = KL.T @ loss_derivative(loss, y, KL @ alpha + b) / len(y) + 2.0 * hp.lambda3 * (KQ @ alpha)
    r = np.where(alpha > 0, np.abs(g + hp.lambda1),
                 np.where(alpha < 0, np.abs(g - hp.lambda1), np.maximum(np.abs(g) - hp.lambda1, 0.0)))
    return float(np.max(r)) if r.size else 0.0


def alpha_kkt_residual(alpha, K, y, b, loss, hp):
    """Largest violation of the subgradient optimality conditions in ``alpha``."""
    K = np.asarray(K, dtype=float)
    return _kkt(np.asarray(alpha, dtype=float), K, K, np.asarray(y, dtype=float), float(b), loss, hp)


def _alpha_solve(KL, KQ, y, b, alpha, loss, hp, tol, max_iter, sweeps=3):
    """Coordinate sweeps interleaved with primal-dual active-set Newton steps.

    Solves ``min (1/n) sum L(y, KL a + b) + lambda1 |a|_1 + lambda3 a'KQ a``.
    The active set and its signs come from one proximal coordinate step
    ``alpha - g / H_jj``; inactive coordinates are sent to zero and the
    active block takes a Newton step. The candidate is kept only if it
    lowers the objective, so the iterates are monotone.
    """
    n = len(y)
    code = _cd.LOSS_CODES[loss.kind]
    lam1, lam3 = hp.lambda1, hp.lambda3
    KLt = np.ascontiguousarray(KL.T)
    hdiag = loss.curvature_bound * np.einsum("ij,ij->j", KL, KL) / n + 2.0 * lam3 * np.diag(KQ)
    hdiag = np.maximum(hdiag, 1e-300)
    res = np.inf
    skip = 0
    for it in range(max_iter):
        alpha, res, _, ok = _cd.alpha_cd(KLt, KQ, y, b, alpha, code, loss.huber_delta, loss.curvature_bound,
                                         lam1, lam3, tol, sweeps)
        if ok:
            return alpha, res, it, True
        if skip:
            skip -= 1
            continue
        f = KL @ alpha + b
        g = KLt @ loss_derivative(loss, y, f) / n + 2.0 * lam3 * (KQ @ alpha)
        z = alpha - g / hdiag
        active = np.abs(z) > lam1 / hdiag
        idx = np.flatnonzero(active)
        rest = np.flatnonzero(~active)
        d = np.zeros(n)
        d[rest] = -alpha[rest]
        if idx.size:
            c = loss_curvature(loss, y, f)
            KA = KL[:, idx]
            H = KA.T @ (c[:, None] * KA) / n + 2.0 * lam3 * KQ[np.ix_(idx, idx)]
            H[np.diag_indices_from(H)] += 1e-12 * max(float(np.trace(H)) / idx.size, 1e-300)
            coupling = KA.T @ (c * (KL[:, rest] @ d[rest])) / n + 2.0 * lam3 * KQ[np.ix_(idx, rest)] @ d[rest]
            rhs = -(g[idx] + lam1 * np.sign(z[idx])) - coupling
            try:
                d[idx] = np.linalg.solve(H, rhs)
            except np.linalg.LinAlgError:
                d[idx] = np.linalg.lstsq(H, rhs, rcond=None)[0]
        f0 = _cd.alpha_objective(KL, KQ, y, b, alpha, code, loss.huber_delta, lam1, lam3)
        t = 1.0
        for _ in range(10):
            cand = alpha + t * d
            if _cd.alpha_objective(KL, KQ, y, b, cand, code, loss.huber_delta, lam1, lam3) < f0:
                alpha = cand
                break
            t *= 0.5
        if t < 0.1:
            # the local quadratic model is poor here; let coordinate sweeps work for a while
            skip = 4
    res = _kkt(alpha, KL, KQ, y, b, loss, hp)
    return alpha, res, max_iter, res <= tol


def _ridge_with_intercept(K, y, lam3):
    n = len(y)
    if lam3 > 0:
        M = K + n * lam3 * np.eye(n)
        u = np.linalg.solve(M, y)
        v = np.linalg.solve(M, np.ones(n))
        b = float(np.mean(y - K @ u) / (1.0 - np.mean(K @ v)))
        return u - b * v, b
    coef = np.linalg.lstsq(np.column_stack([K, np.ones(n)]), y, rcond=None)[0]
    return coef[:n], float(coef[n])


def _alpha_minimize(state, K, y, loss, hp, tol, max_iter, joint_b=False):
    """Alpha subproblem at fixed ``w``; returns (alpha, b, residual, rounds, converged).

    With ``joint_b`` and the squared loss the intercept is profiled out
    (``b = mean(y - K alpha)``), which makes this an exact minimization over
    ``alpha`` and ``b`` together. Otherwise ``b`` is held fixed.
    """
    _, alpha0, b = _as_state_arrays(state)
    K = np.ascontiguousarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    squared = loss.kind == "squared"
    if squared and joint_b:
        if hp.lambda1 == 0.0:
            alpha, b = _ridge_with_intercept(K, y, hp.lambda3)
            return alpha, b, _kkt(alpha, K, K, y, b, loss, hp), 0, True
        KL = K - K.mean(axis=0)
        alpha, res, it, ok = _alpha_solve(KL, K, y - y.mean(), 0.0, alpha0, loss, hp, tol, max_iter)
        return alpha, float(np.mean(y - K @ alpha)), res, it, ok
    if squared and hp.lambda1 == 0.0:
        r = y - b
        if hp.lambda3 > 0:
            alpha = np.linalg.solve(K + n * hp.lambda3 * np.eye(n), r)
        else:
            alpha = np.linalg.lstsq(K, r, rcond=None)[0]
        return alpha, b, _kkt(alpha, K, K, y, b, loss, hp), 0, True
    alpha, res, it, ok = _alpha_solve(K, K, y, b, alpha0, loss, hp, tol, max_iter)
    return alpha, b, res, it, ok


def alpha_step(state, K, y, loss, hp, cfg=None):
    """Minimize the objective over ``alpha`` with ``w`` and ``b`` fixed.

    Uses a closed form for the squared loss without an L1 term and
    warm-started coordinate descent with active-set Newton steps otherwise.

    Raises
    ------
    ConvergenceError
        If the KKT residual is still above ``cfg.alpha_tol`` after
        ``cfg.alpha_max_iter`` rounds; the last iterate is attached as
        ``err.iterate``.
    """
    cfg = cfg or SolverConfig()
    alpha, _, res, iters, ok = _alpha_minimize(state, K, y, loss, hp, cfg.alpha_tol, cfg.alpha_max_iter)
    if not ok:
        raise ConvergenceError(
            f"alpha step did not reach KKT residual {cfg.alpha_tol:g} in {iters} rounds (residual {res:.3g})",
            iterate=alpha, residual=res, iterations=iters,
        )
    return alpha


def b_step(state, K, y, loss):
    """Best intercept for fixed ``w`` and ``alpha``."""
    _, alpha, b0 = _as_state_arrays(state)
    y = np.asarray(y, dtype=float)
    u = np.asarray(K, dtype=float) @ alpha
    if loss.kind == "squared":
        return float(np.mean(y - u))
    if np.all(y == y[0]):
        raise LabelError("b step needs both classes present for a margin loss")

    def h(b):
        return float(np.sum(loss_derivative(loss, y, u + b)))

    h0 = h(b0)
    if h0 == 0.0:
        return b0
    step = 1.0
    if h0 < 0:
        lo, hi = b0, b0 + step
        while h(hi) < 0:
            lo, hi, step = hi, hi + 2 * step, 2 * step
    else:
        lo, hi = b0 - step, b0
        while h(lo) > 0:
            lo, hi, step = lo - 2 * step, lo, 2 * step
    if h(hi) == 0.0:
        return hi
    if h(lo) == 0.0:
        return lo
    return float(brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def _pairwise(X, kernel, pairwise):
    if pairwise is not None:
        return pairwise
    if kernel is None:
        raise ValueError("either a KernelSpec or a PairwiseTerms instance is required")
    return PairwiseTerms(kernel, X)


def w_gradient(state, pw, y, loss, hp, K=None):
    """Gradient of the objective in ``w`` (through the kernel and the L1 term)."""
    w, alpha, b = _as_state_arrays(state)
    if K is None:
        K = pw.gram(w)
    A = pw.jacobian_product(w, alpha, K)
    lp = loss_derivative(loss, y, K @ alpha + b)
    return A.T @ lp / len(y) + hp.lambda2 + hp.lambda3 * (A.T @ alpha)


def w_projected_gradient_norm(state, pw, y, loss, hp, K=None):
    g = w_gradient(state, pw, y, loss, hp, K)
    w = np.asarray(state.w, dtype=float)
    return float(np.max(np.abs(w - np.clip(w - g, 0.0, 1.0)))) if w.size else 0.0


def w_step_qp(state, X, y, loss, hp, anchor=None, *, kernel=None, pairwise=None, cfg=None):
    """Minimize the linearized objective over ``w`` in ``[0, 1]^p``.

    The kernel response ``K_w alpha`` is replaced by its first-order
    expansion ``A w + c0`` around ``anchor`` (default ``state.w``); the
    quadratic penalty contributes ``lambda3 alpha' A w``.

    Raises
    ------
    ConvergenceError
        If the box-constrained solver exhausts ``cfg.w_max_sweeps``.
    """
    cfg = cfg or SolverConfig()
    pw = _pairwise(X, kernel, pairwise)
    _, alpha, b = _as_state_arrays(state)
    w0 = np.asarray(state.w if anchor is None else anchor, dtype=float)
    y = np.asarray(y, dtype=float)
    K0 = pw.gram(w0)
    A = pw.jacobian_product(w0, alpha, K0)
    c = K0 @ alpha - A @ w0 + b
    dlin = hp.lambda2 + hp.lambda3 * (A.T @ alpha)
    w, res, sweeps, ok = _cd.w_cd(
        np.ascontiguousarray(A.T), c, y, np.clip(w0, 0.0, 1.0), dlin,
        _cd.LOSS_CODES[loss.kind], loss.huber_delta, loss.curvature_bound, cfg.w_tol, cfg.w_max_sweeps,
    )
    if not ok:
        raise ConvergenceError(
            f"w step did not reach projected-gradient norm {cfg.w_tol:g} in {sweeps} sweeps (residual {res:.3g})",
            iterate=w, residual=res, iterations=sweeps,
        )
    return w


def _line_search(state, direction, pw, y, loss, hp, cfg, phi0=None, K0=None):
    w, alpha, b = _as_state_arrays(state)
    direction = np.asarray(direction, dtype=float)
    if K0 is None:
        K0 = pw.gram(w)
    if phi0 is None:
        phi0 = objective(state, K0, y, loss, hp)
    if not np.any(direction):
        return 0.0, w, K0, phi0
    slope = float(w_gradient(state, pw, y, loss, hp, K0) @ direction)
    if not slope < 0:
        return 0.0, w, K0, phi0
    s = 1.0
    for _ in range(cfg.line_search_max_halvings + 1):
        w_try = np.clip(w + s * direction, 0.0, 1.0)
        K_try = pw.gram(w_try)
        phi_try = objective(IterateState(w_try, alpha, b), K_try, y, loss, hp)
        if phi_try <= phi0 - cfg.armijo_c * s * abs(slope):
            return s, w_try, K_try, phi_try
        s *= 0.5
    return 0.0, w, K0, phi0


def line_search(state, direction, X, y, loss, hp, *, kernel=None, pairwise=None, cfg=None):
    """Armijo backtracking step along ``direction`` in ``w``.

    Starts at ``s = 1`` and halves until the true objective decreases by at
    least ``armijo_c * s * |slope|``. Returns 0 when ``direction`` is zero,
    is not a descent direction, or no acceptable step is found.
    """
    cfg = cfg or SolverConfig()
    pw = _pairwise(X, kernel, pairwise)
    return _line_search(state, direction, pw, np.asarray(y, dtype=float), loss, hp, cfg)[0]


def _check_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError(f"X must be a non-empty 2-D array, got shape {X.shape}")
    if y.ndim != 1 or len(y) != X.shape[0]:
        raise DimensionError(f"dimension mismatch: X has {X.shape[0]} rows, y has {y.size} entries",
                             lengths=(X.shape[0], y.size))
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("X and y must be finite")
    return X, y


class _Run:
    """Mutable bookkeeping for a single start."""

    def __init__(self, pw, y, loss, hp, cfg, w0):
        self.pw, self.y, self.loss, self.hp, self.cfg = pw, y, loss, hp, cfg
        n = len(y)
        self.state = IterateState(np.array(w0, dtype=float), np.zeros(n), 0.0)
        self.K = pw.gram(self.state.w)
        self.state.b = b_step(self.state, self.K, y, loss)
        self.phi = self._phi(self.state, self.K)
        self.trace = FitTrace(objective_per_iter=[self.phi])

    def _phi(self, state, K):
        try:
            phi = objective(state, K, self.y, self.loss, self.hp)
        except DataError as err:
            raise SolverError(f"objective became non-finite: {err}", trace=getattr(self, "trace", None)) from err
        if not np.isfinite(phi):
            raise SolverError("objective became non-finite", trace=getattr(self, "trace", None))
        return phi

    def _accept(self, state, K, phi):
        if phi <= self.phi:
            self.state, self.K, self.phi = state, K, phi
            return True
        return False

    def alpha_update(self):
        # for the squared loss this also sets b, which makes the b step a no-op
        alpha, b = _alpha_minimize(self.state, self.K, self.y, self.loss, self.hp,
                                   self.cfg.alpha_tol, self.cfg.alpha_fit_iter, joint_b=True)[:2]
        cand = IterateState(self.state.w, alpha, b)
        self._accept(cand, self.K, self._phi(cand, self.K))

    def b_update(self):
        b = b_step(self.state, self.K, self.y, self.loss)
        cand = IterateState(self.state.w, self.state.alpha, b)
        self._accept(cand, self.K, self._phi(cand, self.K))

    def _qp(self, anchor_state):
        try:
            return w_step_qp(anchor_state, None, self.y, self.loss, self.hp, pairwise=self.pw, cfg=self.cfg)
        except ConvergenceError as err:
            logger.debug("%s; using last iterate", err)
            return err.iterate

    def w_update(self):
        w_qp = self._qp(self.state)
        K_qp = self.pw.gram(w_qp)
        cand = IterateState(w_qp, self.state.alpha, self.state.b)
        if self._accept(cand, K_qp, self._phi(cand, K_qp)):
            self.trace.step_sizes.append(1.0)
            return
        # the linearized step overshot: search along surrogate directions instead
        self.trace.line_search_invocations += 1
        for it in range(self.cfg.inner_w_iters):
            if it > 0:
                w_qp = self._qp(self.state)
            s, w_new, K_new, phi_new = _line_search(
                self.state, w_qp - self.state.w, self.pw, self.y, self.loss, self.hp, self.cfg,
                phi0=self.phi, K0=self.K)
            self.trace.step_sizes.append(s)
            if s == 0.0:
                break
            moved = float(np.max(np.abs(w_new - self.state.w)))
            self._accept(IterateState(w_new, self.state.alpha, self.state.b), K_new, phi_new)
            if moved < self.cfg.tol_w:
                break

    def run(self):
        cfg = self.cfg
        for t in range(cfg.max_outer_iters):
            prev = self.phi
            self.alpha_update()
            self.b_update()
            if not cfg.freeze_w:
                self.w_update()
            self.trace.objective_per_iter.append(self.phi)
            self.trace.iters_used = t + 1
            if abs(prev - self.phi) < cfg.tol_objective:
                self.trace.converged = True
                break
        return self.state, self.trace


def fit_dosk(X, y, kernel, loss=None, hp=None, cfg=None, *, pairwise=None, w_init=None):
    """Fit ``(w, alpha, b)`` by alternating minimization.

    The first start uses ``w = 1``; additional starts (``cfg.n_starts``) draw
    ``w`` uniformly on the unit box from a generator seeded with
    ``cfg.seed``. The start with the smallest final objective is returned.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
        Real responses, or labels in {+1, -1} for margin losses.
    kernel : KernelSpec
    loss : LossSpec, optional
    hp : Hyperparams, optional
    cfg : SolverConfig, optional
    pairwise : PairwiseTerms, optional
        Precomputed pairwise terms of ``X`` under ``kernel``; lets callers
        share them across many fits on the same data.
    w_init : array of shape (p,), optional
        Initial weights for the first start instead of all ones.

    Returns
    -------
    state : IterateState
    trace : FitTrace
    """
    loss = loss or LossSpec()
    hp = hp or Hyperparams()
    cfg = cfg or SolverConfig()
    X, y = _check_inputs(X, y)
    n, p = X.shape
    pw = pairwise if pairwise is not None else PairwiseTerms(kernel, X)
    if pw.shape != (n, n) or pw.p != p:
        raise DimensionError("pairwise terms do not match X", lengths=(pw.shape, (n, n)))
    rng = np.random.default_rng(cfg.seed)
    best = None
    for start in range(cfg.n_starts):
        if start == 0:
            w0 = np.ones(p) if w_init is None else np.clip(np.asarray(w_init, dtype=float), 0.0, 1.0)
        else:
            w0 = rng.uniform(0.0, 1.0, size=p)
        state, trace = _Run(pw, y, loss, hp, cfg, w0).run()
        trace.start_index = start
        if best is None or trace.final_objective < best[1].final_objective:
            best = (state, trace)
    return best


def support(values, tol=SUPPORT_TOL):
    return np.flatnonzero(np.abs(np.asarray(values)) > tol)


__all__ = [
    "Hyperparams", "SolverConfig", "IterateState", "FitTrace", "objective", "alpha_step", "b_step",
    "w_step_qp", "line_search", "fit_dosk", "alpha_kkt_residual", "w_gradient",
    "w_projected_gradient_norm", "support",
]
