"""Variable-weighted kernels.

A weight vector ``w`` in ``[0, 1]^p`` rescales every coordinate before the
base kernel is applied, ``K_w(x1, x2) = K(w * x1, w * x2)``. A zero weight
removes the corresponding predictor from the kernel entirely.

Gram matrices and their derivatives in ``w`` are computed from a per-pair,
per-coordinate tensor that does not depend on ``w`` (see
:class:`PairwiseTerms`), so the solver can re-evaluate the gram matrix at a
new ``w`` with one tensor-vector product.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import DimensionError

FAMILIES = ("linear", "polynomial", "gaussian", "laplacian")
_ALIASES = {"poly": "polynomial", "rbf": "gaussian", "laplace": "laplacian"}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and its hyperparameters.

    Parameters
    ----------
    family : {'linear', 'polynomial', 'gaussian', 'laplacian'}
    gamma : float
        Scale of the exponent for the Gaussian and Laplacian families.
    offset_c : float
        Additive constant of the polynomial kernel.
    degree_d : int
        Degree of the polynomial kernel.
    """

    family: str = "gaussian"
    gamma: float = 1.0
    offset_c: float = 1.0
    degree_d: int = 2

    def __post_init__(self):
        family = _ALIASES.get(str(self.family).lower(), str(self.family).lower())
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        if family in ("gaussian", "laplacian") and not self.gamma > 0:
            raise ValueError(f"gamma must be positive for the {family} kernel, got {self.gamma}")
        if family == "polynomial" and (int(self.degree_d) != self.degree_d or self.degree_d < 1):
            raise ValueError(f"degree_d must be a positive integer, got {self.degree_d}")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "offset_c", float(self.offset_c))
        object.__setattr__(self, "degree_d", int(self.degree_d))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Linearization:
    """First-order expansion of ``K_w @ alpha`` around ``anchor_w``.

    ``A @ w1 + B @ alpha`` approximates ``K_{w1} @ alpha`` and is exact at
    ``w1 = anchor_w``.
    """

    A: np.ndarray
    B: np.ndarray
    anchor_w: np.ndarray

    def predict(self, w, alpha):
        return self.A @ w + self.B @ alpha


def _check_pair(w, x1, x2):
    w = np.asarray(w, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if not (w.ndim == x1.ndim == x2.ndim == 1) or not (len(w) == len(x1) == len(x2)):
        raise DimensionError(
            f"dimension mismatch: len(w)={w.size}, len(x1)={x1.size}, len(x2)={x2.size}",
            lengths=(w.size, x1.size, x2.size),
        )
    return w, x1, x2


def eval_weighted_kernel(spec, w, x1, x2):
    """Evaluate ``K_w(x1, x2)`` for a single pair of points."""
    w, x1, x2 = _check_pair(w, x1, x2)
    if spec.family == "linear":
        return float(np.sum(w**2 * x1 * x2))
    if spec.family == "polynomial":
        return float((spec.offset_c + np.sum(w**2 * x1 * x2)) ** spec.degree_d)
    diff = w * x1 - w * x2
    if spec.family == "gaussian":
        return float(np.exp(-spec.gamma * np.sum(diff**2)))
    return float(np.exp(-spec.gamma * np.sum(np.abs(diff))))


def kernel_gradient(spec, w, x1, x2):
    """Gradient of ``K_w(x1, x2)`` with respect to ``w``.

    For the Laplacian family the partial derivative in ``w_k`` is taken to be
    zero wherever ``w_k * |x1_k - x2_k| == 0``.
    """
    w, x1, x2 = _check_pair(w, x1, x2)
    if spec.family == "linear":
        return 2.0 * w * x1 * x2
    if spec.family == "polynomial":
        s = np.sum(w**2 * x1 * x2)
        d = spec.degree_d
        return d * (spec.offset_c + s) ** (d - 1) * 2.0 * w * x1 * x2
    k = eval_weighted_kernel(spec, w, x1, x2)
    if spec.family == "gaussian":
        return -2.0 * spec.gamma * w * (x1 - x2) ** 2 * k
    diff = x1 - x2
    # d|w d|/dw = sign(w d) d, and sign(0) = 0 gives the subgradient choice
    return -spec.gamma * np.sign(w * diff) * diff * k


class PairwiseTerms:
    """Per-pair, per-coordinate terms of a weighted kernel between two point sets.

    ``T[i, j, k]`` holds the part of the kernel exponent (or inner product)
    contributed by coordinate ``k`` before weighting:

    * linear / polynomial: ``x1[i, k] * x2[j, k]`` (weighted by ``w_k**2``)
    * gaussian: ``(x1[i, k] - x2[j, k])**2`` (weighted by ``w_k**2``)
    * laplacian: ``|x1[i, k] - x2[j, k]|`` (weighted by ``w_k``)
    """

    def __init__(self, spec, X1, X2=None):
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        X2 = X1 if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
        if X1.shape[1] != X2.shape[1]:
            raise DimensionError(
                f"dimension mismatch: X1 has {X1.shape[1]} columns, X2 has {X2.shape[1]}",
                lengths=(X1.shape[1], X2.shape[1]),
            )
        self.spec = spec
        self.shape = (X1.shape[0], X2.shape[0])
        self.p = X1.shape[1]
        if spec.family in ("linear", "polynomial"):
            T = X1[:, None, :] * X2[None, :, :]
        else:
            T = X1[:, None, :] - X2[None, :, :]
            T = T**2 if spec.family == "gaussian" else np.abs(T)
        self.T = np.ascontiguousarray(T)

    def with_spec(self, spec):
        """Same points under another kernel of the same family, sharing ``T``."""
        if spec.family != self.spec.family:
            raise ValueError(f"cannot reuse {self.spec.family} terms for a {spec.family} kernel")
        other = object.__new__(PairwiseTerms)
        other.__dict__.update(self.__dict__)
        other.spec = spec
        return other

    def _check_w(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.p,):
            raise DimensionError(
                f"dimension mismatch: len(w)={w.size}, expected {self.p}",
                lengths=(w.size, self.p),
            )
        return w

    def _inner(self, w):
        # T @ v where v is w**2 or w; zero weights contribute exact zeros
        v = w if self.spec.family == "laplacian" else w**2
        return self.T @ v

    def gram(self, w):
        w = self._check_w(w)
        s = self._inner(w)
        spec = self.spec
        if spec.family == "linear":
            return s
        if spec.family == "polynomial":
            return (spec.offset_c + s) ** spec.degree_d
        return np.exp(-spec.gamma * s)

    def _outer_factor(self, w, K):
        """Return (M, scale) with dK_ij/dw_k = M_ij * scale_k * T_ijk."""
        spec = self.spec
        if spec.family == "linear":
            return np.ones(self.shape), 2.0 * w
        if spec.family == "polynomial":
            s = self._inner(w)
            return spec.degree_d * (spec.offset_c + s) ** (spec.degree_d - 1), 2.0 * w
        if spec.family == "gaussian":
            return K, -2.0 * spec.gamma * w
        return K, -spec.gamma * np.sign(w)

    def gradient_tensor(self, w, K=None):
        """Full ``(n1, n2, p)`` tensor of kernel gradients in ``w``."""
        w = self._check_w(w)
        if K is None:
            K = self.gram(w)
        M, scale = self._outer_factor(w, K)
        return M[:, :, None] * self.T * scale

    def jacobian_product(self, w, alpha, K=None):
        """``A[i, k] = sum_j alpha_j dK_w(x_i, x_j)/dw_k`` without forming the full tensor."""
        w = self._check_w(w)
        if K is None:
            K = self.gram(w)
        M, scale = self._outer_factor(w, K)
        Ma = M * np.asarray(alpha, dtype=float)[None, :]
        return np.matmul(Ma[:, None, :], self.T)[:, 0, :] * scale


def gram_matrix(spec, w, X, X2=None):
    """Weighted gram matrix between the rows of ``X`` (and ``X2`` if given)."""
    return PairwiseTerms(spec, X, X2).gram(w)


def linearize(spec, w0, alpha, X, pairwise=None):
    """Build the local linear model of ``w -> K_w @ alpha`` anchored at ``w0``.

    Returns a :class:`Linearization` with ``A`` of shape ``(n, p)`` and ``B``
    of shape ``(n, n)``.
    """
    pw = pairwise if pairwise is not None else PairwiseTerms(spec, X)
    w0 = pw._check_w(w0)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (pw.shape[1],):
        raise DimensionError(
            f"dimension mismatch: len(alpha)={alpha.size}, expected {pw.shape[1]}",
            lengths=(alpha.size, pw.shape[1]),
        )
    K = pw.gram(w0)
    G = pw.gradient_tensor(w0, K)
    A = np.einsum("ijk,j->ik", G, alpha)
    B = K - G @ w0
    return Linearization(A=A, B=B, anchor_w=w0.copy())


def median_heuristic_gamma(X):
    """``1 / (2 sigma^2)`` with ``sigma`` the median pairwise Euclidean distance."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        return 1.0
    sigma = float(np.median(pdist(X)))
    if sigma == 0.0:
        return 1.0
    return 1.0 / (2.0 * sigma**2)
