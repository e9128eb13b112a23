"""Fitted models, persistence, grid-search cross-validation and scikit-learn estimators."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.model_selection import KFold, StratifiedKFold
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DataError, DimensionError, LabelError, ModelFormatError
from .kernel import FAMILIES, KernelSpec, PairwiseTerms, gram_matrix, median_heuristic_gamma
from .loss import LossSpec
from .simdata import apply_ranges, column_ranges, mcr, mpe
from .solver import SUPPORT_TOL, Hyperparams, SolverConfig, fit_dosk

FORMAT_VERSION = 1
PENALTY_SCALES = ("sum", "mean")
_GAMMA_FAMILIES = ("gaussian", "laplacian")


def effective_hyperparams(hp, n, penalty_scale="sum"):
    """Penalties as seen by the mean-loss solver.

    With ``penalty_scale='sum'`` the penalties are read against the summed
    loss ``sum_i L``, so they are divided by ``n`` before solving. With
    ``'mean'`` they are passed through unchanged.
    """
    if penalty_scale not in PENALTY_SCALES:
        raise ValueError(f"penalty_scale must be one of {PENALTY_SCALES}, got {penalty_scale!r}")
    return hp.scaled(1.0 / n) if penalty_scale == "sum" else hp


@dataclass(frozen=True)
class SupportPoint:
    index: int
    x: tuple
    alpha: float


def _float_list(a):
    return [float(v) for v in np.ravel(a)]


@dataclass(eq=False)
class DoskModel:
    """A fitted double-sparsity kernel model.

    Only the training points with nonzero dual coefficient are kept, so
    prediction cost scales with the support size. Support coordinates are
    stored after scaling by ``standardizer``.

    Attributes
    ----------
    kernel : KernelSpec
    loss : LossSpec
    hyperparams : Hyperparams
        Penalties as supplied, before any ``penalty_scale`` conversion.
    penalty_scale : {'sum', 'mean'}
    n_train : int
    w_hat : ndarray of shape (p,)
    support_points : list of SupportPoint
    b_hat : float
    standardizer : ndarray of shape (p, 2)
        Per-column ``(min, max)``; rows of ``(0, 1)`` leave a column as is.
    trace_summary : dict
        ``objective``, ``iterations`` and ``converged`` of the final fit.
    """

    kernel: KernelSpec
    loss: LossSpec
    hyperparams: Hyperparams
    penalty_scale: str
    n_train: int
    w_hat: np.ndarray
    support_points: list
    b_hat: float
    standardizer: np.ndarray
    trace_summary: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.w_hat)

    @property
    def support_X(self):
        if not self.support_points:
            return np.empty((0, self.n_features))
        return np.array([sp.x for sp in self.support_points], dtype=float)

    @property
    def support_alpha(self):
        return np.array([sp.alpha for sp in self.support_points], dtype=float)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "kernel": self.kernel.to_dict(),
            "loss": self.loss.to_dict(),
            "lambda": {**self.hyperparams.to_dict(), "penalty_scale": self.penalty_scale,
                       "n_train": int(self.n_train)},
            "w_hat": _float_list(self.w_hat),
            "support": [{"index": int(sp.index), "x": _float_list(sp.x), "alpha": float(sp.alpha)}
                        for sp in self.support_points],
            "b_hat": float(self.b_hat),
            "standardizer": [_float_list(r) for r in np.asarray(self.standardizer)],
            "trace_summary": {
                "objective": float(self.trace_summary.get("objective", math.nan)),
                "iterations": int(self.trace_summary.get("iterations", 0)),
                "converged": bool(self.trace_summary.get("converged", False)),
            },
        }

    def __eq__(self, other):
        if not isinstance(other, DoskModel):
            return NotImplemented
        return json.dumps(self.to_dict()) == json.dumps(other.to_dict())


def build_model(state, trace, X_scaled, kernel, loss, hp, penalty_scale, standardizer):
    keep = np.flatnonzero(np.abs(state.alpha) > SUPPORT_TOL)
    points = [SupportPoint(int(i), tuple(float(v) for v in X_scaled[i]), float(state.alpha[i])) for i in keep]
    return DoskModel(
        kernel=kernel, loss=loss, hyperparams=hp, penalty_scale=penalty_scale,
        n_train=X_scaled.shape[0], w_hat=np.array(state.w, dtype=float), support_points=points,
        b_hat=float(state.b), standardizer=np.asarray(standardizer, dtype=float),
        trace_summary={"objective": trace.final_objective, "iterations": trace.iters_used,
                       "converged": trace.converged},
    )


def identity_ranges(p):
    return np.column_stack([np.zeros(p), np.ones(p)])


def fit_model(X, y, kernel, loss=None, hp=None, cfg=None, *, standardize=True, penalty_scale="sum"):
    """Fit on raw ``X`` and package the result.

    Returns
    -------
    model : DoskModel
    trace : FitTrace
    """
    loss = loss or LossSpec()
    hp = hp or Hyperparams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ranges = column_ranges(X) if standardize else identity_ranges(X.shape[1])
    Xs = apply_ranges(X, ranges)
    state, trace = fit_dosk(Xs, y, kernel, loss, effective_hyperparams(hp, len(Xs), penalty_scale), cfg)
    return build_model(state, trace, Xs, kernel, loss, hp, penalty_scale, ranges), trace


def decision_values(model, X_new):
    """``sum_j alpha_j K_w(x_j, x) + b`` over the support points, for each row of ``X_new``."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if X_new.shape[1] != model.n_features:
        raise DimensionError(f"dimension mismatch: X_new has {X_new.shape[1]} columns, model expects "
                             f"{model.n_features}", lengths=(X_new.shape[1], model.n_features))
    if not model.support_points:
        return np.full(X_new.shape[0], float(model.b_hat))
    Xs = apply_ranges(X_new, model.standardizer)
    K = gram_matrix(model.kernel, model.w_hat, Xs, model.support_X)
    return K @ model.support_alpha + model.b_hat


predict = decision_values


def selected_variables(model, tol=SUPPORT_TOL):
    return {int(j) for j in np.flatnonzero(np.asarray(model.w_hat) > tol)}


def selected_points(model, tol=SUPPORT_TOL):
    return {int(sp.index) for sp in model.support_points if abs(sp.alpha) > tol}


# persistence


def model_to_json(model):
    return json.dumps(model.to_dict(), indent=2) + "\n"


def save_model(model, path):
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def _field(d, name, kind=None):
    if not isinstance(d, dict) or name not in d:
        raise ModelFormatError(f"model file is missing field {name!r}", field=name)
    v = d[name]
    if kind is not None and not isinstance(v, kind):
        raise ModelFormatError(f"model field {name!r} has the wrong type", field=name)
    return v


def _floats(v, name):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError) as err:
        raise ModelFormatError(f"model field {name!r} must hold numbers", field=name) from err
    if not np.all(np.isfinite(a)):
        raise ModelFormatError(f"model field {name!r} holds non-finite numbers", field=name)
    return a


def model_from_dict(d):
    if not isinstance(d, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = _field(d, "format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {version!r}, expected {FORMAT_VERSION}",
                               field="format_version")
    try:
        kernel = KernelSpec.from_dict(_field(d, "kernel", dict))
    except (TypeError, ValueError) as err:
        raise ModelFormatError(f"invalid kernel: {err}", field="kernel") from err
    try:
        loss = LossSpec.from_dict(_field(d, "loss", dict))
    except (TypeError, ValueError) as err:
        raise ModelFormatError(f"invalid loss: {err}", field="loss") from err
    lam = _field(d, "lambda", dict)
    hp = Hyperparams(*(float(_floats(_field(lam, k), k)) for k in ("lambda1", "lambda2", "lambda3")))
    penalty_scale = _field(lam, "penalty_scale", str)
    if penalty_scale not in PENALTY_SCALES:
        raise ModelFormatError(f"invalid penalty_scale {penalty_scale!r}", field="penalty_scale")
    n_train = _field(lam, "n_train", int)
    w_hat = _floats(_field(d, "w_hat", list), "w_hat")
    if w_hat.ndim != 1 or np.any(w_hat < 0) or np.any(w_hat > 1):
        raise ModelFormatError("w_hat must be a list of weights in [0, 1]", field="w_hat")
    p = len(w_hat)
    points = []
    for sp in _field(d, "support", list):
        x = _floats(_field(sp, "x", list), "x")
        if x.shape != (p,):
            raise ModelFormatError(f"support point has {x.size} coordinates, expected {p}", field="x")
        alpha = float(_floats(_field(sp, "alpha"), "alpha"))
        if not abs(alpha) > SUPPORT_TOL:
            raise ModelFormatError("support point with zero alpha", field="alpha")
        points.append(SupportPoint(int(_field(sp, "index", int)), tuple(float(v) for v in x), alpha))
    b_hat = float(_floats(_field(d, "b_hat"), "b_hat"))
    standardizer = _floats(_field(d, "standardizer", list), "standardizer")
    if standardizer.shape != (p, 2):
        raise ModelFormatError(f"standardizer must hold {p} (min, max) pairs", field="standardizer")
    ts = _field(d, "trace_summary", dict)
    trace_summary = {
        "objective": float(_field(ts, "objective")),
        "iterations": int(_field(ts, "iterations", int)),
        "converged": bool(_field(ts, "converged", bool)),
    }
    return DoskModel(kernel, loss, hp, penalty_scale, n_train, w_hat, points, b_hat, standardizer,
                     trace_summary)


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ModelFormatError(f"cannot read model file {path}: {err}") from err
    try:
        d = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelFormatError(f"model file is not valid JSON: {err}") from err
    return model_from_dict(d)


# cross-validation


@dataclass(frozen=True)
class CvGrid:
    """Candidate values searched by :func:`cross_validate`."""

    lambda1_candidates: tuple = (0.0, 0.25, 0.5)
    lambda2_candidates: tuple = tuple(2.0**i for i in range(-3, 4))
    gamma_candidates: tuple = tuple(round(0.1 * i, 1) for i in range(1, 11))
    lambda3_fixed: float = 0.5
    folds: int = 5

    def __post_init__(self):
        for name in ("lambda1_candidates", "lambda2_candidates", "gamma_candidates"):
            vals = tuple(sorted({float(v) for v in getattr(self, name)}))
            if not vals:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        if int(self.folds) < 2:
            raise ValueError(f"folds must be at least 2, got {self.folds}")
        object.__setattr__(self, "folds", int(self.folds))

    @property
    def n_cells(self):
        return len(self.lambda1_candidates) * len(self.lambda2_candidates) * len(self.gamma_candidates)


@dataclass(frozen=True)
class CvRow:
    lambda1: float
    lambda2: float
    lambda3: float
    gamma: float
    cv_error: float
    fold_errors: tuple


@dataclass
class CvResult:
    best: CvRow
    table: list

    def best_params(self):
        b = self.best
        return {"lambda1": b.lambda1, "lambda2": b.lambda2, "lambda3": b.lambda3, "gamma": b.gamma,
                "cv_error": b.cv_error}


def _splits(X, y, folds, classification, seed):
    n = len(y)
    if n < folds:
        raise DataError(f"need at least {folds} observations for {folds}-fold cross-validation, got {n}")
    rs = int(seed) % 2**32
    if not classification:
        return list(KFold(folds, shuffle=True, random_state=rs).split(X))
    _, counts = np.unique(y, return_counts=True)
    if len(counts) < 2 or counts.min() < folds:
        raise DataError(f"cannot stratify {folds} folds: class counts {counts.tolist()}")
    splits = list(StratifiedKFold(folds, shuffle=True, random_state=rs).split(X, y))
    for train, _ in splits:
        if len(np.unique(y[train])) < 2:
            raise DataError("a training fold is missing a class")
    return splits


def _fold_errors(pw, X_tr, y_tr, X_te, y_te, family, kernel_kwargs, gamma, loss, grid, cfg, penalty_scale,
                 metric):
    kernel = KernelSpec(family, gamma=gamma, **kernel_kwargs)
    pw = pw.with_spec(kernel)
    out = {}
    for l1 in grid.lambda1_candidates:
        for l2 in grid.lambda2_candidates:
            hp = effective_hyperparams(Hyperparams(l1, l2, grid.lambda3_fixed), len(y_tr), penalty_scale)
            state, _ = fit_dosk(X_tr, y_tr, kernel, loss, hp, cfg, pairwise=pw)
            keep = np.abs(state.alpha) > SUPPORT_TOL
            f = gram_matrix(kernel, state.w, X_te, X_tr[keep]) @ state.alpha[keep] + state.b
            out[(l1, l2)] = metric(f, y_te)
    return out


def _tie_key(row):
    # smaller error, then sparser: larger lambda1, larger lambda2, smaller gamma
    return (row.cv_error, -row.lambda1, -row.lambda2, row.gamma)


def cross_validate(X, y, family, loss=None, grid=None, cfg=None, seed=0, *, penalty_scale="sum",
                   kernel_kwargs=None, n_jobs=1):
    """K-fold grid search over ``(lambda1, lambda2, gamma)`` with ``lambda3`` fixed.

    ``X`` is used as given (scale it beforehand if needed). Classification
    uses stratified folds and misclassification rate; regression uses mean
    squared error. Ties go to the larger ``lambda1``, then the larger
    ``lambda2``, then the smaller ``gamma``.

    Returns
    -------
    CvResult
        The chosen cell and one row per grid cell, ordered by
        ``(gamma, lambda1, lambda2)``.
    """
    loss = loss or LossSpec()
    grid = grid or CvGrid()
    cfg = cfg or SolverConfig()
    kernel_kwargs = dict(kernel_kwargs or {})
    if family not in FAMILIES:
        family = KernelSpec(family).family
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        raise DimensionError(f"dimension mismatch: X has {X.shape[0]} rows, y has {len(y)}",
                             lengths=(X.shape[0], len(y)))
    classification = loss.is_margin
    if classification and not np.all(np.isin(y, (-1.0, 1.0))):
        raise LabelError("classification labels must be +1 or -1")
    metric = mcr if classification else mpe
    gammas = grid.gamma_candidates if family in _GAMMA_FAMILIES else (grid.gamma_candidates[0],)
    splits = _splits(X, y, grid.folds, classification, seed)
    base = [PairwiseTerms(KernelSpec(family, gamma=gammas[0], **kernel_kwargs), X[tr]) for tr, _ in splits]
    tasks = [(k, g) for k in range(len(splits)) for g in gammas]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_fold_errors)(base[k], X[splits[k][0]], y[splits[k][0]], X[splits[k][1]], y[splits[k][1]],
                              family, kernel_kwargs, g, loss, grid, cfg, penalty_scale, metric)
        for k, g in tasks
    )
    by_task = dict(zip(tasks, results))
    table = []
    for g in gammas:
        for l1 in grid.lambda1_candidates:
            for l2 in grid.lambda2_candidates:
                errs = tuple(by_task[(k, g)][(l1, l2)] for k in range(len(splits)))
                table.append(CvRow(l1, l2, grid.lambda3_fixed, g, float(np.mean(errs)), errs))
    return CvResult(best=min(table, key=_tie_key), table=table)


# scikit-learn estimators


class _DoskEstimator(BaseEstimator):
    _loss_default = "squared"

    def _kernel(self, Xs):
        gamma = self.gamma
        if isinstance(gamma, str):
            if gamma != "median":
                raise ValueError(f"gamma must be a number or 'median', got {gamma!r}")
            gamma = median_heuristic_gamma(Xs)
        return KernelSpec(self.kernel, gamma=gamma, offset_c=self.coef0, degree_d=self.degree)

    def _config(self):
        return SolverConfig(max_outer_iters=self.max_outer_iters, tol_objective=self.tol, n_starts=self.n_starts,
                            seed=self.random_state, freeze_w=self.freeze_w)

    def _fit_pm1(self, X, y):
        ranges = column_ranges(X) if self.standardize else identity_ranges(X.shape[1])
        Xs = apply_ranges(X, ranges)
        kernel = self._kernel(Xs)
        loss = LossSpec(self.loss if self.loss is not None else self._loss_default)
        hp = Hyperparams(self.lambda1, self.lambda2, self.lambda3)
        state, trace = fit_dosk(Xs, y, kernel, loss, effective_hyperparams(hp, len(y), self.penalty_scale),
                                self._config())
        self.model_ = build_model(state, trace, Xs, kernel, loss, hp, self.penalty_scale, ranges)
        self.trace_ = trace
        self.w_ = self.model_.w_hat
        self.support_ = np.array(sorted(selected_points(self.model_)), dtype=int)
        self.dual_coef_ = self.model_.support_alpha
        self.intercept_ = self.model_.b_hat
        self.selected_variables_ = np.array(sorted(selected_variables(self.model_)), dtype=int)
        self.objective_ = trace.final_objective
        self.n_iter_ = trace.iters_used
        self.converged_ = trace.converged
        self.n_features_in_ = X.shape[1]
        return self

    def _decision(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"X has {X.shape[1]} features, expected {self.n_features_in_}",
                                 lengths=(X.shape[1], self.n_features_in_))
        return decision_values(self.model_, X)


class DOSKRegressor(RegressorMixin, _DoskEstimator):
    """Kernel regression with sparse predictor weights and sparse dual coefficients.

    Parameters
    ----------
    kernel : {'gaussian', 'laplacian', 'linear', 'polynomial'}, default='gaussian'
    gamma : float or 'median', default=1.0
        Kernel scale; ``'median'`` uses ``1 / (2 sigma^2)`` with ``sigma`` the
        median pairwise distance of the (scaled) training data.
    lambda1 : float, default=0.0
        L1 penalty on the dual coefficients (drops training points).
    lambda2 : float, default=0.0
        L1 penalty on the predictor weights (drops predictors).
    lambda3 : float, default=0.5
        RKHS norm penalty.
    penalty_scale : {'sum', 'mean'}, default='sum'
        Whether penalties are measured against the summed or the averaged loss.
    standardize : bool, default=True
        Min-max scale each column to ``[0, 1]`` with training ranges.
    freeze_w : bool, default=False
        Keep all predictor weights at 1.
    loss : str, default='squared'
    degree, coef0 : polynomial kernel degree and offset.
    n_starts : int, default=1
        Extra starts draw random weights; the lowest objective wins.
    random_state : int, default=0
    max_outer_iters : int, default=300
    tol : float, default=1e-3
        Stop when the objective changes by less than this between iterations.
    """

    def __init__(self, kernel="gaussian", gamma=1.0, lambda1=0.0, lambda2=0.0, lambda3=0.5, penalty_scale="sum",
                 standardize=True, freeze_w=False, loss="squared", degree=2, coef0=1.0, n_starts=1,
                 random_state=0, max_outer_iters=300, tol=1e-3):
        self.kernel = kernel
        self.gamma = gamma
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.penalty_scale = penalty_scale
        self.standardize = standardize
        self.freeze_w = freeze_w
        self.loss = loss
        self.degree = degree
        self.coef0 = coef0
        self.n_starts = n_starts
        self.random_state = random_state
        self.max_outer_iters = max_outer_iters
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        return self._fit_pm1(X, y)

    def predict(self, X):
        return self._decision(X)


class DOSKClassifier(ClassifierMixin, _DoskEstimator):
    """Binary kernel classifier with sparse predictor weights and sparse dual coefficients.

    Takes the same parameters as :class:`DOSKRegressor`; ``loss`` defaults
    to the huberized hinge (``'hinge'``) and may be ``'deviance'``. Labels
    may be any two values; ``classes_[1]`` is the positive class.
    """

    _loss_default = "hinge"

    def __init__(self, kernel="gaussian", gamma=1.0, lambda1=0.0, lambda2=0.0, lambda3=0.5, penalty_scale="sum",
                 standardize=True, freeze_w=False, loss="hinge", degree=2, coef0=1.0, n_starts=1,
                 random_state=0, max_outer_iters=300, tol=1e-3):
        self.kernel = kernel
        self.gamma = gamma
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.penalty_scale = penalty_scale
        self.standardize = standardize
        self.freeze_w = freeze_w
        self.loss = loss
        self.degree = degree
        self.coef0 = coef0
        self.n_starts = n_starts
        self.random_state = random_state
        self.max_outer_iters = max_outer_iters
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise LabelError(f"need exactly two classes, got {len(self.classes_)}")
        if not LossSpec(self.loss).is_margin:
            raise ValueError(f"classification needs a margin loss, got {self.loss!r}")
        return self._fit_pm1(X, np.where(y == self.classes_[1], 1.0, -1.0))

    def decision_function(self, X):
        return self._decision(X)

    def predict(self, X):
        return self.classes_[(self._decision(X) >= 0.0).astype(int)]
