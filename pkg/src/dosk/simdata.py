"""Simulated designs, CSV ingestion, min-max scaling and evaluation metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError, DimensionError, LabelError

REGRESSION = "regression"
CLASSIFICATION = "classification"

MAX_REJECTION_ATTEMPTS = 10**6
NOISE_VARIANCE = 0.1


@dataclass
class Dataset:
    """Design matrix, response and (for simulated data) the true signal mask.

    Attributes
    ----------
    X : ndarray of shape (n, p)
    y : ndarray of shape (n,)
    signal_mask : ndarray of bool, shape (p,), or None
        True for predictors that actually drive the response.
    task : {'regression', 'classification'}
    feature_names : list of str, optional
    """

    X: np.ndarray
    y: np.ndarray
    signal_mask: np.ndarray | None = None
    task: str = REGRESSION
    feature_names: list | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"task must be {REGRESSION!r} or {CLASSIFICATION!r}, got {self.task!r}")
        if len(self.y) != self.X.shape[0]:
            raise DimensionError(f"dimension mismatch: X has {self.X.shape[0]} rows, y has {len(self.y)}",
                                 lengths=(self.X.shape[0], len(self.y)))
        if self.signal_mask is not None:
            self.signal_mask = np.asarray(self.signal_mask, dtype=bool)
            if self.signal_mask.shape != (self.X.shape[1],):
                raise DimensionError(
                    f"signal_mask has length {self.signal_mask.size}, expected {self.X.shape[1]}",
                    lengths=(self.signal_mask.size, self.X.shape[1]),
                )
        if self.task == CLASSIFICATION and not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise LabelError("classification labels must be +1 or -1")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def p0(self):
        """Number of noise predictors."""
        return None if self.signal_mask is None else int(np.sum(~self.signal_mask))


@dataclass(frozen=True)
class SelectionRates:
    """``tp_rate``: share of signal predictors selected.
    ``fn_rate``: share of noise predictors selected.
    """

    tp_rate: float
    fn_rate: float


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def regression1_mean(X):
    x1 = np.asarray(X, dtype=float)[..., 0]
    return 10.0 * np.sin(x1) * ((x1 > 0.0) & (x1 < 2.0 * np.pi))


def regression2_mean(X):
    return 10.0 * np.sum(np.exp(-np.asarray(X, dtype=float)[..., :4] ** 2), axis=-1)


def gen_regression1(n, p0, seed=None):
    """One informative predictor: ``y = 10 sin(x1) 1{0 < x1 < 2 pi} + N(0, 1)``.

    All ``1 + p0`` predictors are uniform on ``[-2 pi, 4 pi]``.
    """
    if n < 1 or p0 < 0:
        raise ValueError("need n >= 1 and p0 >= 0")
    rng = _rng(seed)
    X = rng.uniform(-2.0 * np.pi, 4.0 * np.pi, size=(n, 1 + p0))
    y = regression1_mean(X) + rng.standard_normal(n)
    mask = np.r_[True, np.zeros(p0, dtype=bool)]
    return Dataset(X, y, mask, REGRESSION)


def gen_regression2(n, p0, seed=None):
    """Four informative predictors: ``y = 10 sum_{j<=4} exp(-x_j^2) + N(0, 1)``, x uniform on ``[-6, 6]``."""
    if n < 1 or p0 < 0:
        raise ValueError("need n >= 1 and p0 >= 0")
    rng = _rng(seed)
    X = rng.uniform(-6.0, 6.0, size=(n, 4 + p0))
    y = regression2_mean(X) + rng.standard_normal(n)
    mask = np.r_[np.ones(4, dtype=bool), np.zeros(p0, dtype=bool)]
    return Dataset(X, y, mask, REGRESSION)


def sample_shell(rng, m, d, lo=9.0, hi=16.0):
    """Rejection-sample ``m`` standard normal points with ``lo < |x|^2 < hi``.

    Returns the points, the number of accepted draws and the number of
    draws made (surplus accepted draws in the last batch are discarded).
    """
    out = np.empty((m, d))
    filled = accepted = attempts = 0
    while filled < m:
        batch = min(max(64, 4 * (m - filled)), MAX_REJECTION_ATTEMPTS - attempts)
        if batch <= 0:
            raise DataError(f"rejection sampler exceeded {MAX_REJECTION_ATTEMPTS} attempts")
        z = rng.standard_normal((batch, d))
        attempts += batch
        r2 = np.einsum("ij,ij->i", z, z)
        hits = z[(r2 > lo) & (r2 < hi)]
        accepted += len(hits)
        keep = hits[: m - filled]
        out[filled:filled + len(keep)] = keep
        filled += len(keep)
    return out, accepted, attempts


def gen_classification(n, signal_dim, p0, seed=None):
    """Balanced two-class design on ``signal_dim`` informative coordinates.

    Class +1 is standard normal; class -1 is standard normal conditioned on
    ``9 < |x|^2 < 16``. The ``p0`` noise coordinates are normal with
    variance 0.1 in both classes. Rows are shuffled.
    """
    if signal_dim not in (2, 4):
        raise ValueError(f"signal_dim must be 2 or 4, got {signal_dim}")
    if n < 2 or n % 2 or p0 < 0:
        raise ValueError("need an even n >= 2 and p0 >= 0")
    rng = _rng(seed)
    m = n // 2
    pos = rng.standard_normal((m, signal_dim))
    neg, _, _ = sample_shell(rng, m, signal_dim)
    noise = rng.normal(0.0, np.sqrt(NOISE_VARIANCE), size=(n, p0))
    X = np.hstack([np.vstack([pos, neg]), noise])
    y = np.r_[np.ones(m), -np.ones(m)]
    order = rng.permutation(n)
    mask = np.r_[np.ones(signal_dim, dtype=bool), np.zeros(p0, dtype=bool)]
    return Dataset(X[order], y[order], mask, CLASSIFICATION)


def column_ranges(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise DataError("cannot standardize an empty matrix")
    return np.column_stack([X.min(axis=0), X.max(axis=0)])


def apply_ranges(X, ranges):
    """Min-max scale ``X`` with per-column ``(min, max)`` pairs; constant columns map to 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ranges = np.asarray(ranges, dtype=float)
    if X.shape[1] != ranges.shape[0]:
        raise DimensionError(f"dimension mismatch: X has {X.shape[1]} columns, expected {ranges.shape[0]}",
                             lengths=(X.shape[1], ranges.shape[0]))
    lo, hi = ranges[:, 0], ranges[:, 1]
    span = hi - lo
    flat = span == 0
    out = (X - lo) / np.where(flat, 1.0, span)
    out[:, flat] = 0.0
    return out


def standardize(X_train, *others):
    """Scale columns to ``[0, 1]`` using training minima and maxima.

    Returns the scaled training matrix, the scaled ``others`` (which may fall
    outside ``[0, 1]``) and the ``(p, 2)`` array of ``(min, max)`` pairs.
    """
    ranges = column_ranges(X_train)
    scaled = [apply_ranges(X_train, ranges)] + [apply_ranges(Z, ranges) for Z in others]
    return (*scaled, ranges)


def _pair(pred, y):
    pred = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if pred.shape != y.shape:
        raise DimensionError(f"length mismatch: {pred.size} predictions, {y.size} targets",
                             lengths=(pred.size, y.size))
    if pred.size == 0:
        raise DataError("no predictions to score")
    return pred, y


def mpe(pred, y):
    """Mean squared prediction error."""
    pred, y = _pair(pred, y)
    return float(np.mean((pred - y) ** 2))


def mcr(pred, y):
    """Share of labels that disagree with ``sign(pred)``; a zero score counts as +1."""
    pred, y = _pair(pred, y)
    return float(np.mean(np.where(pred >= 0.0, 1.0, -1.0) != y))


def selection_rates(selected, mask):
    mask = np.asarray(mask, dtype=bool)
    chosen = np.zeros(mask.size, dtype=bool)
    idx = np.fromiter((int(i) for i in selected), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= mask.size):
        raise DimensionError(f"selected index out of range for {mask.size} predictors")
    chosen[idx] = True
    n_signal = int(mask.sum())
    n_noise = mask.size - n_signal
    tp = np.sum(chosen & mask) / n_signal if n_signal else 0.0
    fn = np.sum(chosen & ~mask) / n_noise if n_noise else 0.0
    return SelectionRates(float(tp), float(fn))


def read_table(path):
    """Header and numeric body of a headed CSV file."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path} has no data rows")
    if any(len(r) != len(header) for r in body):
        raise DataError(f"{path}: rows do not match the header width")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as err:
        raise DataError(f"non-numeric value in {path}: {err}") from err
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path} contains non-finite values")
    return header, data


def read_csv(path, label, task=REGRESSION):
    """Load a headed CSV; ``label`` names the response column, the rest are predictors."""
    header, data = read_table(path)
    if label is None or label not in header:
        raise DataError(f"label column not found: {label!r}")
    j = header.index(label)
    y = data[:, j]
    X = np.delete(data, j, axis=1)
    names = header[:j] + header[j + 1:]
    if task == CLASSIFICATION and not np.all(np.isin(y, (-1.0, 1.0))):
        raise LabelError(f"label column {label!r} must hold +1/-1 for classification")
    return Dataset(X, y, None, task, names)


def write_csv(dataset, path, label="y"):
    """Write predictors then the response; a ``signal`` sidecar JSON is written if the mask is known."""
    path = Path(path)
    names = dataset.feature_names or [f"x{j + 1}" for j in range(dataset.p)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, label])
        for row, target in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    if dataset.signal_mask is not None:
        sidecar = path.with_name(path.name + ".signal.json")
        sidecar.write_text(json.dumps({"signal": [bool(s) for s in dataset.signal_mask]}) + "\n",
                           encoding="utf-8")
    return path
