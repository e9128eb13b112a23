"""Smooth convex losses ``L(y, f)`` and their derivatives in ``f``."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .exceptions import LabelError

KINDS = ("squared", "huberized_hinge", "deviance")
_ALIASES = {
    "squared_error": "squared",
    "squarederror": "squared",
    "ls": "squared",
    "hinge": "huberized_hinge",
    "huberizedhinge": "huberized_hinge",
    "huber_hinge": "huberized_hinge",
    "logistic": "deviance",
}

# upper bounds on d^2 L / d f^2, used as majorizing curvature by the solvers
_CURVATURE = {"squared": 2.0, "deviance": 0.25}


@dataclass(frozen=True)
class LossSpec:
    """Loss kind plus the transition width of the huberized hinge.

    ``kind='hinge'`` is accepted and mapped to the huberized hinge, since the
    plain hinge is not differentiable.
    """

    kind: str = "squared"
    huber_delta: float = 0.5

    def __post_init__(self):
        kind = str(self.kind).lower()
        kind = _ALIASES.get(kind, kind)
        if kind not in KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {KINDS}")
        if not self.huber_delta > 0:
            raise ValueError(f"huber_delta must be positive, got {self.huber_delta}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "huber_delta", float(self.huber_delta))

    @property
    def is_margin(self):
        return self.kind != "squared"

    @property
    def curvature_bound(self):
        if self.kind == "huberized_hinge":
            return 1.0 / self.huber_delta
        return _CURVATURE[self.kind]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def check_labels(y):
    y = np.asarray(y, dtype=float)
    bad = ~np.isin(y, (-1.0, 1.0))
    if np.any(bad):
        raise LabelError(f"margin losses need labels in {{+1, -1}}; got {np.unique(y[bad])[:5].tolist()}")
    return y


def _prepare(spec, y, f):
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if spec.is_margin:
        check_labels(y)
    return y, f


def _scalar_or_array(out, y, f):
    if np.ndim(y) == 0 and np.ndim(f) == 0:
        return float(out)
    return out


def loss_value(spec, y, f):
    """``L(y, f)``, elementwise over arrays."""
    y, f = _prepare(spec, y, f)
    if spec.kind == "squared":
        out = (y - f) ** 2
    elif spec.kind == "deviance":
        out = np.logaddexp(0.0, -y * f)
    else:
        d = spec.huber_delta
        u = y * f
        out = np.where(u >= 1.0, 0.0, np.where(u > 1.0 - d, (1.0 - u) ** 2 / (2.0 * d), 1.0 - u - d / 2.0))
    return _scalar_or_array(out, y, f)


def loss_derivative(spec, y, f):
    """``dL/df``, elementwise over arrays."""
    y, f = _prepare(spec, y, f)
    if spec.kind == "squared":
        out = 2.0 * (f - y)
    elif spec.kind == "deviance":
        out = -y * expit(-y * f)
    else:
        d = spec.huber_delta
        u = y * f
        out = y * np.where(u >= 1.0, 0.0, np.where(u > 1.0 - d, -(1.0 - u) / d, -1.0))
    return _scalar_or_array(out, y, f)


def mean_loss(spec, y, f):
    return float(np.mean(loss_value(spec, y, f)))


def loss_curvature(spec, y, f):
    """Generalized second derivative ``d^2L/df^2`` (zero on the flat and linear hinge branches)."""
    y, f = _prepare(spec, y, f)
    if spec.kind == "squared":
        out = np.full(np.broadcast(y, f).shape, 2.0)
    elif spec.kind == "deviance":
        s = expit(y * f)
        out = s * (1.0 - s)
    else:
        u = y * f
        out = np.where((u < 1.0) & (u > 1.0 - spec.huber_delta), 1.0 / spec.huber_delta, 0.0)
    return _scalar_or_array(out, y, f)
