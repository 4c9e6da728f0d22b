"""Decomposable regularizers, their choice maps and rate functions.

A regularizer ``h(x) = sum_a theta(x_a)`` on the simplex induces the choice
map ``Q(y) = argmax_x <y, x> - h(x)``. Two kernels are built in:

* entropic, ``theta(z) = z log z``: ``Q`` is the softmax and never reaches the
  boundary of the simplex (steep kernel);
* euclidean, ``theta(z) = z**2 / 2``: ``Q`` is the Euclidean projection onto
  the simplex and reaches the boundary in finite time (non-steep kernel).

Any other strictly convex kernel can be supplied with its derivative; the
choice map and rate function are then solved numerically by bisection.

All choice maps act on the last axis, so score arrays may carry batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

BISECTION_TOL = 1e-10


def _bisect(f, lo, hi, tol=BISECTION_TOL, max_iter=400):
    """Root of the increasing function ``f`` on ``[lo, hi]``."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Regularizer:
    """Kernel ``theta`` on ``[0, 1]`` together with its derivative.

    ``dtheta0`` is ``theta'(0+)`` (``-inf`` for steep kernels) and ``dtheta1``
    is ``theta'(1)``.
    """

    kind: str
    theta: Callable[[np.ndarray], np.ndarray]
    dtheta: Callable[[np.ndarray], np.ndarray]
    dtheta0: float
    dtheta1: float

    @property
    def steep(self) -> bool:
        return self.dtheta0 == -np.inf

    def choice_map(self, y) -> np.ndarray:
        return choice_map(self, y)

    def rate(self, y):
        return rate_function(self, y)

    def initial_scores(self, x) -> np.ndarray:
        return initial_scores_for(self, x)


def _xlogx(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)


def _dxlogx(z):
    with np.errstate(divide="ignore"):
        return 1.0 + np.log(np.asarray(z, dtype=float))


ENTROPIC = Regularizer("entropic", _xlogx, _dxlogx, -np.inf, 1.0)
EUCLIDEAN = Regularizer(
    "euclidean",
    lambda z: 0.5 * np.asarray(z, dtype=float) ** 2,
    lambda z: np.asarray(z, dtype=float),
    0.0,
    1.0,
)

_BUILTIN = {"entropic": ENTROPIC, "euclidean": EUCLIDEAN}


def get_regularizer(name: str) -> Regularizer:
    try:
        return _BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown regularizer {name!r}; expected one of {sorted(_BUILTIN)}") from None


def custom_regularizer(theta, dtheta, kind: str = "custom") -> Regularizer:
    """Wrap a user kernel; ``theta'`` is evaluated at ``0`` and ``1`` to find
    the steepness and the saturation level of the rate function."""
    with np.errstate(divide="ignore"):
        d0 = float(dtheta(0.0))
    return Regularizer(kind, theta, dtheta, d0, float(dtheta(1.0)))


def softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    z = np.exp(y - np.max(y, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def simplex_projection(y) -> np.ndarray:
    """Euclidean projection of each row of ``y`` onto the probability simplex.

    Sort-and-threshold: with ``u`` sorted decreasingly, the support size is the
    largest ``k`` with ``u_k > (sum_{j<=k} u_j - 1) / k``.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    u = -np.sort(-y, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, n + 1)
    support = u - css / k > 0
    rho = np.sum(support, axis=-1, keepdims=True)
    tau = np.take_along_axis(css, rho - 1, axis=-1) / rho
    x = np.maximum(y - tau, 0.0)
    # renormalize so single-support outputs are exact vertices
    return x / np.sum(x, axis=-1, keepdims=True)


def _generic_choice(r: Regularizer, y: np.ndarray) -> np.ndarray:
    # KKT: x_a = phi(y_a - lam), with lam fixed by sum_a x_a = 1
    def solve(row):
        def excess(lam):
            return np.sum(rate_function(r, row - lam)) - 1.0

        # at lam = max(row) - theta'(1) the top coordinate alone sums to 1
        hi = np.max(row) - r.dtheta0 if np.isfinite(r.dtheta0) else np.max(row) + 50.0
        lo = np.max(row) - r.dtheta1
        while excess(hi) > 0:
            hi += max(1.0, abs(hi))
        lam = _bisect(lambda t: -excess(t), lo, hi)
        x = rate_function(r, row - lam)
        return x / x.sum()

    flat = y.reshape(-1, y.shape[-1])
    return np.stack([solve(row) for row in flat]).reshape(y.shape)


def choice_map(r: Regularizer, y) -> np.ndarray:
    """Regularized best response ``argmax_x <y, x> - sum_a theta(x_a)``."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] < 1:
        raise ValueError("scores must be a non-empty vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("scores must be finite")
    if r is ENTROPIC or r.kind == "entropic":
        return softmax(y)
    if r is EUCLIDEAN or r.kind == "euclidean":
        return simplex_projection(y)
    return _generic_choice(r, y)


def rate_function(r: Regularizer, y):
    """Clamped inverse of ``theta'``: 0 below ``theta'(0+)``, 1 above
    ``theta'(1)``."""
    y = np.asarray(y, dtype=float)
    if r.kind == "entropic":
        out = np.exp(np.minimum(y, 1.0) - 1.0)
    elif r.kind == "euclidean":
        out = np.clip(y, 0.0, 1.0)
    else:
        def inv(v):
            if v <= r.dtheta0:
                return 0.0
            if v >= r.dtheta1:
                return 1.0
            return _bisect(lambda z: float(r.dtheta(z)) - v, 0.0, 1.0)

        out = np.vectorize(inv, otypes=[float])(y)
    return float(out) if out.ndim == 0 else out


def initial_scores_for(r: Regularizer, x) -> np.ndarray:
    """Scores whose image under the choice map is ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-9:
        raise ValueError(f"{x} is not a probability vector")
    if r.kind == "entropic":
        if np.any(x <= 0):
            raise ValueError("the entropic choice map only reaches interior strategies")
        return np.log(x)
    if r.kind == "euclidean":
        return x.copy()
    # theta'(x) works for any kernel: the KKT multiplier is then zero
    if r.steep and np.any(x <= 0):
        raise ValueError("a steep choice map only reaches interior strategies")
    with np.errstate(divide="ignore"):
        y = np.asarray(r.dtheta(x), dtype=float)
    return np.where(np.isfinite(y), y, r.dtheta0 if np.isfinite(r.dtheta0) else -1e300)
