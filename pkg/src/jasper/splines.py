"""Clamped cubic B-spline bases and tensor-product design matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DEGREE = 3


class SplineError(ValueError):
    pass


@dataclass(frozen=True)
class KnotVector:
    knots: np.ndarray
    degree: int = DEGREE

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        k = self.degree
        if t.ndim != 1 or t.size < 2 * (k + 1):
            raise SplineError(f"need at least {2 * (k + 1)} knots for degree {k}")
        if np.any(np.diff(t) < 0):
            raise SplineError("knots must be non-decreasing")
        if not (np.all(t[: k + 1] == t[0]) and np.all(t[-(k + 1):] == t[-1])):
            raise SplineError("knot vector must be clamped")
        object.__setattr__(self, "knots", t)

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])


def make_knots(coords_1d, n_interior: int, degree: int = DEGREE) -> KnotVector:
    x = np.asarray(coords_1d, dtype=float)
    if n_interior < 0:
        raise SplineError("n_interior must be >= 0")
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise SplineError("degenerate coordinate range")
    interior = np.linspace(lo, hi, n_interior + 2)[1:-1]
    return KnotVector(np.concatenate([[lo] * (degree + 1), interior, [hi] * (degree + 1)]), degree)


def basis_matrix(t, knots: KnotVector) -> np.ndarray:
    """Evaluate every basis function at every point in ``t``.

    Cox-de Boor recursion with 0/0 := 0; the last non-empty knot span is
    closed on the right so the upper boundary evaluates. Returns an
    ``len(t) x n_basis`` array.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kv = knots.knots
    lo, hi = knots.domain
    if np.any((t < lo) | (t > hi)) or not np.all(np.isfinite(t)):
        raise SplineError(f"evaluation point outside the knot domain [{lo}, {hi}]")
    n_spans = kv.size - 1
    # degree 0: indicator of t_i <= t < t_{i+1}
    basis = np.zeros((t.size, n_spans))
    for i in range(n_spans):
        if kv[i] < kv[i + 1]:
            basis[:, i] = (kv[i] <= t) & (t < kv[i + 1])
    last = np.flatnonzero(kv[:-1] < kv[1:])[-1]
    basis[t == hi, last] = 1.0

    for k in range(1, knots.degree + 1):
        nxt = np.zeros((t.size, n_spans - k))
        for i in range(n_spans - k):
            left = kv[i + k] - kv[i]
            right = kv[i + k + 1] - kv[i + 1]
            if left > 0:
                nxt[:, i] += (t - kv[i]) / left * basis[:, i]
            if right > 0:
                nxt[:, i] += (kv[i + k + 1] - t) / right * basis[:, i + 1]
        basis = nxt
    return basis


def bspline_basis_1d(t: float, knots: KnotVector) -> np.ndarray:
    return basis_matrix([t], knots)[0]


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    column_map: tuple[tuple[int, ...], ...]
    dropped_column: int | None
    centered: bool

    @property
    def K(self) -> int:
        return self.X.shape[1]


def tensor_design_matrix(
    coords,
    knots_per_axis,
    drop_first: bool = True,
    center: bool = True,
) -> DesignMatrix:
    """Tensor-product basis over 2 or 3 axes.

    The raw rows sum to one, which is collinear with an intercept, so by
    default the first column is dropped and the rest are mean-centered.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != len(knots_per_axis) or coords.shape[1] not in (2, 3):
        raise SplineError("coords must be n x d with d = len(knots_per_axis) in {2, 3}")
    per_axis = [basis_matrix(coords[:, a], kv) for a, kv in enumerate(knots_per_axis)]
    index = list(itertools.product(*(range(b.shape[1]) for b in per_axis)))
    raw = np.ones((coords.shape[0], len(index)))
    for a, b in enumerate(per_axis):
        raw *= b[:, [ix[a] for ix in index]]
    dropped = None
    if drop_first:
        raw = raw[:, 1:]
        dropped = 0
        index = index[1:]
    if center:
        raw = raw - raw.mean(axis=0)
    try:
        np.linalg.cholesky(raw.T @ raw)
    except np.linalg.LinAlgError:
        raise SplineError(
            f"X'X is singular for K={raw.shape[1]} at n={coords.shape[0]}; use fewer interior knots"
        ) from None
    return DesignMatrix(raw, tuple(index), dropped, center)


def design_from_coords(coords, n_interior, drop_first: bool = True, center: bool = True) -> DesignMatrix:
    """Equally spaced knots on every axis; ``n_interior`` is an int or one int per axis."""
    coords = np.asarray(coords, dtype=float)
    d = coords.shape[1]
    if np.isscalar(n_interior):
        n_interior = [int(n_interior)] * d
    if len(n_interior) != d:
        raise SplineError("need one knot count per axis")
    knots = [make_knots(coords[:, a], n_interior[a]) for a in range(d)]
    return tensor_design_matrix(coords, knots, drop_first=drop_first, center=center)
