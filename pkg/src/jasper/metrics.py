"""Moran's I and detection accuracy against known truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class SpatialWeights:
    W: np.ndarray
    scheme: str
    row_standardized: bool

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("weights must be square")
        if np.any(W < 0) or np.any(np.diag(W) != 0):
            raise ValueError("weights must be non-negative with a zero diagonal")
        if np.any(W.sum(axis=1) <= 0):
            raise ValueError("every location needs at least one neighbour")
        object.__setattr__(self, "W", W)


def _standardize(W, row_standardize):
    rows = W.sum(axis=1, keepdims=True)
    if np.any(rows <= 0):
        raise ValueError("every location needs at least one neighbour")
    return W / rows if row_standardize else W


def knn_weights(coords, k: int = 6, row_standardize: bool = True) -> SpatialWeights:
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    k = min(k, n - 1)
    _, nbr = cKDTree(coords).query(coords, k=k + 1)
    W = np.zeros((n, n))
    for i in range(n):
        # drop self; coincident points may place self anywhere in the list
        others = [j for j in nbr[i] if j != i][:k]
        W[i, others] = 1.0
    return SpatialWeights(_standardize(W, row_standardize), f"knn({k})", row_standardize)


def inverse_distance_weights(coords, cutoff: float, row_standardize: bool = True) -> SpatialWeights:
    d = cdist(coords, coords)
    with np.errstate(divide="ignore"):
        W = np.where((d > 0) & (d <= cutoff), 1.0 / d, 0.0)
    return SpatialWeights(_standardize(W, row_standardize), f"inverse-distance({cutoff})", row_standardize)


def morans_i(values, weights) -> float:
    W = weights.W if isinstance(weights, SpatialWeights) else np.asarray(weights, dtype=float)
    x = np.asarray(values, dtype=float)
    z = x - x.mean()
    denom = z @ z
    if denom <= 1e-300 * max(1.0, np.abs(x).max() ** 2):
        raise ValueError("Moran's I is undefined for constant values")
    return float(x.size / W.sum() * (z @ W @ z) / denom)


def morans_i_many(Y, weights) -> np.ndarray:
    """Moran's I for each column of Y (n x p); nan for constant columns."""
    W = weights.W if isinstance(weights, SpatialWeights) else np.asarray(weights, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = Y - Y.mean(axis=0)
    denom = np.sum(Z * Z, axis=0)
    num = np.sum(Z * (W @ Z), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = Y.shape[0] / W.sum() * num / denom
    return np.where(denom > 0, out, np.nan)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def _rate(self, a, b):
        return a / (a + b) if a + b else None

    @property
    def tpr(self):
        return self._rate(self.tp, self.fn)

    @property
    def tnr(self):
        return self._rate(self.tn, self.fp)

    @property
    def fpr(self):
        return self._rate(self.fp, self.tn)

    @property
    def fnr(self):
        return self._rate(self.fn, self.tp)

    @property
    def precision(self):
        return self._rate(self.tp, self.fp)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn, "tpr": self.tpr,
                "tnr": self.tnr, "fpr": self.fpr, "fnr": self.fnr, "precision": self.precision}


def confusion(truth, selected) -> Confusion:
    """``selected`` is a boolean mask or an index collection."""
    truth = np.asarray(truth, dtype=bool)
    sel = np.asarray(selected)
    if sel.dtype != bool or sel.shape != truth.shape:
        mask = np.zeros(truth.size, dtype=bool)
        mask[np.asarray(list(selected), dtype=int)] = True
        sel = mask
    return Confusion(
        tp=int(np.sum(truth & sel)),
        fp=int(np.sum(~truth & sel)),
        tn=int(np.sum(~truth & ~sel)),
        fn=int(np.sum(truth & ~sel)),
    )
