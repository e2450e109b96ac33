"""Closed-form per-gene Bayes-factor screen under a g-prior.

For gene j regress y_j on [1, X]; with centered R^2 and K slopes

    log BF = ((n - K - 1) / 2) log(1 + g) - ((n - 1) / 2) log(1 + g (1 - R^2)),

the marginal likelihood ratio with beta ~ N(0, g sigma^2 (X^T X)^-1),
a flat intercept and p(sigma^2) ~ 1/sigma^2. ``literal=True`` drops the
intercept and uses uncentered R^2 = 1 - RSS / y^T y, replacing n - 1 by n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

R2_MAX = 1 - 1e-12


@dataclass(frozen=True)
class ScreenResult:
    r2: np.ndarray
    g_hat: np.ndarray
    log_bf: np.ndarray
    keep: np.ndarray
    threshold: float

    def write_csv(self, gene_ids, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gene_id", "r2", "g_hat", "log_bf", "keep"])
            for row in zip(gene_ids, self.r2, self.g_hat, self.log_bf, self.keep):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), int(row[4])])


def _effective_n(n: int, literal: bool) -> int:
    return n if literal else n - 1


def r_squared(y, X, literal: bool = False):
    """Coefficient of determination of y (n or n x m) on X, clamped to [0, 1 - 1e-12]."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(getattr(X, "X", X), dtype=float)
    n, K = X.shape
    if n <= K + 1:
        raise ValueError(f"need n > K + 1, got n={n}, K={K}")
    A = X if literal else np.column_stack([np.ones(n), X])
    gram = A.T @ A
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular normal equations in R^2 fit") from None
    coef = np.linalg.solve(gram, A.T @ y)
    rss = np.sum((y - A @ coef) ** 2, axis=0)
    tss = np.sum(y ** 2, axis=0) if literal else np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(tss > 0, 1 - rss / np.where(tss > 0, tss, 1), 0.0)
    return np.clip(r2, 0.0, R2_MAX)


def empirical_bayes_g(r2, n: int, K: int, literal: bool = False):
    """max{(n_eff - K) R^2 / (K (1 - R^2)) - 1, 0}; n_eff = n - 1 with an intercept."""
    r2 = np.asarray(r2, dtype=float)
    m = _effective_n(n, literal)
    return np.maximum((m - K) * r2 / (K * (1 - r2)) - 1, 0.0)


def log_bayes_factor(r2, n: int, K: int, g, literal: bool = False):
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("g must be non-negative")
    m = _effective_n(n, literal)
    return 0.5 * (m - K) * np.log1p(g) - 0.5 * m * np.log1p(g * (1 - np.asarray(r2, dtype=float)))


def screen_genes(Y, X, bf_threshold: float = 10.0, literal: bool = False) -> ScreenResult:
    """Keep genes whose Bayes factor at the empirical-Bayes g is >= bf_threshold.

    ``Y`` is n x p (locations as rows) or a NormalizedMatrix.
    """
    values = getattr(Y, "values", None)
    Y = values.T if values is not None else np.asarray(Y, dtype=float)
    X = np.asarray(getattr(X, "X", X), dtype=float)
    n, K = X.shape
    r2 = r_squared(Y, X, literal=literal)
    g_hat = empirical_bayes_g(r2, n, K, literal=literal)
    lbf = np.where(g_hat > 0, log_bayes_factor(r2, n, K, g_hat, literal=literal), 0.0)
    keep = lbf >= np.log(bf_threshold) if bf_threshold > 0 else np.ones_like(lbf, dtype=bool)
    return ScreenResult(np.atleast_1d(r2), np.atleast_1d(g_hat), np.atleast_1d(lbf), np.atleast_1d(keep),
                        bf_threshold)
