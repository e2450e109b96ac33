"""Seedable random variate generators used by the sampler and the simulators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import log_ndtr, ndtr

PG_EXACT_MAX = 50  # b above this uses the moment-matched Gaussian
_TRUNC = 0.64
_PI2 = math.pi ** 2


@dataclass(frozen=True)
class RngStream:
    """(seed, stream_id) -> numpy Generator. Extra keys give child streams."""

    seed: int
    stream_id: int = 0

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *key))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# Polya-Gamma
# ---------------------------------------------------------------------------

def pg_mean(b, c):
    """E[PG(b, c)] = b tanh(c/2) / (2c), b/4 at c = 0."""
    b = np.asarray(b, dtype=float)
    x = np.abs(np.asarray(c, dtype=float)) / 2
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    ratio = np.where(small, 1 - x ** 2 / 3, np.tanh(xs) / xs)
    return b / 4 * ratio


def pg_var(b, c):
    """Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2)), b/24 at c = 0."""
    b = np.asarray(b, dtype=float)
    a = np.abs(np.asarray(c, dtype=float))
    small = a < 0.1
    a_s = np.where(small, a, 0.0)
    a2 = a_s ** 2
    series = (1 / 6 + a2 / 120 + a2 ** 2 / 5040 + a2 ** 3 / 362880) / (4 * np.cosh(a_s / 2) ** 2)
    al = np.where(small, 1.0, a)
    u = np.exp(-al)
    # (sinh a - a) / (cosh a + 1) written in exp(-a) to avoid overflow
    ratio = (1 - u ** 2 - 2 * al * u) / (1 + u) ** 2
    large = ratio / (2 * al ** 3)
    return b * np.where(small, series, large)


def _a_coef(n: int, x: np.ndarray) -> np.ndarray:
    k = (n + 0.5) * math.pi
    out = np.empty_like(x)
    hi = x > _TRUNC
    out[hi] = k * np.exp(-0.5 * k * k * x[hi])
    lo = ~hi
    xl = x[lo]
    out[lo] = np.exp(-1.5 * (math.log(0.5 * math.pi) + np.log(xl)) + math.log(k) - 2.0 * (n + 0.5) ** 2 / xl)
    return out


def _ig_cdf_trunc(z: np.ndarray) -> np.ndarray:
    """P(IG(mean 1/z, shape 1) < TRUNC)."""
    r = math.sqrt(1 / _TRUNC)
    b = r * (_TRUNC * z - 1)
    a = -r * (_TRUNC * z + 1)
    return ndtr(b) + np.exp(2 * z + log_ndtr(a))


def _truncated_inv_gauss(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse Gaussian(mean 1/z, shape 1) restricted to (0, TRUNC)."""
    out = np.empty_like(z)
    chi = z < 1 / _TRUNC  # mean beyond the truncation point
    idx = np.flatnonzero(chi)
    while idx.size:
        zz = z[idx]
        e1 = rng.standard_exponential(idx.size)
        e2 = rng.standard_exponential(idx.size)
        ok = e1 ** 2 <= 2 * e2 / _TRUNC
        x = _TRUNC / (1 + _TRUNC * e1) ** 2
        u = rng.random(idx.size)
        ok &= u <= np.exp(-0.5 * zz ** 2 * x)
        out[idx[ok]] = x[ok]
        idx = idx[~ok]
    idx = np.flatnonzero(~chi)
    while idx.size:
        mu = 1 / z[idx]
        y = rng.standard_normal(idx.size) ** 2
        x = mu + 0.5 * mu ** 2 * y - 0.5 * mu * np.sqrt(4 * mu * y + (mu * y) ** 2)
        u = rng.random(idx.size)
        x = np.where(u > mu / (mu + x), mu ** 2 / x, x)
        ok = x < _TRUNC
        out[idx[ok]] = x[ok]
        idx = idx[~ok]
    return out


def sample_pg1(c, rng) -> np.ndarray:
    """Exact PG(1, c) draws by Devroye-style alternating-series rejection."""
    rng = as_generator(rng)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    z = np.abs(c.ravel()) / 2
    out = np.empty_like(z)
    pending = np.arange(z.size)
    while pending.size:
        zz = z[pending]
        kk = _PI2 / 8 + zz ** 2 / 2
        p = math.pi / (2 * kk) * np.exp(-kk * _TRUNC)
        q = 2 * np.exp(-zz) * _ig_cdf_trunc(zz)
        u = rng.random(pending.size)
        v = rng.random(pending.size)
        x = np.empty_like(zz)
        use_exp = u < p / (p + q)
        x[use_exp] = _TRUNC + rng.standard_exponential(use_exp.sum()) / kk[use_exp]
        x[~use_exp] = _truncated_inv_gauss(zz[~use_exp], rng)

        s = _a_coef(0, x)
        y = v * s
        accept = np.zeros(x.size, dtype=bool)
        open_ = np.ones(x.size, dtype=bool)
        n = 0
        while open_.any():
            n += 1
            an = _a_coef(n, x)
            if n % 2:
                s = s - an
                hit = open_ & (y <= s)
                accept |= hit
            else:
                s = s + an
                hit = open_ & (y > s)
            open_ &= ~hit
        out[pending[accept]] = 0.25 * x[accept]
        pending = pending[~accept]
    return out.reshape(c.shape)


def _pg_series(b, c, rng, n_terms: int = 200) -> np.ndarray:
    """Truncated sum-of-gammas PG(b, c) with the tail replaced by its mean."""
    k = np.arange(1, n_terms + 1) - 0.5
    denom = k[None, :] ** 2 + (c[:, None] / (2 * math.pi)) ** 2
    g = rng.gamma(np.repeat(b[:, None], n_terms, axis=1))
    head = (g / denom).sum(axis=1) / (2 * _PI2)
    head_mean = b * (1 / denom).sum(axis=1) / (2 * _PI2)
    return head + (pg_mean(b, c) - head_mean)


def sample_polya_gamma(b, c, rng, b_star: float = PG_EXACT_MAX) -> np.ndarray:
    """Draw w ~ PG(b, c) elementwise (b, c broadcast together).

    b <= b_star: sum of floor(b) exact PG(1, c) draws, plus a truncated
    gamma-series draw for any fractional part. b > b_star: Gaussian with the
    exact PG mean and variance.
    """
    rng = as_generator(rng)
    b, c = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(c, dtype=float))
    if np.any(~(b > 0)):
        raise ValueError("Polya-Gamma shape b must be positive")
    if not np.all(np.isfinite(c)):
        raise ValueError("Polya-Gamma tilt c must be finite")
    shape = b.shape
    b, c = b.ravel(), c.ravel()
    out = np.empty(b.size)

    gauss = b > b_star
    if gauss.any():
        m = pg_mean(b[gauss], c[gauss])
        s = np.sqrt(pg_var(b[gauss], c[gauss]))
        draw = m + s * rng.standard_normal(m.size)
        # the Gaussian tail below zero is ~8 sd away for b > 50; keep W > 0 regardless
        out[gauss] = np.maximum(draw, 1e-3 * m)

    exact = np.flatnonzero(~gauss)
    if exact.size:
        bi = np.floor(b[exact]).astype(np.int64)
        frac = b[exact] - bi
        total = np.zeros(exact.size)
        if bi.sum():
            reps = np.repeat(np.arange(exact.size), bi)
            draws = sample_pg1(c[exact][reps], rng)
            total += np.bincount(reps, weights=draws, minlength=exact.size)
        fr = frac > 1e-12
        if fr.any():
            total[fr] += _pg_series(frac[fr], c[exact][fr], rng)
        out[exact] = total
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# Gaussian, Wishart, gamma families
# ---------------------------------------------------------------------------

def sample_mvn(mean, chol_factor, rng) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    if not np.all(np.isfinite(mean)):
        raise ValueError("mean must be finite")
    rng = as_generator(rng)
    return mean + np.asarray(chol_factor) @ rng.standard_normal(mean.shape[0])


def sample_matrix_normal(M, row_factor, col_factor, rng) -> np.ndarray:
    """M + L_U Z L_V^T so that vec(draw) has covariance V kron U."""
    M = np.asarray(M, dtype=float)
    row_factor = np.asarray(row_factor, dtype=float)
    col_factor = np.asarray(col_factor, dtype=float)
    k, q = M.shape
    if row_factor.shape != (k, k) or col_factor.shape != (q, q):
        raise ValueError(f"factor shapes {row_factor.shape}, {col_factor.shape} do not match mean {M.shape}")
    rng = as_generator(rng)
    return M + row_factor @ rng.standard_normal((k, q)) @ col_factor.T


def sample_inverse_wishart(df: float, scale, rng, return_precision: bool = False):
    """Sigma ~ IW(df, scale) via a Bartlett draw of the precision.

    With scale = U U^T and Bartlett factor A, Omega = U^-T A A^T U^-1 and
    Sigma = Omega^-1; both are formed from triangular solves so that
    Sigma @ Omega is the identity to rounding.
    """
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if not df > p - 1:
        raise ValueError(f"IW degrees of freedom {df} must exceed p - 1 = {p - 1}")
    rng = as_generator(rng)
    try:
        u = np.linalg.cholesky(0.5 * (scale + scale.T))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("inverse-Wishart scale is not positive definite") from exc
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    low = np.tril_indices(p, -1)
    a[low] = rng.standard_normal(len(low[0]))
    m = solve_triangular(a, u.T, lower=True)
    sigma = m.T @ m
    sigma = 0.5 * (sigma + sigma.T)
    if not return_precision:
        return sigma
    nmat = solve_triangular(u, a, lower=True, trans="T")  # U^-T A
    omega = nmat @ nmat.T
    return sigma, 0.5 * (omega + omega.T)


def sample_gamma(shape, rate, rng, size=None):
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise ValueError("gamma shape and rate must be positive")
    return as_generator(rng).gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_inverse_gamma(shape, rate, rng, size=None):
    """1 / Gamma(shape, rate); mean rate / (shape - 1)."""
    return 1.0 / sample_gamma(shape, rate, rng, size=size)


# ---------------------------------------------------------------------------
# Kernels and Gaussian-process fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "matern32" or "exp-sine-squared"
    variance: float = 1.0
    lengthscale: float = 1.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("matern32", "exp-sine-squared"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if min(self.variance, self.lengthscale, self.period) <= 0:
            raise ValueError("kernel parameters must be positive")

    @property
    def smoothness(self) -> float:
        return 1.5


def kernel_eval(spec: KernelSpec, d):
    d = np.asarray(d, dtype=float)
    if spec.kind == "matern32":
        r = math.sqrt(3) * d / spec.lengthscale
        return spec.variance * (1 + r) * np.exp(-r)
    return spec.variance * np.exp(-2 * np.sin(math.pi * d / spec.period) ** 2 / spec.lengthscale ** 2)


def gram_matrix(coords, spec: KernelSpec) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    d = cdist(coords, coords)
    if not np.all(np.isfinite(d)):
        raise ValueError("pairwise distances must be finite")
    return kernel_eval(spec, d)


def gp_factor(coords, spec: KernelSpec, jitter: float = 1e-8, method: str = "cholesky") -> np.ndarray:
    """A matrix F with F F^T = Gram (+ jitter I).

    ``cholesky`` raises the jitter tenfold up to 1e-2 before giving up.
    ``eigen-clip`` replaces negative eigenvalues with zero, which is needed
    for kernels that are not positive definite on the plane.
    """
    gram = gram_matrix(coords, spec)
    n = gram.shape[0]
    if method == "eigen-clip":
        vals, vecs = np.linalg.eigh(gram)
        return vecs * np.sqrt(np.clip(vals, 0, None) + jitter)
    if method != "cholesky":
        raise ValueError(f"unknown factor method {method!r}")
    j = jitter
    while True:
        try:
            return np.linalg.cholesky(gram + j * np.eye(n))
        except np.linalg.LinAlgError:
            if j >= 1e-2:
                raise np.linalg.LinAlgError(
                    "GP covariance is not positive definite even with jitter 1e-2 (duplicate coordinates?)"
                ) from None
            j = min(max(j * 10, 1e-10), 1e-2)


def sample_gp(coords, spec: KernelSpec, rng, jitter: float = 1e-8, size: int | None = None,
              method: str = "cholesky") -> np.ndarray:
    """Zero-mean GP field(s) at ``coords``; shape (n,) or (size, n)."""
    rng = as_generator(rng)
    factor = gp_factor(coords, spec, jitter=jitter, method=method)
    n = factor.shape[0]
    if size is None:
        return factor @ rng.standard_normal(n)
    return (factor @ rng.standard_normal((n, size))).T
