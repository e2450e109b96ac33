"""Polya-Gamma augmented, partially collapsed Gibbs sampler for the joint model.

Counts C (n x p here, locations as rows) are negative binomial with size
N_i and mean N_i exp(Y), Y = 1 alpha^T + X B + E with E rows N(0, Sigma).
Gene j is spatially varying when gamma_j = 1, in which case its column of
B has a g-prior; otherwise the column is zero.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf, dtrtrs
from scipy.special import betaln

from .samplers import RngStream, sample_inverse_gamma, sample_inverse_wishart, sample_polya_gamma

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOCATION_BLOCK = 64

# stream ids; every draw is keyed by (stream, iteration[, block])
_STREAM_GLOBAL, _STREAM_W, _STREAM_Y, _STREAM_INIT = 0, 1, 2, 3


class SamplerError(RuntimeError):
    pass


@dataclass
class Hyperparameters:
    a: float = 0.05
    b: float = 0.05
    c: float = 1.0
    d: float = 1.0
    h: float = 0.01
    nu: float | None = None  # defaults to p + 1
    S: np.ndarray | None = None  # defaults to I_p

    def resolved(self, p: int) -> "Hyperparameters":
        nu = p + 1.0 if self.nu is None else float(self.nu)
        S = np.eye(p) if self.S is None else np.asarray(self.S, dtype=float)
        if min(self.a, self.b, self.c, self.d, self.h) <= 0:
            raise ValueError("a, b, c, d and h must be positive")
        if not nu > p - 1:
            raise ValueError(f"nu = {nu} must exceed p - 1 = {p - 1}")
        if S.shape != (p, p):
            raise ValueError(f"S must be {p} x {p}")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError("S must be symmetric positive definite") from None
        return replace(self, nu=nu, S=S)


@dataclass
class GibbsConfig:
    n_iter: int = 5000
    burn_in: int = 3000
    thin: int = 1
    mh_flips_per_scan: int | None = None  # defaults to p
    seed: int = 0
    threads: int = 1
    record_traces: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.mh_flips_per_scan is not None and self.mh_flips_per_scan < 1:
            raise ValueError("mh_flips_per_scan must be >= 1")

    @property
    def n_kept(self) -> int:
        return -(-(self.n_iter - self.burn_in) // self.thin)

    def keeps(self, it: int) -> bool:
        return it >= self.burn_in and (it - self.burn_in) % self.thin == 0


@dataclass
class ModelState:
    Y: np.ndarray  # n x p
    W: np.ndarray  # n x p, Polya-Gamma weights (unused by the Gaussian sampler)
    alpha: np.ndarray  # p
    B: np.ndarray  # K x p
    Sigma: np.ndarray
    Omega: np.ndarray
    g: float
    gamma: np.ndarray  # p, bool

    def copy(self) -> "ModelState":
        return ModelState(self.Y.copy(), self.W.copy(), self.alpha.copy(), self.B.copy(),
                          self.Sigma.copy(), self.Omega.copy(), float(self.g), self.gamma.copy())

    @property
    def q(self) -> int:
        return int(self.gamma.sum())

    def check(self, atol: float = 1e-8) -> None:
        """Raise if the state breaks a structural invariant."""
        if np.any(self.B[:, ~self.gamma] != 0):
            raise SamplerError("B has non-zero columns for unselected genes")
        p = self.Sigma.shape[0]
        if not np.allclose(self.Sigma @ self.Omega, np.eye(p), atol=atol * max(1.0, np.abs(self.Sigma).max())):
            raise SamplerError("Sigma @ Omega deviates from the identity")
        np.linalg.cholesky(self.Sigma)
        if np.any(self.W <= 0):
            raise SamplerError("non-positive Polya-Gamma weight")


@dataclass
class PosteriorSamples:
    gamma_draws: np.ndarray  # kept x p, uint8
    alpha: np.ndarray | None = None
    g: np.ndarray | None = None
    sigma_diag: np.ndarray | None = None
    iterations: np.ndarray | None = None
    accept_rate: float = float("nan")
    gene_ids: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def ppi(self) -> np.ndarray:
        return self.gamma_draws.mean(axis=0)

    def write_traces(self, outdir) -> list[Path]:
        """One CSV per recorded quantity: trace_g, trace_alpha, trace_sigma_diag."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        genes = list(self.gene_ids) or [str(j + 1) for j in range(self.gamma_draws.shape[1])]
        written = []
        if self.g is not None:
            path = outdir / "trace_g.csv"
            with path.open("w") as fh:
                fh.write("iteration,g\n")
                for it, v in zip(self.iterations, self.g):
                    fh.write(f"{it},{v!r}\n")
            written.append(path)
        for name, arr in (("alpha", self.alpha), ("sigma_diag", self.sigma_diag)):
            if arr is None:
                continue
            path = outdir / f"trace_{name}.csv"
            with path.open("w") as fh:
                fh.write("iteration," + ",".join(genes) + "\n")
                for it, row in zip(self.iterations, arr):
                    fh.write(f"{it}," + ",".join(repr(float(v)) for v in row) + "\n")
            written.append(path)
        return written


# ---------------------------------------------------------------------------
# Design-matrix cache
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Design:
    """X with the factorizations every update reuses."""

    X: np.ndarray
    XtX: np.ndarray
    chol: np.ndarray  # lower, chol @ chol.T = X^T X

    @classmethod
    def of(cls, X) -> "Design":
        if isinstance(X, Design):
            return X
        X = np.asarray(getattr(X, "X", X), dtype=float)
        XtX = X.T @ X
        try:
            chol = np.linalg.cholesky(XtX)
        except np.linalg.LinAlgError:
            raise SamplerError("X^T X is singular") from None
        return cls(X, XtX, chol)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def whitened_proj(self, R: np.ndarray) -> np.ndarray:
        """chol^-1 X^T R, so that R^T P_X R = Z^T Z."""
        return solve_triangular(self.chol, self.X.T @ R, lower=True)

    def inv_factor(self) -> np.ndarray:
        """Upper-triangular F with F F^T = (X^T X)^-1."""
        return solve_triangular(self.chol, np.eye(self.K), lower=True).T


# ---------------------------------------------------------------------------
# Latent updates (location-parallel)
# ---------------------------------------------------------------------------

def _blocks(n: int) -> list[slice]:
    return [slice(s, min(s + LOCATION_BLOCK, n)) for s in range(0, n, LOCATION_BLOCK)]


def _per_block(fn, n, rngs, executor):
    blocks = _blocks(n)
    if isinstance(rngs, np.random.Generator):
        if len(blocks) > 1:
            return [fn(slice(0, n), rngs)]
        rngs = [rngs]
    if len(rngs) != len(blocks):
        raise ValueError(f"need {len(blocks)} block generators, got {len(rngs)}")
    if executor is None:
        return [fn(b, r) for b, r in zip(blocks, rngs)]
    return list(executor.map(fn, blocks, rngs))


def update_W(state: ModelState, counts: np.ndarray, sizes: np.ndarray, rng, executor=None) -> np.ndarray:
    """w_ij ~ PG(C_ij + N_i, Y_ij) independently.

    ``rng`` is one Generator or a list with one Generator per location block.
    """
    shape = counts + sizes[:, None]

    def run(sl, r):
        return sample_polya_gamma(shape[sl], state.Y[sl], r)

    return np.concatenate(_per_block(run, counts.shape[0], rng, executor), axis=0)


def update_Y(state: ModelState, counts: np.ndarray, design: Design, sizes: np.ndarray, rng,
             executor=None, offset: np.ndarray | None = None) -> np.ndarray:
    """Y(s_i) ~ N(P_i^-1 (Omega mu_i + kappa_i - offset_i w_i), P_i^-1), P_i = Omega + diag(w_i)."""
    design = Design.of(design)
    n, p = counts.shape
    mu = state.alpha[None, :] + design.X @ state.B
    kappa = 0.5 * (counts - sizes[:, None])
    rhs = mu @ state.Omega + kappa
    if offset is not None:
        rhs = rhs - offset[:, None] * state.W

    jitter = 1e-8 * np.trace(state.Omega) / p

    def run(sl, r):
        z = r.standard_normal((sl.stop - sl.start, p))
        out = np.empty_like(z)
        for k, i in enumerate(range(sl.start, sl.stop)):
            prec = state.Omega.copy()
            prec[np.diag_indices(p)] += state.W[i]
            L, info = dpotrf(prec, lower=1, clean=1)
            if info != 0:
                prec[np.diag_indices(p)] += jitter
                L, info = dpotrf(prec, lower=1, clean=1)
                if info != 0:
                    raise SamplerError("location precision matrix is not positive definite")
            # P = L L^T: Y = L^-T (L^-1 rhs + z) has mean P^-1 rhs and covariance P^-1
            v, _ = dtrtrs(L, rhs[i], lower=1)
            out[k], _ = dtrtrs(L, v + z[k], lower=1, trans=1)
        return out

    return np.concatenate(_per_block(run, n, rng, executor), axis=0)


# ---------------------------------------------------------------------------
# Conjugate parameter updates
# ---------------------------------------------------------------------------

def update_alpha(state: ModelState, design, hyper: Hyperparameters, rng) -> np.ndarray:
    """alpha ~ N(sum_i (Y_i - B^T X_i) / (n + h), Sigma / (n + h))."""
    design = Design.of(design)
    n = design.n
    resid = state.Y - design.X @ state.B
    mean = resid.sum(axis=0) / (n + hyper.h)
    L = np.linalg.cholesky(state.Sigma)
    return mean + L @ rng.standard_normal(mean.size) / math.sqrt(n + hyper.h)


def b_conditional(state: ModelState, design, idx: np.ndarray):
    """Mean, row factor and column factor of B_gamma | Y, alpha, Sigma, gamma, g."""
    design = Design.of(design)
    g = state.g
    m_gamma = state.Omega[idx, :]
    G = np.linalg.inv(np.eye(idx.size) + g * state.Omega[np.ix_(idx, idx)])
    G = 0.5 * (G + G.T)
    R = state.Y - state.alpha[None, :]
    xtr = design.X.T @ R
    coef = cho_solve((design.chol, True), xtr)  # (X^T X)^-1 X^T R
    mean = g * coef @ m_gamma.T @ G
    try:
        col = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SamplerError("G_gamma is not positive definite") from None
    row = math.sqrt(g) * design.inv_factor()
    return mean, row, col


def update_B(state: ModelState, design, hyper: Hyperparameters, rng) -> np.ndarray:
    """Redraw the selected columns of B from their matrix-normal conditional."""
    design = Design.of(design)
    B = np.zeros((design.K, state.gamma.size))
    idx = np.flatnonzero(state.gamma)
    if idx.size == 0:
        return B
    mean, row, col = b_conditional(state, design, idx)
    B[:, idx] = mean + row @ rng.standard_normal(mean.shape) @ col.T
    return B


def sigma_scale(state: ModelState, design, hyper: Hyperparameters) -> np.ndarray:
    design = Design.of(design)
    R = state.Y - state.alpha[None, :] - design.X @ state.B
    s = hyper.S + hyper.h * np.outer(state.alpha, state.alpha) + R.T @ R
    return 0.5 * (s + s.T)


def update_Sigma(state: ModelState, design, hyper: Hyperparameters, rng):
    """Sigma ~ IW(nu + n + 1, S*); returns (Sigma, Omega)."""
    design = Design.of(design)
    s_star = sigma_scale(state, design, hyper)
    df = hyper.nu + design.n + 1
    try:
        return sample_inverse_wishart(df, s_star, rng, return_precision=True)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(s_star) / s_star.shape[0]
        return sample_inverse_wishart(df, s_star + jitter * np.eye(s_star.shape[0]), rng, return_precision=True)


def g_conditional(state: ModelState, design, hyper: Hyperparameters) -> tuple[float, float]:
    design = Design.of(design)
    q = state.q
    xb = design.X @ state.B[:, state.gamma]
    return hyper.a + q * design.K / 2, hyper.b + 0.5 * float(np.sum(xb * xb))


def update_g(state: ModelState, design, hyper: Hyperparameters, rng) -> float:
    shape, rate = g_conditional(state, design, hyper)
    return float(sample_inverse_gamma(shape, rate, rng))


# ---------------------------------------------------------------------------
# Collapsed update of gamma
# ---------------------------------------------------------------------------

def log_gamma_prior(q: int, p: int, c: float, d: float) -> float:
    """Beta-Bernoulli marginal mass of one configuration with q ones."""
    return float(betaln(c + q, d + p - q) - betaln(c, d))


class CollapsedGammaTarget:
    """log f(gamma | Y, alpha, Sigma, g) with B integrated out.

    With R = Y - 1 alpha^T and H = Omega R^T P_X R Omega the unnormalized
    log density is

        log f(gamma) + (K/2) log det G + (g/2) tr(G H[gamma, gamma]),
        G = (I_q + g Omega[gamma, gamma])^-1.
    """

    def __init__(self, Y, alpha, Omega, g, design, hyper: Hyperparameters):
        design = Design.of(design)
        Z = design.whitened_proj(Y - alpha[None, :])
        OZ = Z @ Omega
        self.H = OZ.T @ OZ
        self.Omega = Omega
        self.g = float(g)
        self.K = design.K
        self.p = Omega.shape[0]
        self.c, self.d = hyper.c, hyper.d

    def __call__(self, gamma) -> float:
        gamma = np.asarray(gamma, dtype=bool)
        idx = np.flatnonzero(gamma)
        q = idx.size
        out = log_gamma_prior(q, self.p, self.c, self.d)
        if q == 0:
            return out
        A = np.eye(q) + self.g * self.Omega[np.ix_(idx, idx)]
        try:
            cf = cho_factor(A, lower=True)
        except np.linalg.LinAlgError:
            raise SamplerError("I + g Omega_gg is not positive definite") from None
        logdet_a = 2.0 * np.sum(np.log(np.diag(cf[0])))
        trace = np.trace(cho_solve(cf, self.H[np.ix_(idx, idx)]))
        return out - 0.5 * self.K * logdet_a + 0.5 * self.g * trace


def log_collapsed_gamma_density(gamma, Y, alpha, Omega, g, design, hyper: Hyperparameters) -> float:
    return CollapsedGammaTarget(Y, alpha, Omega, g, design, hyper)(gamma)


class _FlipWalker:
    """Incremental evaluation of single-flip moves under a CollapsedGammaTarget.

    Keeps A_S^-1 and H[S, S] for the active set S, A_S = I + g Omega[S, S].
    Adding gene j changes the log density by -(K/2) log s + (g/2s) w^T H w
    with s = A_jj - b^T A_S^-1 b the Schur complement and w = (A_S^-1 b, -1);
    removal is the reverse move. Each proposal costs O(q^2).
    """

    def __init__(self, target: CollapsedGammaTarget, gamma):
        self.t = target
        self.idx = list(np.flatnonzero(gamma))
        q = len(self.idx)
        self.HS = target.H[np.ix_(self.idx, self.idx)]
        if q:
            A = np.eye(q) + target.g * target.Omega[np.ix_(self.idx, self.idx)]
            try:
                cf = cho_factor(A, lower=True)
            except np.linalg.LinAlgError:
                raise SamplerError("I + g Omega_gg is not positive definite") from None
            self.Ainv = cho_solve(cf, np.eye(q))
        else:
            self.Ainv = np.zeros((0, 0))

    def _prior_step(self, q_new):
        t = self.t
        return log_gamma_prior(q_new, t.p, t.c, t.d) - log_gamma_prior(len(self.idx), t.p, t.c, t.d)

    def delta(self, j, adding: bool):
        """Change in log density from flipping gene j, plus cached pieces for commit."""
        t = self.t
        if adding:
            b = t.g * t.Omega[self.idx, j]
            u = self.Ainv @ b
            s = 1.0 + t.g * t.Omega[j, j] - b @ u
            if s <= 0:
                raise SamplerError("I + g Omega_gg is not positive definite")
            h = t.H[self.idx, j]
            quad = u @ self.HS @ u - 2.0 * (u @ h) + t.H[j, j]
            d = -0.5 * t.K * np.log(s) + 0.5 * t.g * quad / s
            return d + self._prior_step(len(self.idx) + 1), (u, s)
        pos = self.idx.index(j)
        a = self.Ainv[:, pos]
        s = 1.0 / a[pos]
        d = 0.5 * t.K * np.log(s) - 0.5 * t.g * s * (a @ self.HS @ a)
        return d + self._prior_step(len(self.idx) - 1), (pos,)

    def commit(self, j, adding: bool, cache):
        t = self.t
        if adding:
            u, s = cache
            q = len(self.idx)
            Ainv = np.empty((q + 1, q + 1))
            Ainv[:q, :q] = self.Ainv + np.outer(u, u) / s
            Ainv[:q, q] = Ainv[q, :q] = -u / s
            Ainv[q, q] = 1.0 / s
            self.Ainv = Ainv
            self.idx.append(j)
        else:
            (pos,) = cache
            col = self.Ainv[:, pos]
            Ainv = self.Ainv - np.outer(col, col) / col[pos]
            keep = np.arange(len(self.idx)) != pos
            self.Ainv = Ainv[np.ix_(keep, keep)]
            del self.idx[pos]
        self.HS = t.H[np.ix_(self.idx, self.idx)]


def update_gamma(state: ModelState, design, hyper: Hyperparameters, rng, n_flips: int | None = None,
                 target: CollapsedGammaTarget | None = None):
    """Single-site flip Metropolis-Hastings on gamma; returns (gamma, n_accepted).

    The uniform one-flip proposal is symmetric, so the acceptance ratio is
    the ratio of collapsed densities.
    """
    p = state.gamma.size
    n_flips = p if n_flips is None else n_flips
    if target is None:
        target = CollapsedGammaTarget(state.Y, state.alpha, state.Omega, state.g, design, hyper)
    gamma = state.gamma.copy()
    walker = _FlipWalker(target, gamma)
    accepted = 0
    js = rng.integers(p, size=n_flips)
    logu = np.log(rng.random(n_flips))
    for j, lu in zip(js, logu):
        adding = not gamma[j]
        d, cache = walker.delta(j, adding)
        if lu < d:
            walker.commit(j, adding, cache)
            gamma[j] = adding
            accepted += 1
    return gamma, accepted


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def init_state(counts: np.ndarray, design, sizes: np.ndarray, hyper: Hyperparameters, config: GibbsConfig,
               executor=None) -> ModelState:
    """Y = log((C + 0.5) / N), alpha = column means, B = 0, gamma = 0, Sigma = I, g = 1."""
    design = Design.of(design)
    n, p = counts.shape
    Y = np.log((counts + 0.5) / sizes[:, None])
    state = ModelState(
        Y=Y,
        W=np.ones((n, p)),
        alpha=Y.mean(axis=0),
        B=np.zeros((design.K, p)),
        Sigma=np.eye(p),
        Omega=np.eye(p),
        g=1.0,
        gamma=np.zeros(p, dtype=bool),
    )
    stream = RngStream(config.seed, _STREAM_INIT)
    rngs = [stream.generator(k) for k in range(len(_blocks(n)))]
    state.W = update_W(state, counts, sizes, rngs, executor)
    return state


def _recorder(config: GibbsConfig, p: int):
    m = config.n_kept
    rec = {"gamma": np.zeros((m, p), dtype=np.uint8), "iterations": np.zeros(m, dtype=np.int64)}
    if config.record_traces:
        rec.update(alpha=np.zeros((m, p)), g=np.zeros(m), sigma_diag=np.zeros((m, p)))
    return rec


def _record(rec, slot: int, it: int, state: ModelState):
    rec["gamma"][slot] = state.gamma
    rec["iterations"][slot] = it
    if "g" in rec:
        rec["alpha"][slot] = state.alpha
        rec["g"][slot] = state.g
        rec["sigma_diag"][slot] = np.diag(state.Sigma)


def save_checkpoint(path, state: ModelState, next_iter: int, rec: dict, n_accepted: int, n_proposed: int,
                    seed: int) -> None:
    arrays = {f"state_{k}": np.asarray(v) for k, v in vars(state).items()}
    arrays.update({f"rec_{k}": v for k, v in rec.items()})
    np.savez(path, version=CHECKPOINT_VERSION, next_iter=next_iter, n_accepted=n_accepted,
             n_proposed=n_proposed, seed=seed, **arrays)


def load_checkpoint(path):
    """Returns (state, next_iter, recorder, n_accepted, n_proposed, seed)."""
    with np.load(path) as z:
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise SamplerError(f"unsupported checkpoint version {int(z['version'])}")
        st = {k[6:]: z[k] for k in z.files if k.startswith("state_")}
        rec = {k[4:]: z[k].copy() for k in z.files if k.startswith("rec_")}
        state = ModelState(st["Y"].copy(), st["W"].copy(), st["alpha"].copy(), st["B"].copy(),
                           st["Sigma"].copy(), st["Omega"].copy(), float(st["g"]),
                           st["gamma"].astype(bool))
        return (state, int(z["next_iter"]), rec, int(z["n_accepted"]), int(z["n_proposed"]),
                int(z["seed"]))


def _scan_parameters(state: ModelState, design: Design, hyper: Hyperparameters, rng, n_flips: int):
    """alpha -> gamma (B collapsed) -> B -> Sigma -> g; returns accepted flips."""
    state.alpha = update_alpha(state, design, hyper, rng)
    state.gamma, acc = update_gamma(state, design, hyper, rng, n_flips)
    state.B = update_B(state, design, hyper, rng)
    state.Sigma, state.Omega = update_Sigma(state, design, hyper, rng)
    state.g = update_g(state, design, hyper, rng)
    return acc


def _run_chain(step, state: ModelState, p: int, config: GibbsConfig, checkpoint, checkpoint_every,
               resume, gene_ids, label):
    n_flips = config.mh_flips_per_scan or p
    start, n_acc, n_prop = 0, 0, 0
    rec = _recorder(config, p)
    if resume is not None:
        state, start, rec, n_acc, n_prop, seed = load_checkpoint(resume)
        if seed != config.seed:
            raise SamplerError(f"checkpoint seed {seed} differs from config seed {config.seed}")
    slot = sum(1 for it in range(start) if config.keeps(it))
    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    t0 = time.perf_counter()
    try:
        for it in range(start, config.n_iter):
            try:
                n_acc += step(state, it, n_flips, executor)
            except (SamplerError, np.linalg.LinAlgError, ValueError) as exc:
                raise SamplerError(f"{label}: iteration {it}: {exc}") from exc
            n_prop += n_flips
            if config.keeps(it):
                _record(rec, slot, it, state)
                slot += 1
            if checkpoint is not None and checkpoint_every and (it + 1) % checkpoint_every == 0:
                save_checkpoint(checkpoint, state, it + 1, rec, n_acc, n_prop, config.seed)
            if (it + 1) % 500 == 0:
                log.info("%s: iteration %d/%d, q=%d, g=%.3g", label, it + 1, config.n_iter, state.q, state.g)
    finally:
        if executor is not None:
            executor.shutdown()
    return PosteriorSamples(
        gamma_draws=rec["gamma"],
        alpha=rec.get("alpha"),
        g=rec.get("g"),
        sigma_diag=rec.get("sigma_diag"),
        iterations=rec["iterations"],
        accept_rate=n_acc / n_prop if n_prop else float("nan"),
        gene_ids=tuple(gene_ids),
        meta={"sampler": label, "seconds": time.perf_counter() - t0, "final_state": state},
    )


def run_gibbs(counts, design, sizes, hyper: Hyperparameters | None = None, config: GibbsConfig | None = None,
              *, gene_ids=(), offset=None, state: ModelState | None = None, checkpoint=None,
              checkpoint_every: int = 0, resume=None) -> PosteriorSamples:
    """Full count-level sampler.

    ``counts`` is p x n (genes as rows, as stored in CountsDataset) and
    ``sizes`` the n library sizes N_i. Each scan runs
    W -> Y -> alpha -> gamma -> B -> Sigma -> g.
    """
    config = config or GibbsConfig()
    C = np.asarray(counts, dtype=float).T
    n, p = C.shape
    sizes = np.asarray(sizes, dtype=float)
    if sizes.shape != (n,) or np.any(sizes <= 0):
        raise ValueError("sizes must be n positive values")
    design = Design.of(design)
    if design.n != n:
        raise ValueError(f"design has {design.n} rows for {n} locations")
    hyper = (hyper or Hyperparameters()).resolved(p)
    if state is None and resume is None:
        state = init_state(C, design, sizes, hyper, config)
    n_blocks = len(_blocks(n))
    w_stream, y_stream = RngStream(config.seed, _STREAM_W), RngStream(config.seed, _STREAM_Y)
    g_stream = RngStream(config.seed, _STREAM_GLOBAL)

    def step(st: ModelState, it: int, n_flips: int, executor) -> int:
        st.W = update_W(st, C, sizes, [w_stream.generator(it, k) for k in range(n_blocks)], executor)
        st.Y = update_Y(st, C, design, sizes, [y_stream.generator(it, k) for k in range(n_blocks)],
                        executor, offset)
        return _scan_parameters(st, design, hyper, g_stream.generator(it), n_flips)

    return _run_chain(step, state, p, config, checkpoint, checkpoint_every, resume, gene_ids, "jasper")
