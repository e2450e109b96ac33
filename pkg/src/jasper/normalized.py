"""Gaussian sampler on normalized expression (no latent counts layer)."""

from __future__ import annotations

import numpy as np

from .data import NormalizedMatrix
from .gibbs import (
    _STREAM_GLOBAL,
    Design,
    GibbsConfig,
    Hyperparameters,
    ModelState,
    PosteriorSamples,
    _run_chain,
    _scan_parameters,
)
from .samplers import RngStream


def initial_state(Y: np.ndarray, K: int) -> ModelState:
    n, p = Y.shape
    return ModelState(
        Y=Y,
        W=np.ones((n, p)),
        alpha=Y.mean(axis=0),
        B=np.zeros((K, p)),
        Sigma=np.eye(p),
        Omega=np.eye(p),
        g=1.0,
        gamma=np.zeros(p, dtype=bool),
    )


def run_gibbs_normalized(Y, design, hyper: Hyperparameters | None = None, config: GibbsConfig | None = None,
                         *, gene_ids=(), state: ModelState | None = None, checkpoint=None,
                         checkpoint_every: int = 0, resume=None) -> PosteriorSamples:
    """Fit with Y fixed to the data: alpha -> gamma -> B -> Sigma -> g.

    ``Y`` is n x p (locations as rows). A NormalizedMatrix, which stores
    genes as rows, is transposed automatically.
    """
    if isinstance(Y, NormalizedMatrix):
        gene_ids = gene_ids or Y.gene_ids
        Y = Y.values.T
    Y = np.ascontiguousarray(Y, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise ValueError("normalized expression must be finite")
    config = config or GibbsConfig()
    design = Design.of(design)
    n, p = Y.shape
    if design.n != n:
        raise ValueError(f"design has {design.n} rows for {n} locations")
    hyper = (hyper or Hyperparameters()).resolved(p)
    if state is None and resume is None:
        state = initial_state(Y, design.K)
    stream = RngStream(config.seed, _STREAM_GLOBAL)

    def step(st, it, n_flips, executor):
        return _scan_parameters(st, design, hyper, stream.generator(it), n_flips)

    return _run_chain(step, state, p, config, checkpoint, checkpoint_every, resume, gene_ids,
                      "jasper-normalized")
