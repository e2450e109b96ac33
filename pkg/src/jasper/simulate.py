"""Synthetic spatial expression with known spatially varying genes."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import CountsDataset, NormalizedMatrix, write_coords, write_counts
from .samplers import KernelSpec, as_generator, sample_gp

SETTING1_LOADINGS = (2.0, -2.0, 3.0, 1.0, 4.0)
SETTING2_LEVELS = (-4, -3, -2, -1, 1, 2, 3, 4)
SHORT_LENGTHSCALE = 0.05


@dataclass
class SimConfig:
    setting: str = "setting2"  # setting1, setting2 or kernel-misspec
    n: int = 200
    p: int = 100
    n_svg: int = 20
    psi: float = 0.5
    rho: float = 0.0
    seed: int = 0
    nb_size: float = 1000.0
    # kernel-misspec only
    noise_var: float = 0.1
    kernel_var: float = 0.1
    period: float = 0.25
    lengthscale_shape: float = 5.0
    lengthscale_rate: float = 2.0

    def __post_init__(self):
        if self.setting not in ("setting1", "setting2", "kernel-misspec"):
            raise ValueError(f"unknown setting {self.setting!r}")
        if not 0 <= self.n_svg <= self.p:
            raise ValueError("n_svg must lie in [0, p]")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.setting == "setting2" and not 0.01 < self.psi <= 1:
            raise ValueError("setting2 needs 0.01 < psi <= 1")
        if self.setting == "setting1" and not 0 <= self.psi <= 1:
            raise ValueError("setting1 needs 0 <= psi <= 1")

    @classmethod
    def kernel_misspec(cls, seed: int = 0, **kw) -> "SimConfig":
        return cls(setting="kernel-misspec", n=200, p=50, n_svg=10, seed=seed, **kw)


@dataclass
class SyntheticDataset:
    coords: np.ndarray
    svg_truth: np.ndarray
    config: SimConfig
    counts: CountsDataset | None = None
    normalized: NormalizedMatrix | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def gene_ids(self):
        return self.counts.gene_ids if self.counts is not None else self.normalized.gene_ids


def _ids(prefix, m):
    return tuple(f"{prefix}{k + 1}" for k in range(m))


def uniform_locations(n, rng) -> np.ndarray:
    return rng.random((n, 2))


def equicorrelated_noise(n, p, rho, rng) -> np.ndarray:
    """n x p rows ~ N(0, (1 - rho) I + rho 11^T)."""
    common = rng.standard_normal((n, 1))
    return np.sqrt(rho) * common + np.sqrt(1 - rho) * rng.standard_normal((n, p))


def nb_from_logit(logit, size: float = 1000.0, rng=None) -> np.ndarray:
    """Negative binomial counts with ``size`` failures and success probability
    logistic(logit): mean size * exp(logit), variance mean (1 + mean / size).

    Drawn as a gamma-Poisson mixture.
    """
    rng = as_generator(rng)
    logit = np.asarray(logit, dtype=float)
    if np.any(np.isnan(logit)) or np.any(logit == np.inf):
        raise ValueError("logits must be finite or -inf")
    rate = rng.gamma(size, np.exp(np.minimum(logit, 30.0)))
    return rng.poisson(rate).astype(np.int64)


def _choose_svgs(p, n_svg, rng) -> np.ndarray:
    truth = np.zeros(p, dtype=bool)
    truth[rng.choice(p, size=n_svg, replace=False)] = True
    return truth


def simulate_setting1(cfg: SimConfig, rng=None) -> SyntheticDataset:
    """mu_j = alpha_j + sum_k beta_kj Z_k with beta_kj ~ N(psi_j m_k, 0.1)."""
    rng = as_generator(cfg.seed if rng is None else rng)
    coords = uniform_locations(cfg.n, rng)
    Z = sample_gp(coords, KernelSpec("matern32", 1.0, SHORT_LENGTHSCALE), rng, size=len(SETTING1_LOADINGS))
    truth = _choose_svgs(cfg.p, cfg.n_svg, rng)
    alpha = rng.normal(-10.0, 1.0, size=cfg.p)
    psi_j = np.where(truth, cfg.psi, 0.0)
    beta = rng.normal(psi_j[None, :] * np.array(SETTING1_LOADINGS)[:, None], np.sqrt(0.1),
                      size=(len(SETTING1_LOADINGS), cfg.p))
    mu = alpha[None, :] + Z.T @ beta  # n x p
    logit = mu + equicorrelated_noise(cfg.n, cfg.p, cfg.rho, rng)
    counts = nb_from_logit(logit.T, cfg.nb_size, rng)
    data = CountsDataset(counts, _ids("gene", cfg.p), _ids("loc", cfg.n), coords)
    return SyntheticDataset(coords, truth, cfg, counts=data,
                            provenance={"alpha": alpha, "beta": beta, "fields": Z, "mu": mu})


def simulate_setting2(cfg: SimConfig, rng=None) -> SyntheticDataset:
    """mu_j = -10 + sum_k beta_kj T_k; SVGs load on long-range W_k, others on short-range Z_k."""
    rng = as_generator(cfg.seed if rng is None else rng)
    coords = uniform_locations(cfg.n, rng)
    Z = sample_gp(coords, KernelSpec("matern32", 1.0, SHORT_LENGTHSCALE), rng, size=10)
    W = sample_gp(coords, KernelSpec("matern32", 1.0, 0.5 * cfg.psi), rng, size=10)
    truth = _choose_svgs(cfg.p, cfg.n_svg, rng)
    beta = rng.choice(np.array(SETTING2_LEVELS, dtype=float), size=(10, cfg.p))
    mu = -10.0 + np.where(truth[None, :], W.T @ beta, Z.T @ beta)
    logit = mu + equicorrelated_noise(cfg.n, cfg.p, cfg.rho, rng)
    counts = nb_from_logit(logit.T, cfg.nb_size, rng)
    data = CountsDataset(counts, _ids("gene", cfg.p), _ids("loc", cfg.n), coords)
    return SyntheticDataset(coords, truth, cfg, counts=data,
                            provenance={"beta": beta, "fields_short": Z, "fields_long": W, "mu": mu})


def simulate_kernel_misspec(cfg: SimConfig | None = None, rng=None) -> SyntheticDataset:
    """Normalized expression Y_j = f_j + eps with periodic-kernel GP f_j for the first n_svg genes.

    The periodic kernel is not positive definite in Euclidean distance on
    the plane, so fields use the eigenvalue-clipped covariance.
    """
    cfg = cfg or SimConfig.kernel_misspec()
    rng = as_generator(cfg.seed if rng is None else rng)
    coords = uniform_locations(cfg.n, rng)
    truth = np.zeros(cfg.p, dtype=bool)
    truth[: cfg.n_svg] = True
    lengthscales = rng.gamma(cfg.lengthscale_shape, 1.0 / cfg.lengthscale_rate, size=cfg.n_svg)
    f = np.zeros((cfg.n, cfg.p))
    for j, ell in enumerate(lengthscales):
        spec = KernelSpec("exp-sine-squared", cfg.kernel_var, float(ell), cfg.period)
        f[:, j] = sample_gp(coords, spec, rng, method="eigen-clip")
    Y = f + rng.normal(0.0, np.sqrt(cfg.noise_var), size=(cfg.n, cfg.p))
    norm = NormalizedMatrix(Y.T, float("nan"), _ids("gene", cfg.p))
    return SyntheticDataset(coords, truth, cfg, normalized=norm,
                            provenance={"lengthscales": lengthscales, "fields": f})


def simulate(cfg: SimConfig, rng=None) -> SyntheticDataset:
    fn = {"setting1": simulate_setting1, "setting2": simulate_setting2,
          "kernel-misspec": simulate_kernel_misspec}[cfg.setting]
    return fn(cfg, rng)


def write_normalized(norm: NormalizedMatrix, location_ids, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gene", *location_ids])
        for gid, row in zip(norm.gene_ids, norm.values):
            w.writerow([gid, *(repr(float(v)) for v in row)])


def write_truth(gene_ids, truth, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gene_id", "svg"])
        for gid, t in zip(gene_ids, truth):
            w.writerow([gid, int(t)])


def read_truth(path):
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return [r["gene_id"] for r in rows], np.array([int(r["svg"]) for r in rows], dtype=bool)


def write_synthetic(ds: SyntheticDataset, outdir) -> dict:
    """Write counts (or expression), coords, truth and provenance; returns the file map."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    loc_ids = _ids("loc", ds.config.n)
    files = {"coords": "coords.csv", "truth": "truth.csv", "provenance": "provenance.npz"}
    if ds.counts is not None:
        write_counts(ds.counts, outdir / "counts.csv")
        files["counts"] = "counts.csv"
    else:
        write_normalized(ds.normalized, loc_ids, outdir / "expression.csv")
        files["expression"] = "expression.csv"
    write_coords(loc_ids, ds.coords, outdir / "coords.csv")
    write_truth(ds.gene_ids, ds.svg_truth, outdir / "truth.csv")
    np.savez(outdir / "provenance.npz", coords=ds.coords, truth=ds.svg_truth, **ds.provenance)
    (outdir / "sim_config.json").write_text(json.dumps(asdict(ds.config), indent=2, sort_keys=True) + "\n")
    files["config"] = "sim_config.json"
    return files
