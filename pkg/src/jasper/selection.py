"""Posterior inclusion probabilities and Bayesian FDR selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SelectionReport:
    ppi: np.ndarray
    threshold_c: float  # genes with ppi > threshold_c are selected
    pefdr_at_c: float
    selected: np.ndarray  # sorted gene indices
    target: float = 0.05
    empty: bool = False

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.ppi.size, dtype=bool)
        m[self.selected] = True
        return m


def compute_ppi(gamma_draws) -> np.ndarray:
    draws = np.asarray(gamma_draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 1:
        raise ValueError("need at least one draw of gamma")
    return draws.mean(axis=0)


def pefdr(ppi, cutoff: float) -> float:
    """Posterior expected FDR of {j : 1 - ppi_j < cutoff}; nan if that set is empty."""
    miss = 1.0 - np.asarray(ppi, dtype=float)
    sel = miss < cutoff
    if not sel.any():
        return float("nan")
    return float(miss[sel].sum() / sel.sum())


def pefdr_select(ppi, target: float = 0.05) -> SelectionReport:
    """Largest PPI-thresholded gene set whose peFDR is at most ``target``.

    Genes with equal PPI enter together, so candidate sets end at value
    boundaries of the sorted PPIs.
    """
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    ppi = np.asarray(ppi, dtype=float)
    order = np.argsort(-ppi, kind="stable")
    sorted_ppi = ppi[order]
    cum = np.cumsum(1.0 - sorted_ppi) / np.arange(1, ppi.size + 1)
    # a prefix of length k is admissible only if it does not split a tie
    boundary = np.append(sorted_ppi[1:] < sorted_ppi[:-1], True)
    ok = np.flatnonzero(boundary & (cum <= target + 1e-15))
    if ok.size == 0:
        return SelectionReport(ppi, 1.0, float("nan"), np.array([], dtype=int), target, empty=True)
    k = ok[-1] + 1
    selected = np.sort(order[:k])
    if k < ppi.size:
        threshold = float(sorted_ppi[k])
    else:
        threshold = float(np.nextafter(sorted_ppi[-1], -np.inf))
    return SelectionReport(ppi, threshold, float(cum[k - 1]), selected, target)


def write_selection(report: SelectionReport, gene_ids, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gene_id", "ppi", "selected", "threshold_c", "pefdr"])
        mask = report.mask
        for gid, v, s in zip(gene_ids, report.ppi, mask):
            w.writerow([gid, repr(float(v)), int(s), repr(report.threshold_c), repr(report.pefdr_at_c)])


def read_selection(path):
    """Returns (gene_ids, ppi, selected mask)."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    genes = [r["gene_id"] for r in rows]
    ppi = np.array([float(r["ppi"]) for r in rows])
    sel = np.array([r["selected"] in ("1", "True", "true") for r in rows])
    return genes, ppi, sel
