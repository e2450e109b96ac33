"""Count matrices, library sizes and normalization."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


class DataError(ValueError):
    """Raised when an input file or array violates the data contracts."""


@dataclass(frozen=True)
class CountsDataset:
    """Gene x location count matrix.

    ``counts[j, i]`` is the count of gene ``j`` at location ``i``.
    ``coords`` may be ``None`` for a partially loaded dataset.
    """

    counts: np.ndarray
    gene_ids: tuple[str, ...]
    location_ids: tuple[str, ...]
    coords: np.ndarray | None = None
    removed_genes: tuple[str, ...] = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise DataError("counts must be a 2-d array")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
                raise DataError("counts must be integral")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            j, i = np.argwhere(counts < 0)[0]
            raise DataError(f"negative count for gene {j}, location {i}")
        p, n = counts.shape
        if p < 1 or n < 2:
            raise DataError(f"need at least 1 gene and 2 locations, got {p}x{n}")
        if len(self.gene_ids) != p or len(self.location_ids) != n:
            raise DataError("label lengths do not match the count matrix")
        if len(set(self.location_ids)) != n:
            raise DataError("duplicate location ids")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "gene_ids", tuple(self.gene_ids))
        object.__setattr__(self, "location_ids", tuple(self.location_ids))
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=float)
            if coords.ndim != 2 or coords.shape[0] != n or coords.shape[1] not in (2, 3):
                raise DataError("coords must be n x 2 or n x 3")
            if not np.all(np.isfinite(coords)):
                raise DataError("coords must be finite")
            object.__setattr__(self, "coords", coords)

    @property
    def n_genes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_locations(self) -> int:
        return self.counts.shape[1]

    def with_coords(self, coords: np.ndarray) -> "CountsDataset":
        return CountsDataset(self.counts, self.gene_ids, self.location_ids, coords, self.removed_genes)

    def subset_genes(self, mask: np.ndarray) -> "CountsDataset":
        mask = np.asarray(mask, dtype=bool)
        removed = self.removed_genes + tuple(g for g, k in zip(self.gene_ids, mask) if not k)
        return CountsDataset(
            self.counts[mask],
            tuple(g for g, k in zip(self.gene_ids, mask) if k),
            self.location_ids,
            self.coords,
            removed,
        )


@dataclass(frozen=True)
class SizeFactors:
    values: np.ndarray
    method: str  # "raw-library", "tmm" or "user-supplied"
    fallback: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or not np.all(values > 0) or not np.all(np.isfinite(values)):
            raise DataError("size factors must be positive and finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class NormalizedMatrix:
    """Normalized expression, genes as rows; ``median_depth`` is the ``m`` used."""

    values: np.ndarray
    median_depth: float
    gene_ids: tuple[str, ...] = field(default=())

    @property
    def T(self) -> np.ndarray:
        return self.values.T


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

MM_HEADER = "%%MatrixMarket matrix coordinate integer general"


def _sniff_delimiter(first_line: str) -> str:
    return "\t" if first_line.count("\t") >= first_line.count(",") and "\t" in first_line else ","


def _parse_int(token: str, where: str) -> int:
    token = token.strip()
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"non-numeric count {token!r} at {where}") from None
    if not np.isfinite(value) or value != int(value):
        raise DataError(f"non-integer count {token!r} at {where}")
    if value < 0:
        raise DataError(f"negative count {token!r} at {where}")
    return int(value)


def load_counts(path, layout: str = "genes-as-rows") -> CountsDataset:
    """Read a dense delimited table or a MatrixMarket coordinate file.

    Dense files carry location ids in the header and gene ids in the first
    column (transposed when ``layout == "locations-as-rows"``). Sparse files
    use 1-based ``gene location count`` triples; labels default to the
    1-based indices.
    """
    if layout not in ("genes-as-rows", "locations-as-rows"):
        raise DataError(f"unknown layout {layout!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"counts file not found: {path}")
    text = path.read_text()
    if text.startswith("%%MatrixMarket"):
        counts, rows, cols = _read_matrix_market(text)
    else:
        counts, rows, cols = _read_dense(text)
    if layout == "locations-as-rows":
        counts, rows, cols = counts.T, cols, rows
    return CountsDataset(counts, tuple(rows), tuple(cols))


def _read_dense(text: str):
    lines = text.splitlines()
    if not lines:
        raise DataError("empty counts file")
    delim = _sniff_delimiter(lines[0])
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    header = next(reader)
    col_ids = [h.strip() for h in header[1:]]
    row_ids, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        label = row[0].strip()
        row_ids.append(label)
        rows.append([_parse_int(tok, f"line {lineno} ({label}, {col_ids[k]})") for k, tok in enumerate(row[1:])])
    if not rows:
        raise DataError("counts file has no data rows")
    return np.array(rows, dtype=np.int64), row_ids, col_ids


def _read_matrix_market(text: str):
    lines = text.splitlines()
    if lines[0].strip().lower() != MM_HEADER.lower():
        raise DataError(f"line 1: unsupported MatrixMarket header {lines[0]!r}")
    body = [(k, ln) for k, ln in enumerate(lines[1:], start=2) if ln.strip() and not ln.startswith("%")]
    if not body:
        raise DataError("MatrixMarket file has no size line")
    lineno, size_line = body[0]
    try:
        p, n, nnz = (int(x) for x in size_line.split())
    except ValueError:
        raise DataError(f"line {lineno}: malformed size line {size_line!r}") from None
    counts = np.zeros((p, n), dtype=np.int64)
    entries = body[1:]
    if len(entries) != nnz:
        raise DataError(f"expected {nnz} entries, found {len(entries)}")
    for lineno, ln in entries:
        parts = ln.split()
        if len(parts) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            j, i = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"line {lineno}: malformed indices") from None
        if not (1 <= j <= p and 1 <= i <= n):
            raise DataError(f"line {lineno}: index ({j}, {i}) out of range")
        counts[j - 1, i - 1] = _parse_int(parts[2], f"line {lineno} (gene {j}, location {i})")
    return counts, [str(k + 1) for k in range(p)], [str(k + 1) for k in range(n)]


def write_counts(data: CountsDataset, path, sparse: bool = False, delimiter: str = ",") -> None:
    path = Path(path)
    if sparse:
        nz = np.argwhere(data.counts)
        with path.open("w") as fh:
            fh.write(MM_HEADER + "\n")
            fh.write(f"{data.n_genes} {data.n_locations} {len(nz)}\n")
            for j, i in nz:
                fh.write(f"{j + 1} {i + 1} {data.counts[j, i]}\n")
        return
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["gene", *data.location_ids])
        for gid, row in zip(data.gene_ids, data.counts):
            w.writerow([gid, *row.tolist()])


def load_coords(path, location_ids) -> np.ndarray:
    """Read ``location_id, x, y[, z]`` rows and align them to ``location_ids``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"coordinates file not found: {path}")
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise DataError(f"empty coordinates file: {path}")
    delim = _sniff_delimiter(lines[0])
    rows = list(csv.reader(io.StringIO(text), delimiter=delim))
    start = 0
    try:
        float(rows[0][1])
    except (ValueError, IndexError):
        start = 1  # header row
    table: dict[str, list[float]] = {}
    width = None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if width is None:
            width = len(row)
            if width - 1 not in (2, 3):
                raise DataError(f"line {lineno}: coordinates must have 2 or 3 dimensions")
        if len(row) != width:
            raise DataError(f"line {lineno}: expected {width} fields, got {len(row)}")
        loc = row[0].strip()
        if loc in table:
            raise DataError(f"line {lineno}: duplicate location id {loc!r}")
        try:
            table[loc] = [float(x) for x in row[1:]]
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric coordinate") from None
    missing = [loc for loc in location_ids if loc not in table]
    if missing:
        raise DataError(f"{len(missing)} locations lack coordinates, e.g. {missing[0]!r}")
    return np.array([table[loc] for loc in location_ids], dtype=float)


def write_coords(location_ids, coords: np.ndarray, path) -> None:
    names = ["location_id", "x", "y", "z"][: coords.shape[1] + 1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for loc, row in zip(location_ids, coords):
            w.writerow([loc, *(repr(float(v)) for v in row)])


def load_expression(path) -> tuple[NormalizedMatrix, tuple[str, ...]]:
    """Read a real-valued genes-as-rows table; returns (matrix, location ids).

    ``median_depth`` is nan because the normalization is not ours.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"expression file not found: {path}")
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise DataError(f"empty expression file: {path}")
    reader = csv.reader(io.StringIO(text), delimiter=_sniff_delimiter(lines[0]))
    header = next(reader)
    loc_ids = tuple(h.strip() for h in header[1:])
    genes, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(tok) for tok in row[1:]]
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric expression value") from None
        if not all(np.isfinite(values)):
            raise DataError(f"line {lineno}: expression values must be finite")
        genes.append(row[0].strip())
        rows.append(values)
    if not rows:
        raise DataError("expression file has no data rows")
    if len(set(loc_ids)) != len(loc_ids):
        raise DataError("duplicate location ids")
    return NormalizedMatrix(np.array(rows), float("nan"), tuple(genes)), loc_ids


def load_size_factors(path, location_ids) -> SizeFactors:
    """Read ``location_id, size`` rows (header optional), aligned to ``location_ids``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"size factor file not found: {path}")
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise DataError(f"empty size factor file: {path}")
    rows = list(csv.reader(io.StringIO(text), delimiter=_sniff_delimiter(lines[0])))
    table = {}
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            table[row[0].strip()] = float(row[1])
        except ValueError:
            if lineno == 1:
                continue  # header
            raise DataError(f"line {lineno}: non-numeric size factor") from None
    missing = [loc for loc in location_ids if loc not in table]
    if missing:
        raise DataError(f"{len(missing)} locations lack size factors, e.g. {missing[0]!r}")
    return SizeFactors(np.array([table[loc] for loc in location_ids]), "user-supplied")


# ---------------------------------------------------------------------------
# Size factors
# ---------------------------------------------------------------------------

def library_sizes(data: CountsDataset) -> SizeFactors:
    totals = data.counts.sum(axis=0)
    zero = np.flatnonzero(totals == 0)
    if zero.size:
        raise DataError(f"location {data.location_ids[zero[0]]!r} (index {zero[0]}) has zero total count")
    return SizeFactors(totals.astype(float), "raw-library")


def _upper_quartile_reference(counts: np.ndarray, lib: np.ndarray) -> int:
    f75 = np.quantile(counts, 0.75, axis=0) / lib
    return int(np.argmin(np.abs(f75 - f75.mean())))


def _tmm_factor(obs, ref, n_obs, n_ref, trim_m, trim_a) -> float:
    keep = (obs > 0) & (ref > 0)
    obs, ref = obs[keep].astype(float), ref[keep].astype(float)
    if obs.size == 0:
        return np.nan
    log_r = np.log2((obs / n_obs) / (ref / n_ref))
    abs_e = 0.5 * (np.log2(obs / n_obs) + np.log2(ref / n_ref))
    var = (n_obs - obs) / n_obs / obs + (n_ref - ref) / n_ref / ref
    m = log_r.size
    lo_m = np.floor(m * trim_m) + 1
    hi_m = m + 1 - lo_m
    lo_a = np.floor(m * trim_a) + 1
    hi_a = m + 1 - lo_a
    r_m = rankdata(log_r)
    r_a = rankdata(abs_e)
    sel = (r_m >= lo_m) & (r_m <= hi_m) & (r_a >= lo_a) & (r_a <= hi_a)
    if not sel.any():
        return np.nan
    f = np.sum(log_r[sel] / var[sel]) / np.sum(1.0 / var[sel])
    return 2.0 ** f


def tmm_size_factors(
    data: CountsDataset,
    trim_m: float = 0.30,
    trim_a: float = 0.05,
    reference: int | None = None,
) -> SizeFactors:
    """TMM-adjusted library sizes (weighted trimmed mean of log-ratios).

    Factors are rescaled to geometric mean 1. If any comparison has no
    genes left after trimming, raw library sizes are returned with
    ``fallback=True``.
    """
    if not (0 <= trim_m < 0.5 and 0 <= trim_a < 0.5):
        raise DataError("trim fractions must lie in [0, 0.5)")
    raw = library_sizes(data).values
    counts = data.counts
    if reference is None:
        reference = _upper_quartile_reference(counts, raw)
    factors = np.array([
        _tmm_factor(counts[:, i], counts[:, reference], raw[i], raw[reference], trim_m, trim_a)
        for i in range(data.n_locations)
    ])
    if not np.all(np.isfinite(factors)) or np.any(factors <= 0):
        warnings.warn("TMM trimming left no genes for some location; using raw library sizes")
        return SizeFactors(raw, "tmm", fallback=True)
    factors = factors / np.exp(np.mean(np.log(factors)))
    return SizeFactors(raw * factors, "tmm")


def filter_low_count_genes(data: CountsDataset, min_total: int = 100) -> CountsDataset:
    if min_total < 0:
        raise DataError("min_total must be non-negative")
    keep = data.counts.sum(axis=1) >= min_total
    if not keep.any():
        raise DataError(f"no gene has at least {min_total} total counts")
    return data.subset_genes(keep)


def median_depth(values: np.ndarray, midpoint: bool = False) -> float:
    """Median library size; the lower median for even n unless ``midpoint``."""
    s = np.sort(np.asarray(values, dtype=float))
    n = s.size
    if n % 2 or not midpoint:
        return float(s[(n - 1) // 2])
    return float(0.5 * (s[n // 2 - 1] + s[n // 2]))


def normalize(data: CountsDataset, sizes: SizeFactors, midpoint: bool = False) -> NormalizedMatrix:
    """log(1 + m (C + 0.01) / N) with m the median size."""
    n_i = sizes.values
    if n_i.shape != (data.n_locations,):
        raise DataError("size factors do not match the number of locations")
    m = median_depth(n_i, midpoint=midpoint)
    y = np.log1p(m * (data.counts + 0.01) / n_i[None, :])
    return NormalizedMatrix(y, m, data.gene_ids)
