"""Batch command line: fit, fit-normalized, screen, simulate, evaluate, report, rerun.

Every command writes ``manifest.json`` next to its outputs. The manifest
holds the resolved arguments, input and output digests, the seed, the
package version and timings; ``jasper rerun --manifest M`` replays it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataError,
    filter_low_count_genes,
    library_sizes,
    load_coords,
    load_counts,
    load_expression,
    load_size_factors,
    normalize,
    tmm_size_factors,
)
from .gibbs import GibbsConfig, Hyperparameters, SamplerError, run_gibbs
from .metrics import confusion, knn_weights, morans_i_many
from .normalized import run_gibbs_normalized
from .screening import screen_genes
from .selection import pefdr_select, read_selection, write_selection
from .simulate import SimConfig, read_truth, simulate, write_synthetic
from .splines import SplineError, design_from_coords

log = logging.getLogger("jasper")

MANIFEST = "manifest.json"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; we reserve 2 for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    if not Path(path).exists():
        raise DataError(f"{what} file not found: {path}")
    return Path(path)


# ---------------------------------------------------------------------------
# Shared loading helpers
# ---------------------------------------------------------------------------

def _load_dataset(args):
    data = load_counts(_require(args.counts, "counts"), layout=args.layout)
    coords = load_coords(_require(args.coords, "coords"), data.location_ids)
    data = data.with_coords(coords)
    if args.min_total > 0:
        before = data.n_genes
        data = filter_low_count_genes(data, args.min_total)
        log.info("filtered %d of %d genes below %d total counts", before - data.n_genes, before, args.min_total)
    return data


def _size_factors(data, spec: str):
    if spec == "raw":
        return library_sizes(data)
    if spec == "tmm":
        sf = tmm_size_factors(data)
        if sf.fallback:
            log.warning("TMM fell back to raw library sizes")
        return sf
    if spec.startswith("file="):
        return load_size_factors(spec[len("file="):], data.location_ids)
    raise UsageError(f"--sizes must be raw, tmm or file=PATH, got {spec!r}")


def _design(args, coords):
    knots = [args.knots_x, args.knots_y] + ([args.knots_z] if coords.shape[1] == 3 else [])
    return design_from_coords(coords, knots)


def _dump_design(design, location_ids, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["location_id", *(f"b{'_'.join(map(str, ix))}" for ix in design.column_map)])
        for loc, row in zip(location_ids, design.X):
            w.writerow([loc, *(repr(float(v)) for v in row)])


def _expression_input(args):
    """Normalized expression from --expression, or normalize --counts on the fly."""
    if args.expression is not None:
        norm, loc_ids = load_expression(_require(args.expression, "expression"))
        coords = load_coords(_require(args.coords, "coords"), loc_ids)
        return norm, loc_ids, coords
    data = _load_dataset(args)
    norm = normalize(data, _size_factors(data, args.sizes))
    return norm, data.location_ids, data.coords


def _gibbs_config(args) -> GibbsConfig:
    return GibbsConfig(n_iter=args.iters, burn_in=args.burnin, thin=args.thin, seed=args.seed,
                       threads=args.threads)


def _write_fit_outputs(post, gene_ids, out: Path, target: float):
    report = pefdr_select(post.ppi, target=target)
    write_selection(report, gene_ids, out / "selection.csv")
    post.write_traces(out)
    with (out / "summary.json").open("w") as fh:
        json.dump({
            "n_genes": len(gene_ids),
            "n_selected": int(report.selected.size),
            "threshold_c": report.threshold_c,
            "pefdr": None if np.isnan(report.pefdr_at_c) else report.pefdr_at_c,
            "pefdr_target": target,
            "gamma_accept_rate": post.accept_rate,
            "kept_draws": int(post.gamma_draws.shape[0]),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# Commands; each returns the list of input files it read
# ---------------------------------------------------------------------------

def cmd_fit(args, out: Path):
    data = _load_dataset(args)
    sizes = _size_factors(data, args.sizes)
    design = _design(args, data.coords)
    if args.dump_design:
        _dump_design(design, data.location_ids, out / "design.csv")
    if args.bf_threshold > 0:
        res = screen_genes(normalize(data, sizes), design, bf_threshold=args.bf_threshold)
        res.write_csv(data.gene_ids, out / "screen.csv")
        if not res.keep.any():
            raise DataError(f"no gene passes the screen at BF >= {args.bf_threshold}")
        data = data.subset_genes(res.keep)
    post = run_gibbs(data.counts, design, sizes.values, Hyperparameters(), _gibbs_config(args),
                     gene_ids=data.gene_ids)
    report = _write_fit_outputs(post, data.gene_ids, out, args.pefdr)
    log.info("fit: %d of %d genes selected", report.selected.size, data.n_genes)
    return [args.counts, args.coords] + ([args.sizes[5:]] if args.sizes.startswith("file=") else [])


def cmd_fit_normalized(args, out: Path):
    norm, loc_ids, coords = _expression_input(args)
    design = _design(args, coords)
    if args.dump_design:
        _dump_design(design, loc_ids, out / "design.csv")
    gene_ids = norm.gene_ids
    Y = norm.values.T
    if args.bf_threshold > 0:
        res = screen_genes(Y, design, bf_threshold=args.bf_threshold)
        res.write_csv(gene_ids, out / "screen.csv")
        if not res.keep.any():
            raise DataError(f"no gene passes the screen at BF >= {args.bf_threshold}")
        Y = Y[:, res.keep]
        gene_ids = tuple(g for g, k in zip(gene_ids, res.keep) if k)
    post = run_gibbs_normalized(Y, design, Hyperparameters(), _gibbs_config(args), gene_ids=gene_ids)
    _write_fit_outputs(post, gene_ids, out, args.pefdr)
    return [p for p in (args.expression, args.counts, args.coords) if p is not None]


def cmd_screen(args, out: Path):
    norm, loc_ids, coords = _expression_input(args)
    design = _design(args, coords)
    if args.dump_design:
        _dump_design(design, loc_ids, out / "design.csv")
    res = screen_genes(norm.values.T, design, bf_threshold=args.bf_threshold)
    res.write_csv(norm.gene_ids, out / "screen.csv")
    log.info("screen: %d of %d genes kept", int(res.keep.sum()), res.keep.size)
    return [p for p in (args.expression, args.counts, args.coords) if p is not None]


def cmd_simulate(args, out: Path):
    setting = {"1": "setting1", "2": "setting2"}.get(args.setting, args.setting)
    if setting == "kernel-misspec":
        cfg = SimConfig.kernel_misspec(seed=args.seed)
    else:
        cfg = SimConfig(setting=setting, n=args.n, p=args.p, n_svg=args.n_svg, psi=args.psi, rho=args.rho,
                        seed=args.seed)
    write_synthetic(simulate(cfg), out)
    return []


def cmd_evaluate(args, out: Path):
    genes, _, selected = read_selection(_require(args.selection, "selection"))
    truth_genes, truth = read_truth(_require(args.truth, "truth"))
    lookup = dict(zip(truth_genes, truth))
    missing = [g for g in genes if g not in lookup]
    if missing:
        raise DataError(f"{len(missing)} selected-table genes lack truth labels, e.g. {missing[0]!r}")
    # genes removed before fitting count as not selected
    sel = dict(zip(genes, selected))
    t = np.array([lookup[g] for g in truth_genes])
    s = np.array([bool(sel.get(g, False)) for g in truth_genes])
    c = confusion(t, s)
    result = c.as_dict()
    with (out / "evaluation.json").open("w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"TPR={_fmt(c.tpr)} TNR={_fmt(c.tnr)} FPR={_fmt(c.fpr)} (tp={c.tp} fp={c.fp} tn={c.tn} fn={c.fn})")
    return [args.selection, args.truth]


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


def cmd_report(args, out: Path):
    norm, loc_ids, coords = _expression_input(args)
    W = knn_weights(coords, k=args.moran_k)
    moran = morans_i_many(norm.values.T, W)
    table = {g: {"gene_id": g, "morans_i": repr(float(m))} for g, m in zip(norm.gene_ids, moran)}
    inputs = [p for p in (args.expression, args.counts, args.coords) if p is not None]
    if args.selection:
        genes, ppi, sel = read_selection(_require(args.selection, "selection"))
        for g, v, s in zip(genes, ppi, sel):
            if g in table:
                table[g].update(ppi=repr(float(v)), selected=int(s))
        inputs.append(args.selection)
    if args.screen:
        with _require(args.screen, "screen").open() as fh:
            for row in csv.DictReader(fh):
                if row["gene_id"] in table:
                    table[row["gene_id"]].update(log_bf=row["log_bf"], keep=row["keep"])
        inputs.append(args.screen)
    cols = ["gene_id", "ppi", "selected", "log_bf", "keep", "morans_i"]
    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, cols, restval="", lineterminator="\n")
        w.writeheader()
        for g in norm.gene_ids:
            w.writerow(table[g])
    chosen = args.genes.split(",") if args.genes else list(norm.gene_ids[: args.top])
    index = {g: k for k, g in enumerate(norm.gene_ids)}
    unknown = [g for g in chosen if g not in index]
    if unknown:
        raise DataError(f"unknown gene {unknown[0]!r} in --genes")
    axes = ["x", "y", "z"][: coords.shape[1]]
    with (out / "surfaces.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gene_id", "location_id", *axes, "expression"])
        for g in chosen:
            for loc, xy, v in zip(loc_ids, coords, norm.values[index[g]]):
                w.writerow([g, loc, *(repr(float(c)) for c in xy), repr(float(v))])
    return inputs


COMMANDS = {
    "fit": cmd_fit,
    "fit-normalized": cmd_fit_normalized,
    "screen": cmd_screen,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_input(p, expression: bool):
    p.add_argument("--counts", help="count table (dense CSV/TSV or MatrixMarket)")
    if expression:
        p.add_argument("--expression", help="normalized expression table, genes as rows (instead of --counts)")
    p.add_argument("--coords", help="location_id,x,y[,z] table")
    p.add_argument("--layout", choices=["genes-as-rows", "locations-as-rows"], default="genes-as-rows")
    p.add_argument("--sizes", default="tmm", help="raw, tmm or file=PATH (default tmm)")
    p.add_argument("--min-total", type=int, default=100, help="drop genes with fewer total counts")


def _add_design(p):
    p.add_argument("--knots-x", type=int, default=2, help="interior knots on the first axis")
    p.add_argument("--knots-y", type=int, default=2, help="interior knots on the second axis")
    p.add_argument("--knots-z", type=int, default=2, help="interior knots on the third axis (3-d only)")
    p.add_argument("--dump-design", action="store_true", help="write the design matrix to design.csv")


def _add_chain(p, bf_default):
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--burnin", type=int, default=3000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--pefdr", type=float, default=0.05, help="posterior expected FDR target")
    p.add_argument("--bf-threshold", type=float, default=bf_default,
                   help="screen genes by Bayes factor before fitting (0 disables)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jasper", description="Joint Bayesian detection of spatially varying genes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, expr, help_ in (("fit", False, "full count-level sampler"),
                              ("fit-normalized", True, "Gaussian sampler on normalized expression")):
        p = sub.add_parser(name, help=help_)
        _add_input(p, expr)
        _add_design(p)
        _add_chain(p, 0.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)

    p = sub.add_parser("screen", help="per-gene Bayes-factor screen")
    _add_input(p, True)
    _add_design(p)
    p.add_argument("--bf-threshold", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="synthetic data with known SVGs")
    p.add_argument("--setting", choices=["1", "2", "setting1", "setting2", "kernel-misspec"], default="2")
    p.add_argument("--psi", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--n-svg", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="TPR/TNR of a selection against truth labels")
    p.add_argument("--selection", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="join PPI, screen and Moran's I; dump expression surfaces")
    _add_input(p, True)
    p.add_argument("--selection")
    p.add_argument("--screen")
    p.add_argument("--genes", help="comma-separated genes for surfaces.csv")
    p.add_argument("--top", type=int, default=5, help="surface genes when --genes is absent")
    p.add_argument("--moran-k", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rerun", help="replay a manifest and check output digests")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output directory (default: the recorded one)")
    p.add_argument("--threads", type=int, help="override the recorded thread count")
    return parser


# ---------------------------------------------------------------------------
# Execution and manifests
# ---------------------------------------------------------------------------

def _absolutize(args):
    for key in ("counts", "coords", "expression", "selection", "truth", "screen"):
        if getattr(args, key, None) is not None:
            setattr(args, key, str(Path(getattr(args, key)).resolve()))
    if getattr(args, "sizes", "").startswith("file="):
        args.sizes = "file=" + str(Path(args.sizes[5:]).resolve())
    args.out = str(Path(args.out).resolve())


def _execute(args) -> dict:
    _absolutize(args)
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in sorted(vars(args).items())}
    t0 = time.perf_counter()
    inputs = COMMANDS[args.command](args, out)
    elapsed = time.perf_counter() - t0
    outputs = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": args.seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": outputs,
        "timings": {"seconds": elapsed},
    }
    with (out / MANIFEST).open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _rerun(args) -> int:
    path = Path(args.manifest)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    recorded = json.loads(path.read_text())
    for name, digest in recorded["inputs"].items():
        if not Path(name).exists():
            raise DataError(f"recorded input missing: {name}")
        if _sha256(name) != digest:
            raise DataError(f"input changed since the recorded run: {name}")
    ns = argparse.Namespace(**recorded["config"])
    if args.out:
        ns.out = args.out
    if args.threads is not None:
        ns.threads = args.threads
    manifest = _execute(ns)
    differs = sorted(k for k in set(recorded["outputs"]) | set(manifest["outputs"])
                     if recorded["outputs"].get(k) != manifest["outputs"].get(k))
    if differs:
        print(f"outputs differ from the manifest: {', '.join(differs)}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"reproduced {len(manifest['outputs'])} outputs byte-identically")
    return EXIT_OK


def _setup_logging():
    level = os.environ.get("JASPER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "rerun":
            return _rerun(args)
        _execute(args)
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except (SamplerError, np.linalg.LinAlgError) as exc:
        print(f"jasper: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DataError, SplineError, FileNotFoundError, ValueError) as exc:
        # SamplerError wraps anything raised mid-chain, so a bare ValueError is bad input
        print(f"jasper: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"jasper: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
