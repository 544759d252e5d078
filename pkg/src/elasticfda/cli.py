"""``elasticfda`` command-line interface.

Subcommands: simulate, align, fpca, fit, sample, classify. Every output
directory receives a ``config.json`` with the effective settings. Files are
written atomically (temporary file, then rename).

Exit codes: 0 success (warnings allowed), 2 usage or data error, 3 numerical or
convergence failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__, datasets
from .align import DEFAULT_SLOPE_CAP, MAX_LATTICE_N, DpLattice, separate, variance_decomposition
from .classify import ClassifierConfig, kfold_cv
from .errors import ConvergenceError, GeometryError, NumericalError
from .fpca import (
    horizontal_fpca,
    principal_path_horizontal,
    principal_path_vertical,
    vertical_fpca,
)
from .funcrep import SampledFunction, smooth_box
from .genmodel import (
    FORMAT,
    compose,
    draw_coefficients,
    fit_function_model,
    horizontal_to_dict,
    model_from_dict,
    model_to_dict,
    reconstruct_amplitude,
    reconstruct_phase,
    vertical_to_dict,
)
from .srsf import to_srsf
from .warpspace import Warp, karcher_mean_warps

log = logging.getLogger("elasticfda")

DEFAULTS = {
    "smooth_iters": 0,
    "lattice_n": MAX_LATTICE_N,
    "slope_cap": DEFAULT_SLOPE_CAP,
    "tol": 1e-4,
    "max_iter": 20,
    "energy_threshold": 0.95,
    "model": "gaussian",
    "mode": "diagonal-blocks",
    "folds": 5,
}
TAUS = (-2.0, -1.0, 0.0, 1.0, 2.0)


class UsageError(Exception):
    pass


# -- output helpers -----------------------------------------------------------


@contextlib.contextmanager
def _atomic(path: Path):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str):
    with _atomic(path) as tmp:
        tmp.write_text(text)


def _write_json(path: Path, doc):
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, fs, names=None, domain=(0.0, 1.0)):
    with _atomic(path) as tmp:
        if fs:
            datasets.save_csv(tmp, fs, names, domain)
        else:
            datasets.save_csv_header_only(tmp, [])


def _write_rows(path: Path, header, rows):
    fmt = lambda v: v if isinstance(v, str) else repr(float(v))
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    _write_text(path, "\n".join(lines) + "\n")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- configuration ------------------------------------------------------------


def _effective(args, keys) -> dict:
    """Flags override the config file, which overrides the defaults."""
    cfg = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in doc.items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if "energy_threshold" in cfg and not 0 < cfg["energy_threshold"] <= 1:
        raise UsageError("energy threshold must lie in (0, 1]")
    if "folds" in cfg and cfg["folds"] < 2:
        raise UsageError("folds must be at least 2")
    return cfg


def _echo(out: Path, command: str, cfg: dict, **extra):
    _write_json(out / "config.json", {"command": command, "version": __version__, **cfg, **extra})


def _load(path) -> datasets.FunctionTable:
    p = Path(path)
    if p.suffix.lower() == ".json":
        return datasets.load_json(p)
    return datasets.load_csv(p)


def _lattice(grid, cfg) -> DpLattice:
    return DpLattice(min(grid.n, cfg["lattice_n"]), cfg["slope_cap"])


def _separate(table, cfg):
    fs = [smooth_box(f, cfg["smooth_iters"]) for f in table]
    if len(fs) < 2:
        raise UsageError("need at least two functions")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        res = separate(fs, _lattice(fs[0].grid, cfg), tol=cfg["tol"], max_iter=cfg["max_iter"])
    for w in caught:
        log.warning("%s", w.message)
    return fs, res, len(caught)


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = {"recipe": args.recipe, "n": args.n, "seed": args.seed}
    if args.recipe not in datasets.RECIPES:
        raise UsageError(f"unknown recipe {args.recipe!r}; valid recipes: {', '.join(datasets.RECIPES)}")
    sim = datasets.simulate(args.recipe, args.n, args.seed)
    out = _outdir(args.out)
    names = sim.labels or None
    _write_csv(out / "observed.csv", sim.observed, names, sim.domain)
    _write_csv(out / "truth_amplitude.csv", sim.truth_amplitude, names, sim.domain)
    _write_csv(out / "truth_warps.csv", [SampledFunction(g.grid, g.values) for g in sim.truth_warps], names)
    _echo(out, "simulate", cfg, domain=list(sim.domain))
    return 0


def cmd_align(args) -> int:
    cfg = _effective(args, ["smooth_iters", "lattice_n", "slope_cap", "tol", "max_iter"])
    table = _load(args.input)
    fs, res, n_warn = _separate(table, cfg)
    out = _outdir(args.out)
    _write_csv(out / "aligned.csv", res.aligned_functions, table.names, table.domain)
    _write_csv(out / "warps.csv", [SampledFunction(w.grid, w.values) for w in res.warps], table.names)
    _write_csv(out / "karcher_mean.csv", [res.mean_function], ["karcher_mean"], table.domain)
    var = variance_decomposition(fs, res).as_dict()
    var.update(
        warnings=n_warn,
        converged=bool(res.converged),
        iterations=int(res.iterations),
        cost_trace=[float(c) for c in res.cost_trace],
        notes=list(res.notes),
    )
    _write_json(out / "variance.json", var)
    _echo(out, "align", cfg, input=str(args.input))
    return 0


def _warps_from(table) -> list:
    try:
        return [Warp(f.grid, f.values) for f in table]
    except ValueError as exc:
        raise UsageError(f"warps file does not hold valid warps: {exc}") from None


def cmd_fpca(args) -> int:
    cfg = {}
    aligned = _load(args.aligned)
    warps = _warps_from(_load(args.warps))
    if len(aligned) != len(warps) or aligned[0].grid != warps[0].grid:
        raise UsageError("aligned and warps files disagree in count or grid")
    qs = [to_srsf(f) for f in aligned]
    vb = vertical_fpca(qs)
    hb = horizontal_fpca(warps, mean=karcher_mean_warps(warps))
    out = _outdir(args.out)
    _write_json(out / "vertical_basis.json", vertical_to_dict(vb))
    _write_json(out / "horizontal_basis.json", horizontal_to_dict(hb))

    header = ["name", "f0"] + [f"c{j + 1}" for j in range(vb.p)] + [f"z{j + 1}" for j in range(hb.p)]
    rows = [
        [name, q.f0, *vb.coefficients[i], *hb.coefficients[i]]
        for i, (name, q) in enumerate(zip(aligned.names, qs))
    ]
    _write_rows(out / "coefficients.csv", header, rows)

    a, b = aligned.domain
    t = a + (b - a) * vb.grid.points
    paths = []
    for j in range(1, min(3, vb.p) + 1):
        for tau in TAUS:
            paths.append(["vertical", str(j), tau, *principal_path_vertical(vb, j, tau).values])
    for j in range(1, min(3, hb.p) + 1):
        for tau in TAUS:
            paths.append(["horizontal", str(j), tau, *principal_path_horizontal(hb, j, tau).values])
    _write_rows(out / "principal_paths.csv", ["kind", "j", "tau", *(repr(float(x)) for x in t)], paths)

    if args.verify:
        for i, q in enumerate(qs):
            h = vb.mu_h + vb.directions @ vb.coefficients[i]
            err = np.max(np.abs(h - np.append(q.values, q.f0)))
            if err > 1e-8:
                raise NumericalError(f"vertical reconstruction of {aligned.names[i]} off by {err:.3g}")
        print("verify: full-rank reconstruction ok")
    _echo(out, "fpca", cfg, aligned=str(args.aligned), warps=str(args.warps))
    return 0


def cmd_fit(args) -> int:
    cfg = _effective(
        args, ["smooth_iters", "lattice_n", "slope_cap", "tol", "max_iter", "energy_threshold", "model", "mode"]
    )
    table = _load(args.input)
    _, res, n_warn = _separate(table, cfg)
    model = fit_function_model(
        res.aligned, res.warps, cfg["model"], cfg["energy_threshold"], mode=cfg["mode"]
    )
    doc = model_to_dict(model)
    doc["domain"] = list(table.domain)
    out = _outdir(args.out)
    _write_json(out / "model.json", doc)
    _echo(out, "fit", cfg, input=str(args.input), warnings=n_warn)
    return 0


def cmd_sample(args) -> int:
    cfg = {"count": args.count, "seed": args.seed}
    if args.count < 0:
        raise UsageError("count must be non-negative")
    try:
        doc = json.loads(Path(args.model).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"model file is not JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise UsageError("model file is not a generative-model document")
    try:
        model = model_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed model document: {exc}") from None
    vb, hb = model.vertical, model.horizontal
    if vb is None or hb is None or vb.grid != hb.grid:
        raise UsageError("model bases are missing or live on different grids")
    domain = tuple(doc.get("domain", (0.0, 1.0)))

    rng = np.random.default_rng(args.seed)
    X = draw_coefficients(model, rng, args.count)
    amps, warps, comps = [], [], []
    for x in X:
        s = model.layout.unpack(x)
        f = reconstruct_amplitude(vb, s.c, s.f0)
        g = reconstruct_phase(hb, s.z)
        amps.append(f)
        warps.append(SampledFunction(g.grid, g.values))
        comps.append(compose(f, g))
    names = [f"s{i + 1}" for i in range(args.count)]
    out = _outdir(args.out)
    _write_csv(out / "samples.csv", comps, names, domain)
    _write_csv(out / "amplitudes_sampled.csv", amps, names, domain)
    _write_csv(out / "warps_sampled.csv", warps, names)
    _echo(out, "sample", cfg, model=str(args.model))
    return 0


def cmd_classify(args) -> int:
    cfg = _effective(
        args,
        ["smooth_iters", "lattice_n", "slope_cap", "tol", "max_iter", "energy_threshold", "model", "mode", "folds"],
    )
    table = _load(args.input)
    data = list(zip(table.names, table.functions))
    ccfg = ClassifierConfig(
        threshold=cfg["energy_threshold"],
        family=cfg["model"],
        smooth_iters=cfg["smooth_iters"],
        lattice_n=cfg["lattice_n"],
        slope_cap=cfg["slope_cap"],
        mode=cfg["mode"],
        tol=cfg["tol"],
        max_iter=cfg["max_iter"],
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report = kfold_cv(data, ccfg, k=cfg["folds"], seed=args.seed, workers=args.workers)
    out = _outdir(args.out)
    _write_text(out / "report.json", report.to_json() + "\n")
    _write_text(out / "table.csv", report.table_csv())
    _echo(out, "classify", cfg, input=str(args.input), seed=args.seed)
    return 0


# -- parser -------------------------------------------------------------------


def _add_alignment_flags(p):
    p.add_argument("--smooth-iters", dest="smooth_iters", type=int, help="box-filter passes before alignment")
    p.add_argument("--lattice-n", dest="lattice_n", type=int, help="DP lattice size cap (default 241)")
    p.add_argument("--slope-cap", dest="slope_cap", type=int, help="largest DP slope numerator/denominator")
    p.add_argument("--tol", type=float, help="mean-increment tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="alignment iteration cap")
    p.add_argument("--config", help="JSON file with default settings")


def _add_model_flags(p):
    p.add_argument("--energy-threshold", dest="energy_threshold", type=float, help="fPCA energy kept (0, 1]")
    p.add_argument("--model", choices=("gaussian", "kde"), help="model family")
    p.add_argument("--mode", choices=("diagonal-blocks", "full-joint"), help="Gaussian covariance structure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elasticfda", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--recipe", required=True, help=f"one of: {', '.join(datasets.RECIPES)}")
    p.add_argument("--n", type=int, help="number of functions (per class for two-class)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("align", help="phase-amplitude separation")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_alignment_flags(p)

    p = sub.add_parser("fpca", help="vertical and horizontal fPCA")
    p.add_argument("aligned")
    p.add_argument("warps")
    p.add_argument("--out", required=True)
    p.add_argument("--verify", action="store_true", help="check full-rank reconstruction")

    p = sub.add_parser("fit", help="fit a generative model to raw functions")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_alignment_flags(p)
    _add_model_flags(p)

    p = sub.add_parser("sample", help="draw random functions from a fitted model")
    p.add_argument("model")
    p.add_argument("--count", type=int, default=35)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="k-fold cross-validated classification")
    p.add_argument("input", help="CSV whose column headers are class labels")
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=None)
    _add_alignment_flags(p)
    _add_model_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return globals()[f"cmd_{args.command}"](args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, GeometryError, NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
