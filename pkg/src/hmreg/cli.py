"""Command-line entry point: ``hmreg fit | simulate | phase | wind``.

Exit codes: 0 success, 2 bad input or config, 3 no convergence under
``--strict``, 4 data file missing.

Run configs are flat ``key = value`` files (``#`` comments allowed). Keys::

    experiment  rate | curvature                    (simulate)
    curves      comma list of curve names            (simulate, experiment=rate)
    radii       comma list of sphere radii           (simulate, experiment=curvature)
    methods     comma list of estimator names        (simulate)
    n           comma list of sample sizes
    reps        replications per cell
    sigma       noise level; empty keeps each curve's default
    seed        base seed
    grid_size   evaluation grid for MISE
    folds       cross-validation folds
    ks          comma list of winding numbers        (phase)
    lambdas     comma list of fixed penalties        (phase)
    c_lams      comma list of rate constants         (phase)
    jobs        worker processes
    out         per-row CSV path
    summary     aggregated CSV path                  (simulate)
    grid_out    recovery-grid CSV path               (phase)

Unknown keys are rejected. Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .dataset import Dataset
from .errors import ConfigError, EmptyInput, HMRegError, MalformedRow
from .manifolds import Circle, manifold_from_tag
from .simulation import (CURVES, LAMBDA_GRID, METHODS, CVConfig, _fmt, cross_validate,
                         curve_from_name, rate_lambda, recovery_table, run_curvature_experiment,
                         run_phase_experiment, run_rate_experiment)
from .spline import FitConfig, evaluate, fit
from . import wind

log = logging.getLogger("hmreg")

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_MISSING = 0, 2, 3, 4


class InputError(HMRegError):
    """Bad command-line input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------
@dataclass
class RunConfig:
    experiment: str = "rate"
    curves: tuple = ("s2",)
    radii: tuple = (0.5, 1.0, 2.0)
    methods: tuple = ("proposed",)
    n: tuple = (100, 200, 400, 800)
    reps: int = 15
    sigma: float | None = None
    seed: int = 0
    grid_size: int = 50
    folds: int = 5
    ks: tuple = (1, 2, 3)
    lambdas: tuple = ()
    c_lams: tuple = (0.3,)
    jobs: int = 1
    out: str = ""
    summary: str = ""
    grid_out: str = ""

    def validate(self) -> "RunConfig":
        if self.experiment not in ("rate", "curvature"):
            raise ConfigError(f"experiment must be 'rate' or 'curvature', got {self.experiment!r}")
        for c in self.curves:
            if c not in CURVES:
                raise ConfigError(f"unknown curve {c!r}; expected one of {sorted(CURVES)}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {sorted(METHODS)}")
        if not self.n or min(self.n) < 2:
            raise ConfigError("every n must be at least 2")
        if self.reps < 1 or self.jobs < 1 or self.grid_size < 2 or self.folds < 2:
            raise ConfigError("reps and jobs must be >= 1, grid_size and folds >= 2")
        if self.sigma is not None and not self.sigma >= 0:
            raise ConfigError("sigma must be non-negative")
        if any(r <= 0 for r in self.radii) or any(l <= 0 for l in self.lambdas) or any(c <= 0 for c in self.c_lams):
            raise ConfigError("radii, lambdas and c_lams must be positive")
        if any(k < 0 for k in self.ks):
            raise ConfigError("winding numbers must be non-negative")
        return self

    def digest(self) -> str:
        """Short SHA-256 of the resolved config, excluding output paths and job count."""
        body = {k: v for k, v in asdict(self).items() if k not in ("out", "summary", "grid_out", "jobs")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


_TUPLE_TYPES = {"curves": str, "methods": str, "radii": float, "n": int, "ks": int,
                "lambdas": float, "c_lams": float}
_SCALAR_TYPES = {"experiment": str, "reps": int, "seed": int, "grid_size": int, "folds": int,
                 "jobs": int, "out": str, "summary": str, "grid_out": str}


def _coerce(key, raw):
    raw = raw.strip() if isinstance(raw, str) else raw
    try:
        if key in _TUPLE_TYPES:
            if not isinstance(raw, str):
                return tuple(_TUPLE_TYPES[key](x) for x in raw)
            return tuple(_TUPLE_TYPES[key](x.strip()) for x in raw.split(",") if x.strip())
        if key == "sigma":
            return None if raw in ("", None) else float(raw)
        return _SCALAR_TYPES[key](raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def load_run_config(path=None, overrides=None) -> RunConfig:
    """Read a flat key-value file, apply overrides, validate."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_string("[run]\n" + fh.read())
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        values.update(parser["run"])
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()}).validate()


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------
def _provenance(digest: str, seed) -> dict:
    return {"tool": "hmreg", "version": __version__, "config_sha256": digest, "seed": seed}


def _csv_header(prov: dict) -> str:
    return "".join(f"# {k}: {prov[k]}\n" for k in sorted(prov))


def _rows_csv(rows, prov) -> str:
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    buf.write(_csv_header(prov))
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
    return buf.getvalue()


def _write(path, text):
    if not path or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _float17(x):
    return float(format(float(x), ".17g"))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------
def read_fit_csv(path, manifold) -> Dataset:
    """Header row, then ``t`` and the ambient coordinates (the angle for a circle)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    if len(rows) < 2:
        raise EmptyInput(f"{path} has no data rows")
    header = [h.strip() for h in rows[0]]
    if header[0] != "t":
        raise MalformedRow(f"first column must be 't', got {header[0]!r}")
    if len(header) != 1 + manifold.ambient_dim:
        raise MalformedRow(f"{manifold.tag} needs {manifold.ambient_dim} coordinate columns, got {len(header) - 1}")
    try:
        arr = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise MalformedRow(str(exc)) from exc
    if arr.ndim != 2 or arr.shape[1] != len(header) or not np.all(np.isfinite(arr)):
        raise MalformedRow("rows must be complete and finite")
    pts = arr[:, 1:]
    if isinstance(manifold, Circle):
        pts = manifold.project(pts)
    bad = [i for i, p in enumerate(pts) if not manifold.check_point(p, 1e-8)]
    if bad:
        raise MalformedRow(f"row {bad[0] + 2} is not a point of {manifold.tag}")
    return Dataset.from_observations(manifold, arr[:, 0], pts)


def cmd_fit(args) -> int:
    if args.lam is None and not args.cv:
        raise InputError("give --lambda or --cv")
    if args.lam is not None and not args.lam > 0:
        raise InputError("lambda must be positive")
    try:
        manifold = manifold_from_tag(args.manifold)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    data = read_fit_csv(args.data, manifold)
    cfg = FitConfig(max_iters=args.max_iters, grad_tol=args.grad_tol)
    selected = None
    if args.cv:
        res = cross_validate(data, CVConfig(folds=args.folds, grid=LAMBDA_GRID),
                             lambda d, c: fit(d, rate_lambda(c, d.n_total), cfg)[0])
        selected = res.selected
        lam = rate_lambda(selected, data.n_total)
    else:
        lam = args.lam
    spline, report = fit(data, lam, cfg)
    with open(args.data, "rb") as fh:
        digest = hashlib.sha256(fh.read() + json.dumps(
            [manifold.tag, args.lam, args.cv, args.folds, args.max_iters, args.grad_tol]).encode()).hexdigest()[:16]
    out = {
        "provenance": _provenance(digest, None),
        "manifold": manifold.tag,
        "lambda": _float17(lam),
        "cv_constant": selected,
        "knots": [_float17(x) for x in spline.knots],
        "nodal": [[_float17(x) for x in row] for row in spline.nodal],
        "objective": _float17(report.objective),
        "grad_norm": _float17(report.grad_norm),
        "iterations": report.iterations,
        "converged": bool(report.converged),
        "reason": report.reason,
    }
    _write(args.out, json.dumps(out, sort_keys=True, indent=1) + "\n")
    if args.grid:
        if args.grid < 2:
            raise InputError("--grid needs at least 2 points")
        tt = np.linspace(spline.knots[0], spline.knots[-1], args.grid)
        vals = evaluate(spline, tt)
        rows = [{"t": float(t), **{f"y{j}": float(v) for j, v in enumerate(row)}} for t, row in zip(tt, vals)]
        grid_path = args.grid_out or (os.path.splitext(args.out)[0] + "_grid.csv" if args.out else "-")
        _write(grid_path, _rows_csv(rows, _provenance(digest, None)))
    if args.strict and not report.converged:
        log.error("fit did not converge: %s after %d iterations", report.reason, report.iterations)
        return EXIT_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate and phase
# ---------------------------------------------------------------------------
def _overrides(args, keys):
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config, _overrides(args, ("methods", "jobs", "out", "summary", "reps", "seed", "n")))
    prov = _provenance(cfg.digest(), cfg.seed)
    if cfg.experiment == "rate":
        specs = [curve_from_name(c) for c in cfg.curves]
        report = run_rate_experiment(specs, cfg.n, cfg.reps, cfg.methods, cfg.seed, cfg.sigma,
                                     cfg.grid_size, cfg.folds, cfg.jobs)
        value, by = "mise", ("manifold", "method", "n")
    else:
        sigma = 0.25 if cfg.sigma is None else cfg.sigma
        report = run_curvature_experiment(cfg.radii, cfg.n, cfg.reps, cfg.methods, cfg.seed, sigma,
                                          cfg.grid_size, cfg.folds, cfg.jobs)
        value, by = "normalized_mise", ("manifold", "kappa", "method", "n")
    failed = sum(r.get("status") != "ok" for r in report.rows)
    if failed:
        log.warning("%d of %d rows failed; see the status column", failed, len(report.rows))
    _write(cfg.out, report.to_csv(header=_csv_header(prov)))
    if cfg.summary:
        rows = report.summary(value, by)
        for r in rows:
            r["mean_se"] = f"{r['mean']:.4f} ({r['se']:.4f})"
        _write(cfg.summary, _rows_csv(rows, prov))
    return EXIT_OK


def cmd_phase(args) -> int:
    over = _overrides(args, ("jobs", "out", "reps", "seed", "n", "lambdas", "c_lams", "grid_out"))
    if args.kmax is not None:
        if args.kmax < 0:
            raise InputError("--kmax must be non-negative")
        over["ks"] = tuple(range(0, args.kmax + 1))
    if args.sigma is not None:
        over["sigma"] = args.sigma
    cfg = load_run_config(args.config, over)
    sigma = 0.3 if cfg.sigma is None else cfg.sigma
    report = run_phase_experiment(cfg.ks, cfg.n, cfg.lambdas, cfg.c_lams, cfg.reps, sigma, cfg.seed, jobs=cfg.jobs)
    prov = _provenance(cfg.digest(), cfg.seed)
    table = recovery_table(report)
    if cfg.grid_out:
        _write(cfg.grid_out, _rows_csv(table, prov))
        _write(cfg.out, report.to_csv(header=_csv_header(prov)))
    else:
        _write(cfg.out, _rows_csv(table, prov))
    return EXIT_OK


# ---------------------------------------------------------------------------
# wind
# ---------------------------------------------------------------------------
def cmd_wind(args) -> int:
    path = str(wind.fixture_path()) if args.fixture else args.data
    if path is None:
        raise InputError("give --data or --fixture")
    if not os.path.exists(path):
        sys.stderr.write(f"data file {path} not found\n\n" + wind.DOWNLOAD_INSTRUCTIONS)
        return EXIT_MISSING
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else tuple(METHODS)
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}")
    stats = wind.ParseStats()
    records = wind.parse_isd(path, args.time_column, args.direction_column, args.month, args.year, stats)
    rows = wind.evaluate_wind(records, methods)
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read() + json.dumps(
            [methods, args.month, args.year, args.time_column, args.direction_column]).encode()).hexdigest()[:16]
    prov = _provenance(digest, None)
    prov.update(records=len(records), malformed=stats.malformed, calm=stats.calm)
    _write(args.out, _rows_csv(rows, prov))
    return EXIT_OK


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmreg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hmreg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a geodesic spline to a CSV data file")
    f.add_argument("--data", required=True)
    f.add_argument("--manifold", required=True, help="tag such as sphere:r=1, circle, h2, spd2, so3, torus2, euclid:d=2")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--cv", action="store_true", help="choose lambda = c n^(-2/3) by cross-validation")
    f.add_argument("--folds", type=int, default=5)
    f.add_argument("--max-iters", type=int, default=600)
    f.add_argument("--grad-tol", type=float, default=1e-8)
    f.add_argument("--grid", type=int, default=0, help="also write N evenly spaced evaluations")
    f.add_argument("--grid-out")
    f.add_argument("--out", default="-")
    f.add_argument("--strict", action="store_true", help="exit 3 if the fit does not converge")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="MISE experiment from a run config")
    s.add_argument("--config")
    s.add_argument("--methods", type=str)
    s.add_argument("--n", type=str)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--out")
    s.add_argument("--summary")
    s.set_defaults(func=cmd_simulate)

    ph = sub.add_parser("phase", help="winding-recovery grid on the circle")
    ph.add_argument("--config")
    ph.add_argument("--kmax", type=int)
    ph.add_argument("--ngrid", dest="n", type=str)
    ph.add_argument("--lambdas", type=str)
    ph.add_argument("--c-lams", dest="c_lams", type=str)
    ph.add_argument("--sigma", type=float)
    ph.add_argument("--reps", type=int)
    ph.add_argument("--seed", type=int)
    ph.add_argument("--jobs", type=int)
    ph.add_argument("--out")
    ph.add_argument("--grid-out", dest="grid_out")
    ph.set_defaults(func=cmd_phase)

    w = sub.add_parser("wind", help="scattered-block wind-direction comparison")
    w.add_argument("--data")
    w.add_argument("--fixture", action="store_true", help="use the shipped synthetic file")
    w.add_argument("--methods", type=str)
    w.add_argument("--month", type=int)
    w.add_argument("--year", type=int)
    w.add_argument("--time-column", default="DATE")
    w.add_argument("--direction-column", default="WND")
    w.add_argument("--out", default="-")
    w.set_defaults(func=cmd_wind)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: file not found: {exc.filename or exc}\n")
        return EXIT_MISSING
    except (ConfigError, InputError, MalformedRow, EmptyInput, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
