"""Test curves, noisy designs, MISE, cross-validation and experiment drivers.

Random streams use the Philox counter-based generator. For a base seed ``s``
the design points come from ``Philox(s)`` and the tangent noise from
``Philox(s + 1)``. Replication ``r`` of an experiment with seed ``s`` uses the
base seed ``SeedSequence([s, r]).generate_state(1, uint64)[0]``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from . import baselines
from .dataset import Dataset
from .errors import ConfigError, HMRegError
from .manifolds import SO3, SPD2, Circle, Euclidean, Hyperbolic2, Manifold, Sphere, Torus2, _rodrigues, _sym_fun2
from .spline import FitConfig, fit
from .topology import (HomotopyClass, closed_dirichlet, closed_winding_number, discrete_dirichlet,
                       energy_barrier, recovery_indicator, winding_number)

log = logging.getLogger(__name__)

_U64 = 2**64


# ---------------------------------------------------------------------------
# curve defaults
# ---------------------------------------------------------------------------
def load_curve_defaults(path=None) -> configparser.ConfigParser:
    """Read the curve-parameter file; the packaged ``configs/curves.cfg`` by default."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is None:
        text = resources.files("hmreg").joinpath("configs/curves.cfg").read_text()
        cp.read_string(text)
    else:
        if not cp.read(path):
            raise ConfigError(f"cannot read curve defaults from {path}")
    return cp


def _vec(text):
    return np.array([float(x) for x in text.split(",")])


_DEFAULTS = load_curve_defaults()


def _get(section, key, cast=float):
    raw = _DEFAULTS.get(section, key)
    return _vec(raw) if cast is np.ndarray else cast(raw)


# ---------------------------------------------------------------------------
# curve specifications
# ---------------------------------------------------------------------------
class CurveSpec:
    """A regression function ``m: [0, 1] -> M`` with a default noise level."""

    label: str = "curve"
    sigma: float = 0.0

    def manifold(self) -> Manifold:
        raise NotImplementedError

    def __call__(self, t) -> np.ndarray:
        raise NotImplementedError

    def true_class(self) -> HomotopyClass | None:
        return None


@dataclass(frozen=True)
class S2Arc(CurveSpec):
    """``R * exp_{p0}(t v0 + t (1 - t) w0)`` on the sphere of radius ``R``.

    ``p0`` is normalized; ``v0`` and ``w0`` are projected onto the tangent
    plane at ``p0`` and ``w0`` is then made orthogonal to ``v0``.
    """

    p0: tuple = tuple(_get("s2arc", "p0", np.ndarray))
    v0: tuple = tuple(_get("s2arc", "v0", np.ndarray))
    w0: tuple = tuple(_get("s2arc", "w0", np.ndarray))
    radius: float = _get("s2arc", "radius")
    sigma: float = _get("s2arc", "sigma")
    label: str = "s2"

    def manifold(self):
        return Sphere(self.radius)

    def frame(self):
        p = np.asarray(self.p0, float)
        p = p / np.linalg.norm(p)
        v = np.asarray(self.v0, float)
        v = v - (v @ p) * p
        w = np.asarray(self.w0, float)
        w = w - (w @ p) * p
        w = w - (w @ v) / (v @ v) * v
        return p, v, w

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        p, v, w = self.frame()
        unit = Sphere(1.0)
        return self.radius * unit.exp(p, t[:, None] * v + (t * (1 - t))[:, None] * w)


@dataclass(frozen=True)
class H2Spiral(CurveSpec):
    """Logarithmic spiral in the Poincare disk, lifted to the hyperboloid.

    Polar angle ``phi = 2 pi turns t + phase`` and Euclidean disk radius
    ``r(t) = r_start * exp(b * 2 pi turns t)``, with ``b`` set so the end point
    sits at geodesic distance ``max_geodesic_radius`` from the origin.
    """

    r_start: float = _get("h2spiral", "r_start")
    max_geodesic_radius: float = _get("h2spiral", "max_geodesic_radius")
    turns: float = _get("h2spiral", "turns")
    phase: float = _get("h2spiral", "phase")
    sigma: float = _get("h2spiral", "sigma")
    label: str = "h2"

    def manifold(self):
        return Hyperbolic2()

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        r_end = math.tanh(0.5 * self.max_geodesic_radius)
        sweep = 2 * math.pi * self.turns
        b = math.log(r_end / self.r_start) / sweep
        r = self.r_start * np.exp(b * sweep * t)
        phi = sweep * t + self.phase
        return Hyperbolic2.from_poincare(np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1))


@dataclass(frozen=True)
class SPDGeodesicPerturbed(CurveSpec):
    """``P0^(1/2) exp(t S + t (1 - t) T) P0^(1/2)``; ``T = 0`` gives a geodesic."""

    p0: tuple = tuple(_get("spd", "p0", np.ndarray))
    s: tuple = tuple(_get("spd", "s", np.ndarray))
    t_pert: tuple = tuple(_get("spd", "t", np.ndarray))
    sigma: float = _get("spd", "sigma")
    label: str = "spd2"

    def manifold(self):
        return SPD2()

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        P0 = np.asarray(self.p0, float).reshape(2, 2)
        S = np.asarray(self.s, float).reshape(2, 2)
        T = np.asarray(self.t_pert, float).reshape(2, 2)
        half = _sym_fun2(P0, np.sqrt)
        A = t[:, None, None] * S + (t * (1 - t))[:, None, None] * T
        out = half @ _sym_fun2(A, np.exp) @ half
        return (0.5 * (out + np.swapaxes(out, -1, -2))).reshape(-1, 4)


@dataclass(frozen=True)
class SO3Wind(CurveSpec):
    """One-parameter subgroup ``exp(2 pi turns t * hat(axis))`` from I back to I."""

    axis: tuple = tuple(_get("so3wind", "axis", np.ndarray))
    turns: float = _get("so3wind", "turns")
    sigma: float = _get("so3wind", "sigma")
    label: str = "so3"

    def manifold(self):
        return SO3()

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        a = np.asarray(self.axis, float)
        a = a / np.linalg.norm(a)
        return _rodrigues(np.outer(2 * math.pi * self.turns * t, a)).reshape(-1, 9)


@dataclass(frozen=True)
class TorusWind(CurveSpec):
    """``(rate1 pi t mod 2 pi, rate2 pi t mod 2 pi)`` on the square torus."""

    rate1: float = _get("toruswind", "rate1")
    rate2: float = _get("toruswind", "rate2")
    sigma: float = _get("toruswind", "sigma")
    label: str = "t2"

    def manifold(self):
        return Torus2()

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        raw = np.stack([self.rate1 * math.pi * t, self.rate2 * math.pi * t], axis=-1)
        return Torus2().project(raw)

    def true_class(self):
        w = np.array([self.rate1, self.rate2]) / 2.0
        return HomotopyClass(tuple(w)) if np.allclose(w, np.rint(w)) else None


@dataclass(frozen=True)
class CircleWind(CurveSpec):
    """``2 pi k t mod 2 pi`` on the unit circle."""

    k: int = _get("circlewind", "k", int)
    sigma: float = _get("circlewind", "sigma")
    label: str = "s1"

    def manifold(self):
        return Circle()

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        return Circle().project((2 * math.pi * self.k * t)[:, None])

    def true_class(self):
        return HomotopyClass((self.k,))


@dataclass(frozen=True)
class S2Wrap(CurveSpec):
    """Equatorial curve wrapping ``k`` times, latitude ``tilt * sin(2 pi t)``."""

    k: int = _get("s2wrap", "k", int)
    tilt: float = _get("s2wrap", "tilt")
    sigma: float = _get("s2wrap", "sigma")
    label: str = "s2wrap"

    def manifold(self):
        return Sphere()

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        lon = 2 * math.pi * self.k * t
        lat = self.tilt * np.sin(2 * math.pi * t)
        return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


@dataclass(frozen=True)
class EuclideanLine(CurveSpec):
    """``intercept + slope t + amplitude sin(2 pi t)`` in every coordinate of R^d."""

    d: int = _get("euclid", "d", int)
    slope: float = _get("euclid", "slope")
    intercept: float = _get("euclid", "intercept")
    amplitude: float = _get("euclid", "amplitude")
    sigma: float = _get("euclid", "sigma")
    label: str = "euclid"

    def manifold(self):
        return Euclidean(self.d)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        y = self.intercept + self.slope * t + self.amplitude * np.sin(2 * math.pi * t)
        return np.repeat(y[:, None], self.d, axis=1)


CURVES = {
    "s2": S2Arc,
    "h2": H2Spiral,
    "spd2": SPDGeodesicPerturbed,
    "so3": SO3Wind,
    "t2": TorusWind,
    "s1": CircleWind,
    "s2wrap": S2Wrap,
    "euclid": EuclideanLine,
}


def curve_from_name(name: str, **params) -> CurveSpec:
    try:
        cls = CURVES[name]
    except KeyError:
        raise ConfigError(f"unknown curve {name!r}; expected one of {sorted(CURVES)}") from None
    return cls(**params)


def true_curve(spec: CurveSpec, t) -> np.ndarray:
    """Point(s) of the regression function at ``t``."""
    scalar = np.ndim(t) == 0
    out = spec(t)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SimConfig:
    curve: CurveSpec
    n: int
    sigma: float | None = None
    seed: int = 0
    eval_grid_size: int = 50
    replications: int = 15

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be non-negative")

    @property
    def noise(self) -> float:
        return self.curve.sigma if self.sigma is None else self.sigma


def replication_seed(seed: int, r: int) -> int:
    """Base seed of replication ``r``; independent of how many runs precede it."""
    return int(np.random.SeedSequence([int(seed) % _U64, int(r)]).generate_state(1, np.uint64)[0])


def generators(seed: int):
    """Design and noise generators for a base seed."""
    seed = int(seed) % _U64
    return (np.random.Generator(np.random.Philox(seed)),
            np.random.Generator(np.random.Philox((seed + 1) % _U64)))


def generate_dataset(cfg: SimConfig) -> Dataset:
    """``Y_i = exp_{m(t_i)}(sigma eps_i)`` with ``t_i ~ U[0, 1]`` and Gaussian ``eps_i``.

    The noise coordinates are taken in :meth:`Manifold.tangent_basis` at
    ``m(t_i)``.
    """
    M = cfg.curve.manifold()
    design, noise = generators(cfg.seed)
    t = np.sort(design.uniform(0.0, 1.0, cfg.n))
    m = cfg.curve(t)
    eps = noise.standard_normal((cfg.n, M.dim))
    if cfg.noise == 0:
        y = m
    else:
        v = np.einsum("nk,nkD->nD", cfg.noise * eps, M.tangent_basis(m))
        y = M.exp(m, v)
    return Dataset.from_observations(M, t, y)


def _as_callable(predictor) -> Callable:
    return predictor.predict if hasattr(predictor, "predict") else predictor


def mise(predictor, spec: CurveSpec, grid_size: int = 50) -> float:
    """Mean of ``d^2(F(x), m(x))`` over ``grid_size`` equispaced points of [0, 1]."""
    grid = np.linspace(0.0, 1.0, grid_size)
    pred = _as_callable(predictor)(grid)
    return float(np.mean(spec.manifold().dist(pred, spec(grid)) ** 2))


# ---------------------------------------------------------------------------
# methods
# ---------------------------------------------------------------------------
LAMBDA_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0)
EXTRINSIC_GRID = (0.05, 0.1, 0.3, 0.5, 1.0, 2.0)
RATE_EXPONENT = -2.0 / 3.0


@dataclass(frozen=True)
class Method:
    """Estimator wrapper: ``fitter(data, constant) -> predictor``.

    ``grid`` lists candidate constants for cross-validation; an empty grid
    means the method has no tuning parameter and ``fitter`` gets ``None``.
    """

    name: str
    fitter: Callable
    grid: tuple = ()

    def fit(self, data: Dataset, constant=None):
        return self.fitter(data, constant)


def rate_lambda(constant: float, n: int, exponent: float = RATE_EXPONENT) -> float:
    return constant * n**exponent


def _fit_proposed(data, c, fit_cfg=None):
    spline, _ = fit(data, rate_lambda(c, data.n_total), fit_cfg)
    return spline


def _fit_tv(data, c):
    return baselines.tv_frechet_fit(data, rate_lambda(c, data.n_total))


def _fit_extrinsic(data, c):
    return baselines.extrinsic_spline_fit(data, c * data.n_total)


def _fit_frechet(data, _):
    return baselines.frechet_regression_fit(data)


def _fit_geodesic(data, _):
    return baselines.geodesic_regression_fit(data)


METHODS = {
    "proposed": Method("proposed", _fit_proposed, LAMBDA_GRID),
    "extrinsic": Method("extrinsic", _fit_extrinsic, EXTRINSIC_GRID),
    "tv": Method("tv", _fit_tv, LAMBDA_GRID),
    "frechet": Method("frechet", _fit_frechet),
    "geodesic": Method("geodesic", _fit_geodesic),
}


def get_method(name: str) -> Method:
    try:
        return METHODS[name]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; expected one of {sorted(METHODS)}") from None


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CVConfig:
    folds: int = 5
    grid: tuple = LAMBDA_GRID
    exponent: float = RATE_EXPONENT

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("need at least two folds")
        if len(self.grid) == 0:
            raise ConfigError("constant grid must be nonempty")
        if list(self.grid) != sorted(self.grid):
            raise ConfigError("constant grid must be sorted")


@dataclass
class CVResult:
    selected: float
    losses: dict
    model: object


def round_robin_folds(n: int, folds: int) -> np.ndarray:
    """Fold label ``i mod folds`` for each observation in design order."""
    return np.arange(n) % folds


def cross_validate(data: Dataset, cv: CVConfig, fitter: Callable, fold_labels=None) -> CVResult:
    """K-fold selection of the tuning constant, then refit on all data.

    The loss for a constant is the mean held-out ``d^2(F(t_j), Y_j)`` pooled
    over all folds. Ties go to the smaller constant.
    """
    n = data.n_total
    labels = round_robin_folds(n, cv.folds) if fold_labels is None else np.asarray(fold_labels)
    uniq = np.unique(labels)
    if n < len(uniq) or len(uniq) < 2:
        raise ConfigError("not enough observations for the requested folds")
    M = data.manifold
    losses = {}
    for c in cv.grid:
        total = 0.0
        for f in uniq:
            test = labels == f
            model = fitter(data.subset(np.flatnonzero(~test)), c)
            pred = _as_callable(model)(data.obs_t[test])
            total += float(np.sum(M.dist(pred, data.points[test]) ** 2))
        losses[c] = total / n
    vals = np.array([losses[c] for c in cv.grid])
    best = cv.grid[int(np.flatnonzero(vals == vals.min())[0])]
    return CVResult(best, losses, fitter(data, best))


def fit_method(method: Method, data: Dataset, folds: int = 5, fold_labels=None):
    """Fit with CV over the method's grid, or directly when it has none.

    Returns ``(model, selected_constant)``.
    """
    if not method.grid:
        return method.fit(data), None
    if len(method.grid) == 1:
        return method.fit(data, method.grid[0]), method.grid[0]
    res = cross_validate(data, CVConfig(folds=folds, grid=tuple(method.grid)), method.fit, fold_labels)
    return res.model, res.selected


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
@dataclass
class ExperimentReport:
    """Per-replication rows plus run metadata.

    Rows are dicts with at least ``manifold``, ``method``, ``n``, ``rep``.
    """

    kind: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def sorted_rows(self):
        """Rows in canonical order, independent of execution order."""
        return sorted(self.rows, key=lambda r: [_sort_key(r.get(k)) for k in _ORDER_KEYS])

    def columns(self):
        cols = []
        for r in self.rows:
            cols.extend(k for k in r if k not in cols)
        return cols

    def summary(self, value: str = "mise", by=("manifold", "method", "n")) -> list:
        """Mean and standard error (sample SD / sqrt(reps)) per group."""
        groups = {}
        for r in self.rows:
            v = r.get(value)
            if v is None or not np.isfinite(v):
                continue
            groups.setdefault(tuple(r[k] for k in by), []).append(v)
        out = []
        for key in sorted(groups, key=lambda k: [_sort_key(x) for x in k]):
            vals = np.asarray(groups[key], float)
            se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
            out.append({**dict(zip(by, key)), "mean": float(vals.mean()), "se": se, "reps": len(vals)})
        return out

    def to_csv(self, rows=None, header: str = "") -> str:
        """CSV text of ``rows`` (default: all rows in canonical order)."""
        if rows is None:
            rows, cols = self.sorted_rows(), self.columns()
        else:
            cols = list(rows[0]) if rows else []
        buf = io.StringIO()
        buf.write(header)
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "meta": self.meta, "rows": self.sorted_rows()},
                          sort_keys=True, indent=1, default=_json_default)


_ORDER_KEYS = ("manifold", "kappa", "method", "k", "n", "lam_rule", "lam_param", "rep")


def _sort_key(v):
    if v is None:
        return (0, 0.0, "")
    if isinstance(v, (int, float, np.integer, np.floating)):
        return (1, float(v), "")
    return (2, 0.0, str(v))


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def loglog_slope(ns, values) -> float:
    """Least-squares slope of ``log value`` against ``log n``."""
    ns, values = np.asarray(ns, float), np.asarray(values, float)
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------
def _map(fn, tasks, jobs):
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _rate_task(task):
    spec, n, sigma, seed, rep, methods, grid_size, folds = task
    cfg = SimConfig(spec, n, sigma, replication_seed(seed, rep), grid_size)
    data = generate_dataset(cfg)
    rows = []
    for name in methods:
        method = get_method(name)
        row = {"manifold": spec.label, "method": name, "n": n, "rep": rep}
        try:
            model, sel = fit_method(method, data, folds)
            row["mise"] = mise(model, spec, grid_size)
            row["selected"] = float("nan") if sel is None else float(sel)
            row["status"] = "ok"
        except (HMRegError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.warning("%s/%s n=%d rep=%d failed: %s", spec.label, name, n, rep, exc)
            row.update(mise=float("nan"), selected=float("nan"), status=type(exc).__name__)
        rows.append(row)
    return rows


def run_rate_experiment(specs: Sequence[CurveSpec], ns: Sequence[int], reps: int = 15,
                        methods: Sequence[str] = ("proposed",), seed: int = 0, sigma: float | None = None,
                        grid_size: int = 50, folds: int = 5, jobs: int = 1) -> ExperimentReport:
    """MISE per (manifold, method, n, replication), plus log-log slopes.

    All methods in a replication see the same data set. Failures are kept as
    rows with ``status`` set to the exception name and a NaN MISE.
    """
    for name in methods:
        get_method(name)
    tasks = [(spec, int(n), sigma, seed, r, tuple(methods), grid_size, folds)
             for spec in specs for n in ns for r in range(reps)]
    rows = [row for chunk in _map(_rate_task, tasks, jobs) for row in chunk]
    report = ExperimentReport("rate", rows, {"seed": seed, "reps": reps, "ns": list(map(int, ns)),
                                             "methods": list(methods), "grid_size": grid_size})
    slopes = {}
    for s in report.summary():
        slopes.setdefault((s["manifold"], s["method"]), []).append((s["n"], s["mean"]))
    report.meta["slopes"] = {f"{m}/{meth}": loglog_slope(*zip(*pts)) for (m, meth), pts in sorted(slopes.items())
                             if len(pts) >= 2 and all(v > 0 for _, v in pts)}
    return report


def _phase_task(task):
    k, n, lam_label, lam, sigma, seed, rep, fit_cfg = task
    spec = CircleWind(k=k, sigma=sigma)
    data = generate_dataset(SimConfig(spec, n, sigma, replication_seed(seed, rep)))
    lam_val = lam if lam_label == "lambda" else rate_lambda(lam, n)
    spline, report = fit(data, lam_val, fit_cfg)
    row = {"k": k, "n": n, "lam_rule": lam_label, "lam_param": lam, "lam": lam_val, "rep": rep,
           "converged": bool(report.converged)}
    truth = HomotopyClass((k,))
    row["recovered"] = recovery_indicator(spline, truth)
    try:
        est = winding_number(spline)
        row["raw_winding"] = float(est.raw[0])
        row["winding"] = float("nan") if est.cls is None else int(est.cls)
    except HMRegError:
        row["raw_winding"] = row["winding"] = float("nan")
    row["dirichlet"] = discrete_dirichlet(spline)
    try:
        row["closed_winding"] = int(closed_winding_number(spline).cls)
    except HMRegError:
        row["closed_winding"] = float("nan")
    row["closed_dirichlet"] = closed_dirichlet(spline)
    w = row["winding"]
    row["barrier"] = energy_barrier(spline.manifold, HomotopyClass((int(w),)), 1.0) if w == w else float("nan")
    return row


def run_phase_experiment(ks: Sequence[int], ns: Sequence[int], lambdas: Sequence[float] = (),
                         c_lams: Sequence[float] = (0.3,), reps: int = 30, sigma: float = 0.3,
                         seed: int = 0, fit_cfg: FitConfig | None = None, jobs: int = 1) -> ExperimentReport:
    """Winding-recovery rows for ``CircleWind{k}`` targets.

    Each penalty is either a fixed ``lambda`` or a rate constant ``c`` with
    ``lambda = c n^(-2/3)``. Every row also carries the fitted Dirichlet energy
    and the energy barrier of the estimated class.
    """
    lam_specs = [("lambda", float(l)) for l in lambdas] + [("rate", float(c)) for c in c_lams]
    if not lam_specs:
        raise ConfigError("give at least one lambda or rate constant")
    tasks = [(int(k), int(n), lab, val, sigma, seed, r, fit_cfg)
             for k in ks for n in ns for lab, val in lam_specs for r in range(reps)]
    rows = _map(_phase_task, tasks, jobs)
    return ExperimentReport("phase", rows, {"seed": seed, "reps": reps, "sigma": sigma})


def recovery_table(report: ExperimentReport) -> list:
    """Recovery fraction per (k, n, penalty)."""
    cells = {}
    for r in report.rows:
        cells.setdefault((r["k"], r["n"], r["lam_rule"], r["lam_param"]), []).append(bool(r["recovered"]))
    return [{"k": k, "n": n, "lam_rule": lab, "lam_param": p, "recovery": float(np.mean(v)), "reps": len(v)}
            for (k, n, lab, p), v in sorted(cells.items())]


def run_curvature_experiment(radii: Sequence[float], ns: Sequence[int], reps: int = 15,
                             methods: Sequence[str] = ("proposed",), seed: int = 0, sigma: float = 0.25,
                             grid_size: int = 50, folds: int = 5, jobs: int = 1) -> ExperimentReport:
    """Normalized MISE (MISE / R^2) for the sphere arc on spheres of radius ``R``.

    The arc keeps its angular shape while the noise level stays in absolute
    distance units, so small spheres see larger angular noise.
    """
    specs = [S2Arc(radius=float(R), sigma=sigma) for R in radii]
    report = run_rate_experiment(specs, ns, reps, methods, seed, sigma, grid_size, folds, jobs)
    for row, spec in zip(report.rows, _expand(specs, ns, reps, methods)):
        row["manifold"] = f"sphere:r={spec.radius!r}"
        row["kappa"] = 1.0 / spec.radius**2
        row["normalized_mise"] = row["mise"] / spec.radius**2
    report.kind = "curvature"
    report.meta["radii"] = list(map(float, radii))
    report.meta.pop("slopes", None)
    return report


def _expand(specs, ns, reps, methods):
    for spec in specs:
        for _ in ns:
            for _ in range(reps):
                for _ in methods:
                    yield spec


__all__ = [
    "CurveSpec", "S2Arc", "H2Spiral", "SPDGeodesicPerturbed", "SO3Wind", "TorusWind", "CircleWind",
    "S2Wrap", "EuclideanLine", "CURVES", "curve_from_name", "true_curve", "SimConfig", "generate_dataset",
    "replication_seed", "generators", "mise", "Method", "METHODS", "get_method", "rate_lambda", "CVConfig",
    "CVResult", "cross_validate", "round_robin_folds", "fit_method", "ExperimentReport", "loglog_slope",
    "run_rate_experiment", "run_phase_experiment", "recovery_table", "run_curvature_experiment",
    "load_curve_defaults",
]
