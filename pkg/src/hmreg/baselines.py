"""Comparison estimators: Frechet, geodesic, TV-Frechet and extrinsic splines.

Every fitted model exposes ``predict(t) -> points`` so the simulation harness
can treat all estimators alike.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .dataset import Dataset
from .errors import InsufficientData, NotConverged
from .manifolds import Manifold

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# weighted Frechet mean
# ---------------------------------------------------------------------------
def frechet_mean(manifold: Manifold, points, weights=None, *, init=None, step=0.5,
                 tol=1e-10, max_iter=200, strict=True, lenient=False):
    """Weighted Frechet mean, allowing signed weights.

    Iterates ``y <- exp_y(step * sum_i w_i log_y(Y_i) / sum_i |w_i|)`` until the
    norm of the averaged log falls below ``tol``.

    Parameters
    ----------
    manifold : Manifold
    points : array_like, shape (n, D)
    weights : array_like, shape (n,), optional
        Defaults to uniform weights. Negative entries are allowed; uniqueness
        is only guaranteed for non-negative weights on points inside a
        convexity ball.
    init : array_like, optional
        Starting point; defaults to the point carrying the largest weight.
    strict : bool
        If True, raise :class:`NotConverged` when ``max_iter`` is reached.
        Otherwise log a warning and return the last iterate.
    lenient : bool
        Use :meth:`Manifold.log_lenient`, so data at the cut locus of an
        iterate do not raise :class:`CutLocus`.

    Returns
    -------
    ndarray, shape (D,)
    """
    points = np.asarray(points, dtype=float).reshape(-1, manifold.ambient_dim)
    n = len(points)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    total = np.sum(np.abs(w))
    if not total > 0:
        raise ValueError("weights must not all vanish")
    if n == 1:
        return points[0].copy()
    y = points[int(np.argmax(w))].copy() if init is None else np.array(init, dtype=float)
    wn = (w / total)[:, None]
    logmap = manifold.log_lenient if lenient else manifold.log
    for _ in range(max_iter):
        g = np.sum(wn * logmap(y, points), axis=0)
        if manifold.norm(y, g) <= tol:
            return y
        y = manifold.exp(y, step * g)
    msg = f"Frechet mean did not reach tolerance {tol:g} in {max_iter} iterations"
    if strict:
        raise NotConverged(msg, result=y)
    log.warning(msg)
    return y


# ---------------------------------------------------------------------------
# global Frechet regression
# ---------------------------------------------------------------------------
@dataclass
class FrechetRegressionModel:
    """Global (linear-weight) Frechet regression."""

    manifold: Manifold
    t: np.ndarray
    points: np.ndarray
    t_bar: float
    var_t: float
    _center: np.ndarray = field(default=None, repr=False)

    def weights(self, t: float) -> np.ndarray:
        n = len(self.t)
        if self.var_t <= 0:
            return np.full(n, 1.0 / n)
        return 1.0 / n + (t - self.t_bar) * (self.t - self.t_bar) / (self.var_t * n)

    def predict_one(self, t: float) -> np.ndarray:
        w = self.weights(float(t))
        return frechet_mean(self.manifold, self.points, w, init=self._center, strict=False, lenient=True)

    def predict(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([self.predict_one(x) for x in t])


def frechet_regression_fit(data: Dataset) -> FrechetRegressionModel:
    t = data.obs_t
    t_bar = float(np.mean(t))
    var_t = float(np.mean((t - t_bar) ** 2))
    center = frechet_mean(data.manifold, data.points, strict=False, lenient=True)
    return FrechetRegressionModel(data.manifold, t, data.points, t_bar, var_t, center)


def frechet_regression_predict(model: FrechetRegressionModel, t):
    return model.predict(t)


# ---------------------------------------------------------------------------
# geodesic regression
# ---------------------------------------------------------------------------
@dataclass
class GeodesicRegressionModel:
    """Parametric geodesic model ``m(t) = exp_{y0}(t v)``."""

    manifold: Manifold
    base: np.ndarray
    velocity: np.ndarray
    objective: float = float("nan")
    iterations: int = 0
    converged: bool = False

    def predict(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.manifold.exp(self.base, t[:, None] * self.velocity)


@dataclass(frozen=True)
class GeodesicRegressionConfig:
    max_iters: int = 300
    fd_step: float = 1e-6
    grad_tol: float = 1e-9
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_halvings: int = 40


def _geo_objective(M, t, Y, base, vel):
    pred = M.exp(base, t[:, None] * vel)
    return float(np.mean(M.dist(Y, pred) ** 2))


def geodesic_regression_fit(data: Dataset, cfg: GeodesicRegressionConfig | None = None,
                            strict: bool = False) -> GeodesicRegressionModel:
    """Least-squares geodesic regression.

    Starts from the Frechet mean with the OLS slope of the tangent residuals.
    Each iteration works in the chart
    ``(a, b) -> (exp_{y0}(B a), proj_{y0'}(v + B b))`` built from an
    orthonormal basis ``B`` of the current tangent space. The chart gradient
    comes from central differences; the step is preconditioned by the inverse
    design Gram matrix (the exact Hessian for flat targets) and safeguarded by
    Armijo backtracking.
    """
    cfg = cfg or GeodesicRegressionConfig()
    M = data.manifold
    t, Y = data.obs_t, data.points
    d = M.dim
    base = frechet_mean(M, Y, strict=False, lenient=True)
    tc = t - t.mean()
    denom = float(np.sum(tc**2))
    logs = M.log_lenient(base, Y)
    vel = np.sum(tc[:, None] * logs, axis=0) / denom if denom > 0 else np.zeros(M.ambient_dim)
    vel = M.tangent_project(base, vel)

    gram = np.array([[1.0, t.mean()], [t.mean(), float(np.mean(t**2))]])
    gram_inv = np.linalg.pinv(2.0 * gram)

    def chart(base, vel, B, a, b):
        new_base = M.exp(base, a @ B)
        new_vel = M.tangent_project(new_base, vel + b @ B)
        return new_base, new_vel

    obj = _geo_objective(M, t, Y, base, vel)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        B = M.tangent_basis(base)
        h = cfg.fd_step
        grad = np.zeros(2 * d)
        for k in range(2 * d):
            e = np.zeros(2 * d)
            e[k] = h
            plus = _geo_objective(M, t, Y, *chart(base, vel, B, e[:d], e[d:]))
            minus = _geo_objective(M, t, Y, *chart(base, vel, B, -e[:d], -e[d:]))
            grad[k] = (plus - minus) / (2 * h)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= cfg.grad_tol:
            converged = True
            break
        # pair intercept and slope coordinates per tangent direction
        G2 = grad.reshape(2, d)
        step = -(gram_inv @ G2).reshape(-1)
        slope = float(grad @ step)
        if not slope < 0:
            step, slope = -grad, -gnorm**2
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            nb, nv = chart(base, vel, B, alpha * step[:d], alpha * step[d:])
            new_obj = _geo_objective(M, t, Y, nb, nv)
            if new_obj <= obj + cfg.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= cfg.backtrack
        if not accepted:
            converged = True  # no further decrease resolvable at this FD accuracy
            break
        rel = (obj - new_obj) / max(obj, 1e-300)
        base, vel, obj = nb, nv, new_obj
        if rel < 1e-13:
            converged = True
            break
    if not converged and strict:
        raise NotConverged("geodesic regression hit the iteration cap",
                           result=GeodesicRegressionModel(M, base, vel, obj, it, False))
    return GeodesicRegressionModel(M, base, vel, obj, it, converged)


# ---------------------------------------------------------------------------
# TV-regularized Frechet regression
# ---------------------------------------------------------------------------
@dataclass
class TVFrechetFit:
    """Piecewise-constant TV-Frechet fit with nearest-knot prediction."""

    manifold: Manifold
    knots: np.ndarray
    nodal: np.ndarray
    lam_tv: float
    trace: list = field(default_factory=list)

    def predict(self, t) -> np.ndarray:
        return tv_frechet_predict(self, t)


def tv_objective(data: Dataset, nodal, lam_tv: float) -> float:
    """``(1/n) sum d^2(Y_i, f_i) + lam_tv * sum d(f_i, f_{i+1})``."""
    M = data.manifold
    fid = np.sum(M.dist(data.points, nodal[data.knot_index]) ** 2) / data.n_total
    tv = np.sum(M.dist(nodal[:-1], nodal[1:])) if data.n_knots > 1 else 0.0
    return float(fid + lam_tv * tv)


def _move_toward(M, a, b, frac):
    """Points at fraction ``frac`` along the geodesic from ``a`` to ``b``."""
    return M.exp(a, frac[:, None] * M.log(a, b))


def _tv_sweep(data: Dataset, F, tau: float, lam_tv: float):
    M = data.manifold
    F = F.copy()
    # data term: prox of tau * d^2(., Y) (objective scaled by n)
    order = np.arange(data.n_total)
    first = np.ones(data.n_total, dtype=bool)
    first[1:] = data.knot_index[1:] != data.knot_index[:-1]
    rank = order - np.maximum.accumulate(np.where(first, order, 0))
    frac_data = 2.0 * tau / (1.0 + 2.0 * tau)
    for r in range(int(rank.max()) + 1):
        sel = rank == r
        idx = data.knot_index[sel]
        F[idx] = _move_toward(M, F[idx], data.points[sel], np.full(len(idx), frac_data))
    # TV term: prox of tau * n * lam * d(f_i, f_j), even edges then odd edges
    if data.n_knots > 1:
        reach = tau * data.n_total * lam_tv
        for parity in (0, 1):
            i = np.arange(parity, data.n_knots - 1, 2)
            if len(i) == 0:
                continue
            a, b = F[i], F[i + 1]
            dist = M.dist(a, b)
            move = np.minimum(reach, 0.5 * dist)
            frac = np.where(dist > 0, move / np.where(dist > 0, dist, 1.0), 0.0)
            F[i] = _move_toward(M, a, b, frac)
            F[i + 1] = _move_toward(M, b, a, frac)
    return F


def tv_frechet_fit(data: Dataset, lam_tv: float, sweeps: int = 300, tau0: float = 1.0) -> TVFrechetFit:
    """Cyclic proximal point algorithm for TV-regularized Frechet regression.

    The iterates start at the data. Sweep ``k`` applies the proximal maps of
    the objective scaled by ``n`` with step ``tau0 / k``: each data term
    moves ``f_i`` toward its response by the fraction ``2 tau / (1 + 2 tau)``
    and each TV term moves adjacent nodes toward each other by
    ``min(tau n lam, d / 2)``. A sweep that would increase the objective is
    retried with half the step (up to 20 times) and skipped otherwise.
    """
    if lam_tv < 0:
        raise ValueError("lam_tv must be non-negative")
    from .spline import initial_nodal

    F = initial_nodal(data)
    obj = tv_objective(data, F, lam_tv)
    trace = [obj]
    if lam_tv == 0:
        return TVFrechetFit(data.manifold, data.knots.copy(), F, lam_tv, trace)
    for k in range(1, sweeps + 1):
        tau = tau0 / k
        for _ in range(20):
            F_new = _tv_sweep(data, F, tau, lam_tv)
            new_obj = tv_objective(data, F_new, lam_tv)
            if new_obj <= obj:
                F, obj = F_new, new_obj
                break
            tau *= 0.5
        trace.append(obj)
    return TVFrechetFit(data.manifold, data.knots.copy(), F, lam_tv, trace)


def tv_frechet_predict(fit: TVFrechetFit, t) -> np.ndarray:
    """Nodal value at the nearest knot; ties go to the left knot."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    knots = fit.knots
    j = np.clip(np.searchsorted(knots, t, side="left"), 1, max(len(knots) - 1, 1))
    if len(knots) == 1:
        idx = np.zeros(len(t), dtype=int)
    else:
        left, right = knots[j - 1], knots[j]
        idx = np.where(t - left <= right - t, j - 1, j)
    out = fit.nodal[idx]
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# coordinate-wise cubic smoothing spline (extrinsic baseline)
# ---------------------------------------------------------------------------
def _reinsch_matrices(x):
    h = np.diff(x)
    n = len(x)
    # Q is n x (n-2), R is (n-2) x (n-2); both stored as diagonals
    q_sub = 1.0 / h[:-1]            # Q[j, j]
    q_mid = -1.0 / h[:-1] - 1.0 / h[1:]   # Q[j+1, j]
    q_sup = 1.0 / h[1:]             # Q[j+2, j]
    r_diag = (h[:-1] + h[1:]) / 3.0
    r_off = h[1:-1] / 6.0
    return h, q_sub, q_mid, q_sup, r_diag, r_off, n


def _q_t(y, q_sub, q_mid, q_sup):
    """``Q^T y`` for y of shape (n, ...)."""
    return q_sub[:, None] * y[:-2] + q_mid[:, None] * y[1:-1] + q_sup[:, None] * y[2:]


def _q(gamma, q_sub, q_mid, q_sup, n):
    out = np.zeros((n,) + gamma.shape[1:])
    out[:-2] += q_sub[:, None] * gamma
    out[1:-1] += q_mid[:, None] * gamma
    out[2:] += q_sup[:, None] * gamma
    return out


def _reinsch_solve(x, y, w, mu):
    """Natural cubic smoothing spline values and second derivatives for one mu.

    Minimizes ``sum w_i (y_i - g_i)^2 + mu * int g''^2``; ``y`` is (n, k).
    """
    h, q_sub, q_mid, q_sup, r_diag, r_off, n = _reinsch_matrices(x)
    m = n - 2
    winv = 1.0 / w
    # band of R + mu Q^T W^-1 Q (symmetric pentadiagonal), upper form for solveh_banded
    d0 = r_diag + mu * (q_sub**2 * winv[:-2] + q_mid**2 * winv[1:-1] + q_sup**2 * winv[2:])
    d1 = r_off + mu * (q_mid[:-1] * q_sub[1:] * winv[1:-2] + q_sup[:-1] * q_mid[1:] * winv[2:-1])
    d2 = mu * (q_sup[:-2] * q_sub[2:] * winv[2:-2])
    ab = np.zeros((3, m))
    ab[2] = d0
    ab[1, 1:] = d1
    ab[0, 2:] = d2
    gamma = solveh_banded(ab, _q_t(y, q_sub, q_mid, q_sup))
    g = y - mu * winv[:, None] * _q(gamma, q_sub, q_mid, q_sup, n)
    return g, gamma


def _weighted_line(x, y, w):
    W = np.sum(w)
    xb = np.sum(w * x) / W
    yb = np.sum(w[:, None] * y, axis=0) / W
    sxx = np.sum(w * (x - xb) ** 2)
    slope = np.sum(w[:, None] * (x - xb)[:, None] * (y - yb), axis=0) / sxx
    return yb + slope * (x - xb)[:, None], slope


@dataclass
class CubicSmoothingSpline:
    """Natural cubic smoothing splines, one per ambient coordinate.

    Attributes
    ----------
    x : ndarray (n,)
        Distinct knots.
    values : ndarray (n, D)
        Fitted values at the knots.
    second : ndarray (n, D)
        Second derivatives at the knots (zero at both ends).
    mu : ndarray (D,)
        Roughness weight chosen per coordinate (``inf`` means straight line).
    s : float
        Target residual sum of squares per coordinate.
    """

    x: np.ndarray
    values: np.ndarray
    second: np.ndarray
    mu: np.ndarray
    s: float

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x, g, c = self.x, self.values, self.second
        n = len(x)
        out = np.empty((len(t), g.shape[1]))
        lo, hi = t < x[0], t > x[-1]
        inside = ~(lo | hi)
        h = np.diff(x)
        if np.any(inside):
            ti = t[inside]
            i = np.clip(np.searchsorted(x, ti, side="right") - 1, 0, n - 2)
            hi_ = h[i][:, None]
            a = (x[i + 1][:, None] - ti[:, None]) / hi_
            b = 1.0 - a
            out[inside] = (a * g[i] + b * g[i + 1]
                           + ((a**3 - a) * c[i] + (b**3 - b) * c[i + 1]) * hi_**2 / 6.0)
        # natural boundary: linear continuation with the end slopes
        if np.any(lo):
            d0 = (g[1] - g[0]) / h[0] - h[0] * (2 * c[0] + c[1]) / 6.0
            out[lo] = g[0] + (t[lo] - x[0])[:, None] * d0
        if np.any(hi):
            dn = (g[-1] - g[-2]) / h[-1] + h[-1] * (c[-2] + 2 * c[-1]) / 6.0
            out[hi] = g[-1] + (t[hi] - x[-1])[:, None] * dn
        return out


def cubic_smoothing_spline_fit(ts, ys, s: float) -> CubicSmoothingSpline:
    """Coordinate-wise natural cubic smoothing spline with residual target ``s``.

    For each coordinate the roughness weight ``mu`` is found by bisection on
    ``log mu`` so that the residual sum of squares equals ``s``. When even
    the least-squares line leaves a residual below ``s`` the line is used;
    ``s = 0`` interpolates.

    Raises
    ------
    InsufficientData
        Fewer than four distinct design points.
    """
    ts = np.asarray(ts, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).reshape(len(ts), -1)
    if s < 0:
        raise ValueError("s must be non-negative")
    order = np.argsort(ts, kind="stable")
    ts, ys = ts[order], ys[order]
    x, inv, counts = np.unique(ts, return_inverse=True, return_counts=True)
    if len(x) < 4:
        raise InsufficientData("cubic smoothing spline needs at least four distinct design points")
    w = counts.astype(float)
    ybar = np.zeros((len(x), ys.shape[1]))
    np.add.at(ybar, inv, ys)
    ybar /= w[:, None]
    within = np.sum((ys - ybar[inv]) ** 2, axis=0)
    target = np.maximum(s - within, 0.0)

    D = ys.shape[1]
    values = np.empty_like(ybar)
    second = np.zeros_like(ybar)
    mus = np.empty(D)
    line, _ = _weighted_line(x, ybar, w)
    line_rss = np.sum(w[:, None] * (ybar - line) ** 2, axis=0)
    h = np.diff(x)
    scale = float(np.mean(h)) ** 3
    for k in range(D):
        yk = ybar[:, k:k + 1]
        if target[k] <= 0:
            g, gamma = yk, _reinsch_solve(x, yk, w, 0.0)[1]
            mus[k] = 0.0
        elif line_rss[k] <= target[k]:
            g, gamma = line[:, k:k + 1], np.zeros((len(x) - 2, 1))
            mus[k] = math.inf
        else:
            lo, hi = math.log(scale * 1e-10), math.log(scale * 1e14)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                g, _ = _reinsch_solve(x, yk, w, math.exp(mid))
                rss = float(np.sum(w * (yk[:, 0] - g[:, 0]) ** 2))
                if rss > target[k]:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-10:
                    break
            mus[k] = math.exp(0.5 * (lo + hi))
            g, gamma = _reinsch_solve(x, yk, w, mus[k])
        values[:, k] = g[:, 0]
        second[1:-1, k] = gamma[:, 0]
    return CubicSmoothingSpline(x, values, second, mus, float(s))


@dataclass
class ExtrinsicSplineModel:
    """Coordinate-wise smoothing spline in the embedding, projected back onto M."""

    manifold: Manifold
    spline: CubicSmoothingSpline

    def predict(self, t) -> np.ndarray:
        return extrinsic_predict(self.spline, self.manifold, t)


def extrinsic_predict(spline: CubicSmoothingSpline, manifold: Manifold, t) -> np.ndarray:
    return manifold.from_ambient(spline(t))


def extrinsic_spline_fit(data: Dataset, s: float) -> ExtrinsicSplineModel:
    amb = data.manifold.to_ambient(data.points)
    return ExtrinsicSplineModel(data.manifold, cubic_smoothing_spline_fit(data.obs_t, amb, s))
