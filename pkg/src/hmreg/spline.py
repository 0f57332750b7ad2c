"""Harmonic map regression: the geodesic-spline estimator.

The Dirichlet-penalized Frechet risk over curves on ``[0, 1]`` is minimized
exactly by a piecewise constant-speed geodesic through nodal values
``f_1..f_m`` at the sorted knots, so fitting reduces to minimizing

    (1/n) sum_i sum_{Y at knot i} d^2(Y, f_i) + lam * sum_i d^2(f_i, f_{i+1}) / gap_i

over ``M^m``. That objective is minimized here by Riemannian Polak-Ribiere
conjugate gradient with Armijo backtracking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .baselines import frechet_mean
from .dataset import Dataset
from .errors import CutLocus, Singular
from .manifolds import Manifold

log = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "FitReport",
    "GeodesicSpline",
    "discrete_objective",
    "riemannian_gradient",
    "fit",
    "evaluate",
    "jump_residual",
    "initial_nodal",
]


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 600
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    cfl_c: float = 1.0
    max_halvings: int = 40
    stall_window: int = 10
    stall_rtol: float = 1e-14
    precondition: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not self.cfl_c > 0:
            raise ValueError("cfl_c must be positive")


@dataclass
class FitReport:
    objective: float
    grad_norm: float
    iterations: int
    trace: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    line_search_failures: int = 0


@dataclass(frozen=True)
class GeodesicSpline:
    """Fitted geodesic spline, constant outside ``[knots[0], knots[-1]]``."""

    manifold: Manifold
    knots: np.ndarray
    nodal: np.ndarray
    lam: float

    def predict(self, t) -> np.ndarray:
        return evaluate(self, t)

    def __call__(self, t):
        return evaluate(self, t)


# ---------------------------------------------------------------------------
def _check(data: Dataset, nodal, lam):
    nodal = np.asarray(nodal, dtype=float)
    if nodal.shape != (data.n_knots, data.manifold.ambient_dim):
        raise ValueError(
            f"nodal values have shape {nodal.shape}, expected {(data.n_knots, data.manifold.ambient_dim)}"
        )
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return nodal


def discrete_objective(data: Dataset, nodal, lam: float) -> float:
    """Fidelity plus the exact Dirichlet penalty of the geodesic interpolant."""
    nodal = _check(data, nodal, lam)
    M = data.manifold
    fid = np.sum(M.dist(data.points, nodal[data.knot_index]) ** 2) / data.n_total
    if data.n_knots < 2:
        return float(fid)
    edge = M.dist(nodal[:-1], nodal[1:]) ** 2
    return float(fid + lam * np.sum(edge / data.gaps))


def _fidelity_pull(data: Dataset, nodal):
    """Sum over responses of ``log_{f_i}(Y)`` at each knot."""
    logs = data.manifold.log(nodal[data.knot_index], data.points)
    pull = np.zeros_like(nodal)
    np.add.at(pull, data.knot_index, logs)
    return pull


def _edge_pulls(data: Dataset, nodal):
    """``log_{f_i}(f_{i+1}) / gap_i`` and ``log_{f_i}(f_{i-1}) / gap_{i-1}`` (zero at the ends)."""
    M = data.manifold
    fwd = np.zeros_like(nodal)
    bwd = np.zeros_like(nodal)
    if data.n_knots > 1:
        gaps = data.gaps[:, None]
        fwd[:-1] = M.log(nodal[:-1], nodal[1:]) / gaps
        bwd[1:] = M.log(nodal[1:], nodal[:-1]) / gaps
    return fwd, bwd


def riemannian_gradient(data: Dataset, nodal, lam: float) -> np.ndarray:
    """Riemannian gradient of :func:`discrete_objective`, one tangent vector per knot.

    Raises
    ------
    CutLocus
        If any logarithm it needs is undefined.
    """
    nodal = _check(data, nodal, lam)
    fwd, bwd = _edge_pulls(data, nodal)
    return -(2.0 / data.n_total) * _fidelity_pull(data, nodal) - 2.0 * lam * (fwd + bwd)


def initial_nodal(data: Dataset) -> np.ndarray:
    """Per-knot Frechet mean of the responses (the responses themselves for distinct knots)."""
    if data.n_knots == data.n_total:
        return data.points.copy()
    out = np.empty((data.n_knots, data.manifold.ambient_dim))
    for i, (_, pts) in enumerate(data.knot_groups()):
        out[i] = frechet_mean(data.manifold, pts, strict=False)
    return out


def _inner(M: Manifold, F, U, V) -> float:
    return float(np.sum(M.inner(F, U, V)))


def _initial_step(data: Dataset, lam: float, cfl_c: float) -> float:
    inv = np.zeros(data.n_knots)
    if data.n_knots > 1:
        g = 1.0 / data.gaps
        inv[:-1] += g
        inv[1:] += g
    return cfl_c / (2.0 * lam * float(np.max(inv)) + 2.0 / data.n_total)


class _Preconditioner:
    """Inverse of a connection-Laplacian model of the Hessian.

    In orthonormal frames ``B_i`` at the nodes the model is
    ``2 (W / n + lam L)`` with ``W`` the knot multiplicities and ``L`` the
    path Laplacian with edge weights ``1 / gap``. Each off-diagonal block
    carries the matrix of parallel transport between adjacent frames, so a
    stiff edge (tiny gap) is modelled in its own geometry rather than through
    two unrelated frames. On flat targets the transport is the identity and
    the model is the exact Hessian. The block-tridiagonal matrix has
    half-bandwidth ``2d - 1`` and is solved by banded Cholesky.
    """

    def __init__(self, data: Dataset, lam: float):
        self.manifold = data.manifold
        self.diag = 2.0 * data.multiplicity.astype(float) / data.n_total
        self.edge = np.zeros(0)
        if data.n_knots > 1:
            self.edge = 2.0 * lam / data.gaps
            self.diag[:-1] += self.edge
            self.diag[1:] += self.edge

    def _transport_blocks(self, F, B):
        """``T[i, k, l] = <B_k(f_i), P_{i+1 -> i} B_l(f_{i+1})>``."""
        M = self.manifold
        d = B.shape[-2]
        if M.is_flat_chart:
            return np.broadcast_to(np.eye(d), (len(F) - 1, d, d))
        moved = M.transport(F[1:, None, :], F[:-1, None, :], B[1:])
        return M.inner(F[:-1, None, None, :], B[:-1, :, None, :], moved[:, None, :, :])

    def __call__(self, F, G):
        M = self.manifold
        m = len(F)
        B = M.tangent_basis(F)
        d = B.shape[-2]
        X = M.inner(F[:, None, :], G[:, None, :], B)
        if m == 1:
            return np.einsum("ik,ikD->iD", X / self.diag[:, None], B)
        u = 2 * d - 1
        N = m * d
        ab = np.zeros((u + 1, N))
        ab[u] = np.repeat(self.diag, d)
        T = self._transport_blocks(F, B)
        rows = np.arange(m - 1)[:, None, None] * d + np.arange(d)[None, :, None]
        cols = (np.arange(m - 1)[:, None, None] + 1) * d + np.arange(d)[None, None, :]
        vals = -self.edge[:, None, None] * T
        ab[u + rows - cols, np.broadcast_to(cols, vals.shape)] = vals
        try:
            sol = solveh_banded(ab, X.reshape(N), check_finite=False)
        except np.linalg.LinAlgError:
            return G
        return np.einsum("ik,ikD->iD", sol.reshape(m, d), B)


def _line_search(data, lam, F, Dir, phi, slope, alpha_t, cfg):
    """Armijo line search seeded by a quadratic-interpolation step.

    The objective at a trial step ``alpha_t`` and the slope at zero define a
    one-dimensional quadratic model; its minimizer is tried first, then the
    trial step, then Armijo halving. Returns ``(alpha, F_new, phi_new)`` or
    None when no acceptable step was found.
    """
    M = data.manifold

    def value(alpha):
        # an overlong step can overflow (cosh on H2) or leave the manifold;
        # both count as a failed trial, like a cut-locus hit
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                Fa = M.exp(F, alpha * Dir)
                val = discrete_objective(data, Fa, lam)
        except (CutLocus, Singular):
            return None, np.inf
        return (Fa, val) if np.isfinite(val) else (None, np.inf)

    def armijo(alpha, val):
        return val <= phi + cfg.armijo_c * alpha * slope

    halvings = 0
    F_t, phi_t = value(alpha_t)
    while not np.isfinite(phi_t) and halvings < cfg.max_halvings:
        alpha_t *= cfg.backtrack
        halvings += 1
        F_t, phi_t = value(alpha_t)
    if not np.isfinite(phi_t):
        return None
    curv = (phi_t - phi - slope * alpha_t) / alpha_t**2
    if curv > 0:
        alpha_q = min(-slope / (2.0 * curv), 1e3 * alpha_t)
        F_q, phi_q = value(alpha_q)
        if armijo(alpha_q, phi_q) and phi_q <= phi_t:
            return alpha_q, F_q, phi_q
    if armijo(alpha_t, phi_t):
        return alpha_t, F_t, phi_t
    alpha = alpha_t
    while halvings < cfg.max_halvings:
        alpha *= cfg.backtrack
        halvings += 1
        Fa, val = value(alpha)
        if armijo(alpha, val):
            return alpha, Fa, val
    return None


ROUNDING_SLACK = 1e-14


def _gradient_safeguard(data, lam, F, Z, phi, gg):
    """Full preconditioned step judged by the gradient norm.

    Close to the minimizer, the decrease along stiff directions (tiny gaps)
    drops below the rounding error of the objective, so Armijo cannot see it
    while the gradient still can. The step is accepted when the gradient
    norm at least halves and the objective does not rise by more than
    ``ROUNDING_SLACK`` relative to its size. Returns ``(F, phi, G)`` or None.
    """
    M = data.manifold
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            F_new = M.exp(F, -Z)
            phi_new = discrete_objective(data, F_new, lam)
            G_new = riemannian_gradient(data, F_new, lam)
    except (CutLocus, Singular):
        return None
    if not np.isfinite(phi_new) or phi_new > phi + ROUNDING_SLACK * max(abs(phi), 1.0):
        return None
    if not _inner(M, F_new, G_new, G_new) <= 0.25 * gg:
        return None
    return F_new, phi_new, G_new


def fit(data: Dataset, lam: float, cfg: FitConfig | None = None, init=None):
    """Fit the harmonic map regression estimator.

    Parameters
    ----------
    data : Dataset
    lam : float
        Penalty weight, strictly positive.
    cfg : FitConfig, optional
    init : array_like, optional
        Starting nodal values; defaults to :func:`initial_nodal`.

    Returns
    -------
    spline : GeodesicSpline
    report : FitReport
        ``report.converged`` is False if the iteration cap was hit; the
        last iterate is still returned.
    """
    cfg = cfg or FitConfig()
    if not lam > 0:
        raise ValueError("lambda must be positive")
    M = data.manifold
    F = initial_nodal(data) if init is None else np.array(init, dtype=float)
    phi = discrete_objective(data, F, lam)
    trace = [phi]

    if data.n_knots == 1:
        # no penalty edges: the fit is the Frechet mean of the responses
        G = riemannian_gradient(data, F, lam)
        gnorm = float(np.sqrt(max(_inner(M, F, G, G), 0.0)))
        spline = GeodesicSpline(M, data.knots.copy(), F, float(lam))
        return spline, FitReport(phi, gnorm, 0, trace, True, "single knot")

    precond = _Preconditioner(data, lam) if cfg.precondition else None
    alpha0 = 1.0 if precond else _initial_step(data, lam, cfg.cfl_c)

    def direction(F, G):
        return precond(F, G) if precond else G

    G = riemannian_gradient(data, F, lam)
    Z = direction(F, G)
    gg = _inner(M, F, G, G)
    gz = _inner(M, F, G, Z)
    Dir = -Z
    since_restart = 0
    failures = 0
    alpha_prev = alpha0
    reason = "max_iters"
    converged = False
    it = 0
    while True:
        if np.sqrt(max(gg, 0.0)) <= cfg.grad_tol:
            converged, reason = True, "grad_tol"
            break
        if len(trace) > cfg.stall_window:
            old = trace[-1 - cfg.stall_window]
            if old - trace[-1] < cfg.stall_rtol * max(abs(trace[-1]), 1e-300):
                # objective is flat to rounding; polish on the gradient norm
                for _ in range(cfg.stall_window):
                    step = _gradient_safeguard(data, lam, F, Z, phi, gg)
                    if step is None:
                        break
                    F, phi, G = step
                    Z = direction(F, G)
                    gg, gz = _inner(M, F, G, G), _inner(M, F, G, Z)
                    trace.append(phi)
                    if np.sqrt(max(gg, 0.0)) <= cfg.grad_tol:
                        break
                converged = bool(np.sqrt(max(gg, 0.0)) <= cfg.grad_tol)
                reason = "grad_tol" if converged else "stalled"
                break
        if it >= cfg.max_iters:
            break
        it += 1

        slope = _inner(M, F, G, Dir)
        restarted = False
        if not slope < 0:
            Dir, slope, restarted = -Z, -gz, True
        step = _line_search(data, lam, F, Dir, phi, slope, max(alpha0, alpha_prev), cfg)
        if step is None and not restarted:
            # failed along a conjugate direction: retry along the (preconditioned) gradient
            failures += 1
            Dir, slope = -Z, -gz
            step = _line_search(data, lam, F, Dir, phi, slope, alpha0, cfg)
        G_new = None
        if step is None:
            failures += 1
            step = _gradient_safeguard(data, lam, F, Z, phi, gg)
            if step is None:
                reason = "line_search"
                break
            F_new, phi_new, G_new = step
        else:
            alpha_prev, F_new, phi_new = step

        if G_new is None:
            try:
                G_new = riemannian_gradient(data, F_new, lam)
            except CutLocus:
                F, phi = F_new, phi_new
                trace.append(phi)
                reason = "cut_locus"
                break
        Z_new = direction(F_new, G_new)
        gz_new = _inner(M, F_new, G_new, Z_new)
        since_restart += 1
        beta = 0.0
        if since_restart < data.n_knots and gz > 0:
            G_old_t = M.tangent_project(F_new, G)
            beta = max(0.0, _inner(M, F_new, G_new - G_old_t, Z_new) / gz)
        if beta == 0.0:
            since_restart = 0
            Dir = -Z_new
        else:
            Dir = -Z_new + beta * M.tangent_project(F_new, Dir)
        F, G, Z, phi = F_new, G_new, Z_new, phi_new
        gg, gz = _inner(M, F, G, G), gz_new
        trace.append(phi)

    report = FitReport(
        objective=phi,
        grad_norm=float(np.sqrt(max(gg, 0.0))),
        iterations=it,
        trace=trace,
        converged=converged,
        reason=reason,
        line_search_failures=failures,
    )
    if not converged:
        log.debug("fit stopped without convergence (%s) after %d iterations", reason, it)
    return GeodesicSpline(M, data.knots.copy(), F, float(lam)), report


def evaluate(spline: GeodesicSpline, t) -> np.ndarray:
    """Evaluate the geodesic spline at ``t`` (scalar or array).

    Returns an array of shape ``(D,)`` for scalar ``t`` and ``(k, D)`` otherwise.

    Raises
    ------
    CutLocus
        If an evaluation falls between antipodal nodal values.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    knots, nodal, M = spline.knots, spline.nodal, spline.manifold
    out = np.empty((len(t), nodal.shape[1]))
    left = t <= knots[0]
    right = t >= knots[-1]
    out[left] = nodal[0]
    out[right & ~left] = nodal[-1]
    mid = ~(left | right)
    if np.any(mid):
        tm = t[mid]
        i = np.searchsorted(knots, tm, side="right") - 1
        s = (tm - knots[i]) / (knots[i + 1] - knots[i])
        a, b = nodal[i], nodal[i + 1]
        out[mid] = M.exp(a, s[:, None] * M.log(a, b))
    exact = np.searchsorted(knots, t)
    hit = (exact < len(knots)) & (knots[np.minimum(exact, len(knots) - 1)] == t)
    out[hit] = nodal[exact[hit]]
    return out[0] if scalar else out


def jump_residual(spline: GeodesicSpline, data: Dataset, lam: float) -> np.ndarray:
    """Violation of the derivative-jump identity at each interior knot.

    At a stationary point the one-sided derivatives satisfy
    ``F'(t_i+) - F'(t_i-) = -(1 / (n lam)) * sum_{Y at knot i} log_{f_i}(Y)``.
    Returns the Riemannian norm of ``lhs - rhs`` for ``i = 2..m-1``; it equals
    ``|grad_i| / (2 lam)``.
    """
    if data.n_knots < 3:
        return np.zeros(0)
    M = data.manifold
    F = np.asarray(spline.nodal, dtype=float)
    fwd, bwd = _edge_pulls(data, F)
    # F'(t_i+) = log(f_{i+1})/gap_i, F'(t_i-) = -log(f_{i-1})/gap_{i-1}
    jump = fwd + bwd
    res = jump + _fidelity_pull(data, F) / (data.n_total * lam)
    return M.norm(F[1:-1], res[1:-1])
