"""Independent reference computations used to freeze expected values.

Nothing here imports the estimator code paths under test; each oracle works
from first principles (dense linear algebra, finite differences, scipy).
"""

import numpy as np


def circle_two_point(lam):
    """Nodal values for responses 0 and 1 at t = 0, 1 on a long circle.

    Stationarity of ``(f1^2 + (f2 - 1)^2) / 2 + lam (f2 - f1)^2`` is the 2x2
    system ``[[1 + 2 lam, -2 lam], [-2 lam, 1 + 2 lam]] f = [0, 1]``.
    """
    A = np.array([[1 + 2 * lam, -2 * lam], [-2 * lam, 1 + 2 * lam]])
    return np.linalg.solve(A, [0.0, 1.0])


def euclidean_spline(t, y, lam):
    """Dense solve of ``(W/n + lam L) f = S/n`` on R^1 (W multiplicities, L weighted Laplacian)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float).ravel()
    knots, inv = np.unique(t, return_inverse=True)
    m, n = len(knots), len(t)
    W = np.bincount(inv, minlength=m).astype(float)
    S = np.bincount(inv, weights=y, minlength=m)
    L = np.zeros((m, m))
    for i, g in enumerate(np.diff(knots)):
        w = 1.0 / g
        L[i, i] += w
        L[i + 1, i + 1] += w
        L[i, i + 1] -= w
        L[i + 1, i] -= w
    return knots, np.linalg.solve(np.diag(W) / n + lam * L, S / n)


def fd_gradient(manifold, objective, F, h=1e-6):
    """Central differences of ``objective`` along each tangent basis vector, mapped back to ambient form."""
    F = np.asarray(F, float)
    B = manifold.tangent_basis(F)
    G = np.zeros_like(F)
    for i in range(len(F)):
        for k in range(manifold.dim):
            Fp, Fm = F.copy(), F.copy()
            Fp[i] = manifold.exp(F[i], h * B[i, k])
            Fm[i] = manifold.exp(F[i], -h * B[i, k])
            G[i] += (objective(Fp) - objective(Fm)) / (2 * h) * B[i, k]
    return G


def circle_intrinsic_mean(angles, grid=200001):
    """Brute-force minimizer of the summed squared arc distance on the unit circle."""
    from scipy.optimize import minimize_scalar

    a = np.asarray(angles, float)

    def cost(m):
        d = np.abs(a[None, :] - np.atleast_1d(m)[:, None]) % (2 * np.pi)
        return np.sum(np.minimum(d, 2 * np.pi - d) ** 2, axis=1)

    cand = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    m0 = cand[np.argmin(cost(cand))]
    h = 2 * np.pi / grid
    res = minimize_scalar(lambda m: cost(m)[0], bounds=(m0 - h, m0 + h), method="bounded",
                          options={"xatol": 1e-13})
    return res.x % (2 * np.pi)


def spd_commuting_mean(mats):
    """Affine-invariant mean of commuting SPD matrices: ``exp(mean log)``."""
    logs = []
    for A in mats:
        w, V = np.linalg.eigh(A)
        logs.append(V @ np.diag(np.log(w)) @ V.T)
    w, V = np.linalg.eigh(np.mean(logs, axis=0))
    return V @ np.diag(np.exp(w)) @ V.T


def curvature_factor_series(kappa, r, terms=12):
    """``x / tan x`` with ``x = sqrt(kappa) r`` from its power series ``1 - x^2/3 - x^4/45 - 2x^6/945 - ...``."""
    from math import factorial

    from scipy.special import bernoulli

    x2 = kappa * r * r
    B = bernoulli(2 * terms)
    # x cot x = sum_{k>=0} (-4)^k B_{2k} x^{2k} / (2k)!
    return float(sum((-4) ** k * B[2 * k] * x2**k / factorial(2 * k) for k in range(terms)))
