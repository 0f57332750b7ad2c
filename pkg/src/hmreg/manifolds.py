"""Closed-form Riemannian geometry for the target manifolds.

Points and tangent vectors are plain ``float64`` arrays whose last axis holds
ambient coordinates; any leading axes are batch axes and broadcast. Each
manifold is an immutable value object, so every method is a pure function.

==============  ====  ====  ===================================================
kind            D     d     coordinates
==============  ====  ====  ===================================================
``Circle``      1     1     arc-length angle in ``[0, L)``
``Sphere``      3     2     vector of norm ``r``
``Hyperbolic2`` 3     2     hyperboloid sheet ``<x,x>_{2,1} = -1``, ``x_3 > 0``
``SPD2``        4     3     flattened symmetric positive-definite 2x2 matrix
``SO3``         9     3     flattened rotation matrix
``Torus2``      2     2     angles in ``[0, L1) x [0, L2)``
``Euclidean``   d     d     the vector itself
==============  ====  ====  ===================================================

The rotation group uses the metric ``<U, V>_R = tr(U^T V) / 4``. Under it the
distance is ``theta / sqrt(2)`` for a relative rotation by ``theta``, which is
the norm of ``R logm(R^T Q)``, so exp, log and dist agree with each other. The
matching constants are curvature 1/2 and injectivity radius ``pi / sqrt(2)``.
Published tables sometimes quote 1/8 (for the metric ``tr(U^T V)``) or 1; those
values describe other normalisations of the same group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import CutLocus, Singular

__all__ = [
    "Manifold",
    "Circle",
    "Sphere",
    "Hyperbolic2",
    "SPD2",
    "SO3",
    "Torus2",
    "Euclidean",
    "manifold_from_tag",
    "format_point",
    "parse_point",
    "curvature_factor",
]

_TWO_PI = 2.0 * math.pi


def _dot(u, v):
    return np.sum(u * v, axis=-1)


def _norm(u):
    return np.sqrt(np.sum(u * u, axis=-1))


def _wrap(x, period):
    """Reduce ``x`` into ``[0, period)``."""
    out = np.mod(x, period)
    return np.where(out >= period, 0.0, out)


def _signed_rep(diff, period):
    """Representative of ``diff`` modulo ``period`` in ``(-period/2, period/2]``."""
    half = 0.5 * period
    return -(np.mod(-diff + half, period) - half)


class Manifold:
    """Interface shared by all target manifolds.

    Subclasses set the class attributes ``ambient_dim`` and ``dim`` (or the
    equivalent properties) and implement the geometric primitives below.
    """

    ambient_dim: int
    dim: int
    name: ClassVar[str] = "manifold"

    # geometric constants -------------------------------------------------
    @property
    def kappa_plus(self) -> float:
        """Upper bound on the positive part of the sectional curvature."""
        raise NotImplementedError

    @property
    def inj_radius(self) -> float:
        raise NotImplementedError

    @property
    def convexity_radius(self) -> float:
        """``min(inj / 2, pi / (2 sqrt(kappa_plus)))``."""
        bound = math.inf if self.kappa_plus <= 0 else math.pi / (2.0 * math.sqrt(self.kappa_plus))
        return min(0.5 * self.inj_radius, bound)

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def tag(self) -> str:
        raise NotImplementedError

    @property
    def is_flat_chart(self) -> bool:
        """True for kinds whose tangent spaces are a fixed chart (circle, torus, R^d)."""
        return False

    # primitives ----------------------------------------------------------
    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def dist(self, p, q):
        raise NotImplementedError

    def log_lenient(self, p, q):
        """Like :meth:`log`, but picks some minimizing geodesic at the cut locus.

        Only for estimators that need *an* answer; gradients of the harmonic
        map objective use the strict :meth:`log`.
        """
        return self.log(p, q)

    def inner(self, p, u, v):
        """Riemannian inner product of tangent vectors ``u, v`` at ``p``."""
        return _dot(u, v)

    def norm(self, p, v):
        return np.sqrt(np.maximum(self.inner(p, v, v), 0.0))

    def tangent_project(self, p, w):
        raise NotImplementedError

    def project(self, x):
        """Nearest manifold point to an ambient vector (``project_ambient``)."""
        raise NotImplementedError

    def tangent_basis(self, p):
        """Orthonormal basis of ``T_p M``; shape ``p.shape[:-1] + (d, D)``."""
        raise NotImplementedError

    def check_point(self, p, tol: float = 1e-10) -> bool:
        raise NotImplementedError

    def transport(self, p, q, v):
        """Parallel transport of ``v`` in ``T_p M`` to ``T_q M`` along the minimizing geodesic.

        The default is exact for flat kinds, whose tangent spaces coincide.
        """
        return self.tangent_project(q, np.broadcast_to(np.asarray(v, float), np.broadcast_shapes(np.shape(q), np.shape(v))))

    def _transport_constant_curvature(self, p, q, v):
        # the component along the geodesic turns with it; the normal one is fixed
        a = self.log(p, q)
        b = self.log(q, p)
        d2 = self.inner(p, a, a)[..., None]
        coef = np.where(d2 > 0, self.inner(p, a, v)[..., None] / np.where(d2 > 0, d2, 1.0), 0.0)
        return self.tangent_project(q, v - coef * (a + b))

    # extrinsic embedding used by the coordinate-wise spline baseline -----
    def to_ambient(self, p):
        return np.asarray(p, dtype=float)

    def from_ambient(self, x):
        return self.project(x)

    # helpers ---------------------------------------------------------------
    def geodesic(self, p, q, s):
        """Point at fraction ``s`` along the minimizing geodesic from p to q."""
        s = np.asarray(s, dtype=float)[..., None]
        return self.exp(p, s * self.log(p, q))

    def random_point(self, rng, size=None):
        raise NotImplementedError

    def random_tangent(self, rng, p, scale=1.0):
        """Isotropic Gaussian tangent vector at ``p`` with per-axis std ``scale``."""
        p = np.asarray(p, dtype=float)
        basis = self.tangent_basis(p)
        coef = rng.standard_normal(p.shape[:-1] + (self.dim,)) * scale
        return np.einsum("...k,...kD->...D", coef, basis)

    def __str__(self):
        return self.tag


# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class Circle(Manifold):
    """Circle of circumference ``L``; points are arc-length angles in ``[0, L)``."""

    circumference: float = _TWO_PI
    ambient_dim: ClassVar[int] = 1
    dim: ClassVar[int] = 1
    name: ClassVar[str] = "circle"

    def __post_init__(self):
        if not self.circumference > 0:
            raise ValueError("circumference must be positive")

    @property
    def kappa_plus(self):
        return 0.0

    @property
    def inj_radius(self):
        return 0.5 * self.circumference

    @property
    def diameter(self):
        return 0.5 * self.circumference

    @property
    def tag(self):
        return f"circle:L={self.circumference!r}"

    @property
    def is_flat_chart(self):
        return True

    def exp(self, p, v):
        return _wrap(np.asarray(p, float) + np.asarray(v, float), self.circumference)

    def log(self, p, q):
        return _signed_rep(np.asarray(q, float) - np.asarray(p, float), self.circumference)

    def dist(self, p, q):
        return np.abs(self.log(p, q))[..., 0]

    def tangent_project(self, p, w):
        return np.broadcast_to(np.asarray(w, float), np.broadcast_shapes(np.shape(p), np.shape(w))).copy()

    def project(self, x):
        return _wrap(np.asarray(x, float), self.circumference)

    def tangent_basis(self, p):
        p = np.asarray(p, float)
        return np.ones(p.shape[:-1] + (1, 1))

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, float)
        return bool(p.shape[-1] == 1 and np.all(p >= 0) and np.all(p < self.circumference))

    @property
    def _radius(self):
        return self.circumference / _TWO_PI

    def to_ambient(self, p):
        ang = np.asarray(p, float)[..., 0] / self._radius
        return self._radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    def from_ambient(self, x):
        x = np.asarray(x, float)
        if np.any(np.hypot(x[..., 0], x[..., 1]) == 0):
            raise Singular("zero vector has no nearest point on the circle")
        ang = np.arctan2(x[..., 1], x[..., 0]) * self._radius
        return _wrap(ang, self.circumference)[..., None]

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        return rng.uniform(0.0, self.circumference, size=shape + (1,))


# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class Torus2(Manifold):
    """Flat torus ``R^2 / (L1 Z x L2 Z)`` in the angle chart."""

    L1: float = _TWO_PI
    L2: float = _TWO_PI
    ambient_dim: ClassVar[int] = 2
    dim: ClassVar[int] = 2
    name: ClassVar[str] = "torus2"

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0):
            raise ValueError("side lengths must be positive")

    @property
    def periods(self):
        return np.array([self.L1, self.L2])

    @property
    def kappa_plus(self):
        return 0.0

    @property
    def inj_radius(self):
        return 0.5 * min(self.L1, self.L2)

    @property
    def diameter(self):
        return 0.5 * math.hypot(self.L1, self.L2)

    @property
    def tag(self):
        return f"torus2:L1={self.L1!r},L2={self.L2!r}"

    @property
    def is_flat_chart(self):
        return True

    def exp(self, p, v):
        return _wrap(np.asarray(p, float) + np.asarray(v, float), self.periods)

    def log(self, p, q):
        return _signed_rep(np.asarray(q, float) - np.asarray(p, float), self.periods)

    def dist(self, p, q):
        return _norm(self.log(p, q))

    def tangent_project(self, p, w):
        return np.broadcast_to(np.asarray(w, float), np.broadcast_shapes(np.shape(p), np.shape(w))).copy()

    def project(self, x):
        return _wrap(np.asarray(x, float), self.periods)

    def tangent_basis(self, p):
        p = np.asarray(p, float)
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, float)
        return bool(p.shape[-1] == 2 and np.all(p >= 0) and np.all(p < self.periods))

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        return rng.uniform(0.0, 1.0, size=shape + (2,)) * self.periods


# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class Euclidean(Manifold):
    """Flat ``R^d``; every operation is plain vector arithmetic."""

    d: int = 1
    name: ClassVar[str] = "euclid"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")

    @property
    def ambient_dim(self):
        return self.d

    @property
    def dim(self):
        return self.d

    @property
    def kappa_plus(self):
        return 0.0

    @property
    def inj_radius(self):
        return math.inf

    @property
    def diameter(self):
        return math.inf

    @property
    def tag(self):
        return f"euclid:d={self.d}"

    @property
    def is_flat_chart(self):
        return True

    def exp(self, p, v):
        return np.asarray(p, float) + np.asarray(v, float)

    def log(self, p, q):
        return np.asarray(q, float) - np.asarray(p, float)

    def dist(self, p, q):
        return _norm(self.log(p, q))

    def tangent_project(self, p, w):
        return np.broadcast_to(np.asarray(w, float), np.broadcast_shapes(np.shape(p), np.shape(w))).copy()

    def project(self, x):
        return np.array(x, dtype=float)

    def tangent_basis(self, p):
        p = np.asarray(p, float)
        return np.broadcast_to(np.eye(self.d), p.shape[:-1] + (self.d, self.d)).copy()

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, float)
        return bool(p.shape[-1] == self.d and np.all(np.isfinite(p)))

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(shape + (self.d,))


# ----------------------------------------------------------------------------
@dataclass(frozen=True)
class Sphere(Manifold):
    """Two-sphere of radius ``radius`` embedded in ``R^3``."""

    radius: float = 1.0
    ambient_dim: ClassVar[int] = 3
    dim: ClassVar[int] = 2
    name: ClassVar[str] = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def kappa_plus(self):
        return 1.0 / self.radius**2

    @property
    def inj_radius(self):
        return math.pi * self.radius

    @property
    def diameter(self):
        return math.pi * self.radius

    @property
    def tag(self):
        return f"sphere:r={self.radius!r}"

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        nv = _norm(v)[..., None]
        ang = nv / self.radius
        safe = np.where(nv > 0, nv, 1.0)
        out = np.cos(ang) * p + self.radius * np.sin(ang) * v / safe
        return self.project(out)

    def log(self, p, q):
        p = np.asarray(p, float) / self.radius
        q = np.asarray(q, float) / self.radius
        c = _dot(p, q)[..., None]
        u = q - c * p
        s = _norm(u)[..., None]
        ang = np.arctan2(s, c)
        if np.any(math.pi - ang < 1e-9):
            raise CutLocus("antipodal points on the sphere")
        factor = np.where(s > 0, ang / np.where(s > 0, s, 1.0), 1.0)
        return self.radius * factor * u

    def log_lenient(self, p, q):
        try:
            return self.log(p, q)
        except CutLocus:
            pass
        p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
        flat_p, flat_q = p.reshape(-1, 3), q.reshape(-1, 3)
        out = np.empty(flat_p.shape)
        for k in range(len(flat_p)):
            try:
                out[k] = self.log(flat_p[k], flat_q[k])
            except CutLocus:
                out[k] = math.pi * self.radius * self.tangent_basis(flat_p[k])[0]
        return out.reshape(p.shape)

    def dist(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        cross = _norm(np.cross(p, q))
        return self.radius * np.arctan2(cross, _dot(p, q))

    def tangent_project(self, p, w):
        p = np.asarray(p, float)
        w = np.asarray(w, float)
        return w - (_dot(w, p) / self.radius**2)[..., None] * p

    def project(self, x):
        x = np.asarray(x, float)
        nx = _norm(x)[..., None]
        if np.any(nx < 1e-300):
            raise Singular("zero vector has no nearest point on the sphere")
        return self.radius * x / nx

    def transport(self, p, q, v):
        return self._transport_constant_curvature(p, q, v)

    def tangent_basis(self, p):
        p = np.asarray(p, float)
        unit = p / _norm(p)[..., None]
        # seed with the coordinate axis least aligned with p
        axis = np.argmin(np.abs(unit), axis=-1)
        seed = np.eye(3)[axis]
        b1 = seed - _dot(seed, unit)[..., None] * unit
        b1 = b1 / _norm(b1)[..., None]
        b2 = np.cross(unit, b1)
        return np.stack([b1, b2], axis=-2)

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, float)
        return bool(p.shape[-1] == 3 and np.all(np.abs(_norm(p) - self.radius) <= tol * max(1.0, self.radius)))

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        return self.project(rng.standard_normal(shape + (3,)))


# ----------------------------------------------------------------------------
def _minkowski(u, v):
    return u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1] - u[..., 2] * v[..., 2]


@dataclass(frozen=True)
class Hyperbolic2(Manifold):
    """Hyperbolic plane in the hyperboloid model."""

    ambient_dim: ClassVar[int] = 3
    dim: ClassVar[int] = 2
    name: ClassVar[str] = "h2"

    @property
    def kappa_plus(self):
        return 0.0

    @property
    def inj_radius(self):
        return math.inf

    @property
    def diameter(self):
        return math.inf

    @property
    def tag(self):
        return "h2"

    def inner(self, p, u, v):
        return _minkowski(u, v)

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        nv = np.sqrt(np.maximum(_minkowski(v, v), 0.0))[..., None]
        safe = np.where(nv > 0, nv, 1.0)
        out = np.cosh(nv) * p + np.sinh(nv) * v / safe
        return self.project(out)

    def _log_parts(self, p, q):
        b = -_minkowski(p, q)[..., None]
        u = q - b * p
        s = np.sqrt(np.maximum(_minkowski(u, u), 0.0))[..., None]
        return b, u, s

    def log(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        _, u, s = self._log_parts(p, q)
        theta = np.arcsinh(s)
        factor = np.where(s > 0, theta / np.where(s > 0, s, 1.0), 1.0)
        return factor * u

    def dist(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        b, _, s = self._log_parts(p, q)
        b, s = b[..., 0], s[..., 0]
        # arccosh is ill-conditioned near 1; arcsinh of the tangent norm is not
        far = np.arccosh(np.maximum(b, 1.0))
        return np.where(b > 1.5, far, np.arcsinh(s))

    def tangent_project(self, p, w):
        p = np.asarray(p, float)
        w = np.asarray(w, float)
        return w + _minkowski(p, w)[..., None] * p

    def project(self, x):
        x = np.asarray(x, float)
        m = _minkowski(x, x)
        if np.any(m >= 0) or np.any(x[..., 2] <= 0):
            raise Singular("vector is not future timelike; no hyperboloid rescaling")
        return x / np.sqrt(-m)[..., None]

    def transport(self, p, q, v):
        return self._transport_constant_curvature(p, q, v)

    def tangent_basis(self, p):
        p = np.asarray(p, float)
        e = np.eye(3)
        shape = p.shape[:-1] + (3,)
        b1 = self.tangent_project(p, np.broadcast_to(e[0], shape))
        b1 = b1 / np.sqrt(_minkowski(b1, b1))[..., None]
        b2 = self.tangent_project(p, np.broadcast_to(e[1], shape))
        b2 = b2 - _minkowski(b2, b1)[..., None] * b1
        b2 = b2 / np.sqrt(_minkowski(b2, b2))[..., None]
        return np.stack([b1, b2], axis=-2)

    def check_point(self, p, tol=1e-10):
        p = np.asarray(p, float)
        scale = np.maximum(1.0, p[..., 2] ** 2)
        return bool(p.shape[-1] == 3 and np.all(np.abs(_minkowski(p, p) + 1.0) <= tol * scale) and np.all(p[..., 2] > 0))

    def from_ambient(self, x):
        """Rescale timelike vectors; lift the rest vertically onto the sheet.

        A coordinate-wise spline can leave the future light cone, where no
        Minkowski rescaling exists. Those rows keep their first two
        coordinates and get ``x3 = sqrt(1 + x1^2 + x2^2)``.
        """
        x = np.asarray(x, float)
        m = _minkowski(x, x)
        ok = (m < 0) & (x[..., 2] > 0)
        lift = np.concatenate([x[..., :2], np.sqrt(1 + np.sum(x[..., :2] ** 2, axis=-1, keepdims=True))], axis=-1)
        scaled = x / np.sqrt(np.where(ok, -m, 1.0))[..., None]
        return np.where(ok[..., None], scaled, lift)

    @staticmethod
    def from_poincare(z):
        """Map Poincare-disk coordinates ``(..., 2)`` onto the hyperboloid."""
        z = np.asarray(z, float)
        r2 = np.sum(z * z, axis=-1, keepdims=True)
        return np.concatenate([2 * z, 1 + r2], axis=-1) / (1 - r2)

    @staticmethod
    def to_poincare(x):
        x = np.asarray(x, float)
        return x[..., :2] / (1 + x[..., 2:3])

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        xy = rng.standard_normal(shape + (2,))
        return np.concatenate([xy, np.sqrt(1 + np.sum(xy * xy, axis=-1, keepdims=True))], axis=-1)


# ----------------------------------------------------------------------------
def _sym_eig2(a, b, c):
    """Closed-form eigensystem of symmetric ``[[a, b], [b, c]]`` (batched).

    Returns eigenvalues ``(w_max, w_min)`` and the rotation angle ``phi`` of
    the eigenvector ``(cos phi, sin phi)`` belonging to ``w_max``.
    """
    m = 0.5 * (a + c)
    h = 0.5 * (a - c)
    r = np.hypot(h, b)
    w_max = m + r
    det = a * c - b * b
    # the smaller root by cancellation loses digits; det / w_max does not
    w_min = np.where(w_max > 0, det / np.where(w_max > 0, w_max, 1.0), m - r)
    phi = 0.5 * np.arctan2(b, h)
    return w_max, w_min, phi


def _sym_fun2(S, f):
    """Apply a scalar function to a batch of symmetric 2x2 matrices ``(..., 2, 2)``."""
    a = S[..., 0, 0]
    b = 0.5 * (S[..., 0, 1] + S[..., 1, 0])
    c = S[..., 1, 1]
    w1, w2, phi = _sym_eig2(a, b, c)
    f1, f2 = f(w1), f(w2)
    cs, sn = np.cos(phi), np.sin(phi)
    out = np.empty(S.shape)
    out[..., 0, 0] = f1 * cs * cs + f2 * sn * sn
    out[..., 1, 1] = f1 * sn * sn + f2 * cs * cs
    out[..., 0, 1] = out[..., 1, 0] = (f1 - f2) * cs * sn
    return out


def _sym_eigvals2(S):
    a = S[..., 0, 0]
    b = 0.5 * (S[..., 0, 1] + S[..., 1, 0])
    c = S[..., 1, 1]
    w1, w2, _ = _sym_eig2(a, b, c)
    return w1, w2


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


@dataclass(frozen=True)
class SPD2(Manifold):
    """Symmetric positive-definite 2x2 matrices with the affine-invariant metric."""

    ambient_dim: ClassVar[int] = 4
    dim: ClassVar[int] = 3
    name: ClassVar[str] = "spd2"

    @property
    def kappa_plus(self):
        return 0.0

    @property
    def inj_radius(self):
        return math.inf

    @property
    def diameter(self):
        return math.inf

    @property
    def tag(self):
        return "spd2"

    @staticmethod
    def _mat(x):
        x = np.asarray(x, float)
        return x.reshape(x.shape[:-1] + (2, 2))

    @staticmethod
    def _flat(M):
        return M.reshape(M.shape[:-2] + (4,))

    def _roots(self, P):
        half = _sym_fun2(P, np.sqrt)
        inv_half = _sym_fun2(P, lambda w: 1.0 / np.sqrt(w))
        return half, inv_half

    def inner(self, p, u, v):
        P = self._mat(p)
        Pinv = _sym_fun2(P, lambda w: 1.0 / w)
        U, V = self._mat(u), self._mat(v)
        return np.einsum("...ij,...jk,...kl,...li->...", Pinv, U, Pinv, V)

    def exp(self, p, v):
        P, V = self._mat(p), self._mat(v)
        half, inv_half = self._roots(P)
        inner = _sym_fun2(inv_half @ _sym(V) @ inv_half, np.exp)
        return self._flat(_sym(half @ inner @ half))

    def log(self, p, q):
        P, Q = self._mat(p), self._mat(q)
        half, inv_half = self._roots(P)
        inner = _sym_fun2(_sym(inv_half @ Q @ inv_half), np.log)
        return self._flat(_sym(half @ inner @ half))

    def dist(self, p, q):
        P, Q = self._mat(p), self._mat(q)
        _, inv_half = self._roots(P)
        w1, w2 = _sym_eigvals2(_sym(inv_half @ Q @ inv_half))
        return np.hypot(np.log(w1), np.log(w2))

    def tangent_project(self, p, w):
        W = self._mat(w)
        out = _sym(W)
        return self._flat(np.broadcast_to(out, np.broadcast_shapes(np.shape(p), np.shape(w))[:-1] + (2, 2)).copy())

    def project(self, x):
        X = _sym(self._mat(x))
        return self._flat(_sym_fun2(X, lambda w: np.maximum(w, 1e-10)))

    def transport(self, p, q, v):
        """``E V E^T`` with ``E = P^(1/2) (P^(-1/2) Q P^(-1/2))^(1/2) P^(-1/2)``."""
        P, Q, V = self._mat(p), self._mat(q), self._mat(v)
        half, inv_half = self._roots(P)
        E = half @ _sym_fun2(_sym(inv_half @ Q @ inv_half), np.sqrt) @ inv_half
        return self._flat(_sym(E @ _sym(V) @ np.swapaxes(E, -1, -2)))

    def tangent_basis(self, p):
        P = self._mat(p)
        half = _sym_fun2(P, np.sqrt)
        r = 1.0 / math.sqrt(2.0)
        E = np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, r], [r, 0.0]], [[0.0, 0.0], [0.0, 1.0]]])
        B = half[..., None, :, :] @ E @ half[..., None, :, :]
        return B.reshape(B.shape[:-2] + (4,))

    def check_point(self, p, tol=1e-10):
        P = self._mat(p)
        if not np.all(np.abs(P[..., 0, 1] - P[..., 1, 0]) <= tol * np.maximum(1.0, np.abs(P[..., 0, 1]))):
            return False
        _, w2 = _sym_eigvals2(P)
        return bool(np.all(w2 > 0))

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        S = rng.standard_normal(shape + (2, 2)) * 0.5
        return self._flat(_sym_fun2(_sym(S), np.exp))


# ----------------------------------------------------------------------------
def _hat(w):
    """Skew matrix ``[w]_x`` from axis vectors ``(..., 3)``."""
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def _vee(A):
    return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)


def _skew(A):
    return 0.5 * (A - np.swapaxes(A, -1, -2))


def _rodrigues(w):
    theta = _norm(w)[..., None, None]
    K = _hat(w)
    small = theta < 1e-6
    ts = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(ts)) / ts**2)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a * K + b * (K @ K)


@dataclass(frozen=True)
class SO3(Manifold):
    """Rotation group with the bi-invariant metric ``tr(U^T V) / 4``."""

    ambient_dim: ClassVar[int] = 9
    dim: ClassVar[int] = 3
    name: ClassVar[str] = "so3"

    @property
    def kappa_plus(self):
        return 0.5

    @property
    def inj_radius(self):
        return math.pi / math.sqrt(2.0)

    @property
    def diameter(self):
        return math.pi / math.sqrt(2.0)

    @property
    def tag(self):
        return "so3"

    @staticmethod
    def _mat(x):
        x = np.asarray(x, float)
        return x.reshape(x.shape[:-1] + (3, 3))

    @staticmethod
    def _flat(M):
        return M.reshape(M.shape[:-2] + (9,))

    def inner(self, p, u, v):
        return 0.25 * _dot(np.asarray(u, float), np.asarray(v, float))

    def exp(self, p, v):
        R, V = self._mat(p), self._mat(v)
        omega = _vee(_skew(np.swapaxes(R, -1, -2) @ V))
        return self.project(self._flat(R @ _rodrigues(omega)))

    def _relative(self, p, q):
        R, Q = self._mat(p), self._mat(q)
        M = np.swapaxes(R, -1, -2) @ Q
        A = _skew(M)
        s = _norm(_vee(A))
        c = 0.5 * (np.trace(M, axis1=-2, axis2=-1) - 1.0)
        return R, M, A, s, c

    def log(self, p, q):
        R, M, A, s, c = self._relative(p, q)
        if np.any(np.trace(M, axis1=-2, axis2=-1) <= -1.0 + 1e-6):
            raise CutLocus("relative rotation angle is (numerically) pi")
        theta = np.arctan2(s, c)
        small = s < 1e-8
        factor = np.where(small, 1.0 + theta**2 / 6.0, theta / np.where(small, 1.0, s))
        return self._flat(R @ (factor[..., None, None] * A))

    def transport(self, p, q, v):
        """Body velocity conjugated by half the relative rotation, then carried to ``q``."""
        R, Q = self._mat(p), self._mat(q)
        Rt = np.swapaxes(R, -1, -2)
        xi = _vee(Rt @ self._mat(self.log(p, q)))
        half = _rodrigues(0.5 * xi)
        body = np.swapaxes(half, -1, -2) @ _skew(Rt @ self._mat(v)) @ half
        return self._flat(Q @ body)

    def log_lenient(self, p, q):
        try:
            return self.log(p, q)
        except CutLocus:
            pass
        p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
        flat_p, flat_q = p.reshape(-1, 9), q.reshape(-1, 9)
        out = np.empty(flat_p.shape)
        for k in range(len(flat_p)):
            try:
                out[k] = self.log(flat_p[k], flat_q[k])
            except CutLocus:
                R = self._mat(flat_p[k])
                M = R.T @ self._mat(flat_q[k])
                # a half-turn has M = 2 n n^T - I; read the axis off M + I
                S = M + np.eye(3)
                axis = S[:, int(np.argmax(np.linalg.norm(S, axis=0)))]
                axis = axis / np.linalg.norm(axis)
                theta = np.arctan2(np.linalg.norm(_vee(_skew(M))), 0.5 * (np.trace(M) - 1.0))
                out[k] = self._flat(R @ _hat(theta * axis))
        return out.reshape(p.shape)

    def dist(self, p, q):
        _, _, _, s, c = self._relative(p, q)
        return np.arctan2(s, c) / math.sqrt(2.0)

    def tangent_project(self, p, w):
        R, W = self._mat(p), self._mat(w)
        return self._flat(R @ _skew(np.swapaxes(R, -1, -2) @ W))

    def project(self, x):
        X = self._mat(x)
        U, sv, Vt = np.linalg.svd(X)
        det = np.linalg.det(U @ Vt)
        flip = det < 0
        if np.any(flip):
            ambiguous = np.abs(sv[..., 1] - sv[..., 2]) <= 1e-12 * np.maximum(sv[..., 0], 1e-300)
            if np.any(flip & ambiguous):
                raise Singular("nearest rotation is not unique")
        if np.any(sv[..., 1] <= 1e-300):
            raise Singular("rank-deficient matrix has no unique nearest rotation")
        D = np.ones(sv.shape)
        D[..., 2] = np.where(flip, -1.0, 1.0)
        return self._flat((U * D[..., None, :]) @ Vt)

    def tangent_basis(self, p):
        R = self._mat(p)
        gens = math.sqrt(2.0) * _hat(np.eye(3))
        B = R[..., None, :, :] @ gens
        return B.reshape(B.shape[:-2] + (9,))

    def check_point(self, p, tol=1e-10):
        R = self._mat(p)
        eye = np.eye(3)
        ortho = np.abs(np.swapaxes(R, -1, -2) @ R - eye).max(axis=(-2, -1)) <= tol
        return bool(np.all(ortho) and np.all(np.abs(np.linalg.det(R) - 1.0) <= 1e-9))

    @staticmethod
    def rotation(axis, angle):
        """Rotation matrix (flattened) about ``axis`` by ``angle`` radians."""
        axis = np.asarray(axis, float)
        axis = axis / np.linalg.norm(axis)
        return _rodrigues(axis * angle).reshape(9)

    def random_point(self, rng, size=None):
        shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
        q = rng.standard_normal(shape + (4,))
        q /= _norm(q)[..., None]
        w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
        R = np.stack(
            [
                1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
                2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
                2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y),
            ],
            axis=-1,
        )
        return R


# ----------------------------------------------------------------------------
def _parse_params(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed manifold parameter {item!r}")
        out[key.strip()] = value.strip()
    return out


def manifold_from_tag(tag: str) -> Manifold:
    """Parse a string tag such as ``sphere:r=1.0`` or ``torus2:L1=6.28,L2=6.28``."""
    kind, _, rest = tag.strip().partition(":")
    kind = kind.lower()
    params = _parse_params(rest)
    try:
        if kind == "sphere":
            return Sphere(float(params.pop("r", 1.0)))
        if kind == "circle":
            return Circle(float(params.pop("L", _TWO_PI)))
        if kind == "h2":
            return Hyperbolic2()
        if kind == "spd2":
            return SPD2()
        if kind == "so3":
            return SO3()
        if kind == "torus2":
            return Torus2(float(params.pop("L1", _TWO_PI)), float(params.pop("L2", _TWO_PI)))
        if kind == "euclid":
            return Euclidean(int(params.pop("d", 1)))
    finally:
        if params:
            raise ValueError(f"unknown parameters {sorted(params)} for manifold {kind!r}")
    raise ValueError(f"unknown manifold kind {kind!r}")


def format_point(p) -> str:
    return ",".join(repr(float(x)) for x in np.asarray(p, float).ravel())


def parse_point(text: str, manifold: Manifold):
    vals = np.array([float(x) for x in text.split(",")])
    if vals.shape[0] != manifold.ambient_dim:
        raise ValueError(f"expected {manifold.ambient_dim} coordinates, got {vals.shape[0]}")
    return vals


# ----------------------------------------------------------------------------
def curvature_factor(kappa: float, r: float) -> float:
    """Positive-curvature discount ``sqrt(k) r / tan(sqrt(k) r)``; 1 if ``k <= 0``.

    Raises
    ------
    DomainError
        If ``kappa > 0`` and ``sqrt(kappa) * r >= pi / 2``.
    """
    from .errors import DomainError

    if r < 0:
        raise DomainError("r must be non-negative")
    if kappa <= 0:
        return 1.0
    x = math.sqrt(kappa) * r
    if x >= 0.5 * math.pi:
        raise DomainError("sqrt(kappa) * r must be below pi/2")
    if x == 0:
        return 1.0
    return x / math.tan(x)
