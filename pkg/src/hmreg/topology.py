"""Winding numbers, Dirichlet energy and homotopy-class diagnostics for S^1 and T^2.

Fits live on an interval domain, so a circle-valued fit has no closed-loop
degree. Its class is read off the total signed rotation of the nodal values
instead, which is what an unwrapped-angle plot shows. The ``closed_*``
helpers instead close the chain with its wrap-around edge, which gives a
genuine loop with an integer degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousIncrement, UnsupportedManifold
from .manifolds import Circle, Manifold, Torus2, _signed_rep

ROUNDING_GUARD = 0.25
AMBIGUITY_SLACK = 1e-9


@dataclass(frozen=True)
class HomotopyClass:
    """Integer winding per periodic coordinate: ``(k,)`` on S^1, ``(k1, k2)`` on T^2."""

    winding: tuple

    def __post_init__(self):
        object.__setattr__(self, "winding", tuple(int(k) for k in np.atleast_1d(self.winding)))

    @property
    def is_trivial(self) -> bool:
        return all(k == 0 for k in self.winding)

    def __int__(self):
        if len(self.winding) != 1:
            raise TypeError("only a circle class converts to a single integer")
        return self.winding[0]


@dataclass(frozen=True)
class WindingEstimate:
    """Raw winding displacement and the integer class it rounds to.

    ``raw`` is the total signed displacement divided by the period, per
    coordinate. ``cls`` is None when some coordinate sits further than
    ``ROUNDING_GUARD`` from an integer.
    """

    raw: np.ndarray
    cls: HomotopyClass | None

    @property
    def has_class(self) -> bool:
        return self.cls is not None


def _periods(manifold: Manifold) -> np.ndarray:
    if isinstance(manifold, Circle):
        return np.array([manifold.circumference])
    if isinstance(manifold, Torus2):
        return manifold.periods
    raise UnsupportedManifold(f"winding numbers need a circle or torus target, got {manifold.tag}")


def _unpack(spline_or_manifold, nodal=None):
    if nodal is None:
        return spline_or_manifold.manifold, np.asarray(spline_or_manifold.nodal, dtype=float)
    return spline_or_manifold, np.asarray(nodal, dtype=float)


def winding_displacement(spline, nodal=None) -> np.ndarray:
    """Total signed displacement of the nodal values, in units of the period.

    Accepts a fitted spline, or a manifold together with nodal values.

    Raises
    ------
    AmbiguousIncrement
        Some adjacent pair sits at distance ``>= L/2 - 1e-9`` in a coordinate,
        so its shortest representative is not unique.
    """
    manifold, f = _unpack(spline, nodal)
    periods = _periods(manifold)
    f = f.reshape(len(f), len(periods))
    if len(f) < 2:
        return np.zeros(len(periods))
    inc = _signed_rep(f[1:] - f[:-1], periods)
    close = np.abs(inc) >= 0.5 * periods - AMBIGUITY_SLACK
    if np.any(close):
        i = int(np.argmax(close.any(axis=1)))
        raise AmbiguousIncrement(f"nodal values {i} and {i + 1} are (nearly) antipodal")
    return inc.sum(axis=0) / periods


def winding_number(spline, nodal=None) -> WindingEstimate:
    """Winding class of a circle- or torus-valued fit.

    Examples
    --------
    >>> from hmreg.manifolds import Circle
    >>> t = np.linspace(0, 1, 100)
    >>> winding_number(Circle(), (2 * np.pi * 2 * t % (2 * np.pi))[:, None]).cls.winding
    (2,)
    """
    raw = winding_displacement(spline, nodal)
    k = np.rint(raw)
    cls = HomotopyClass(tuple(k)) if np.all(np.abs(raw - k) <= ROUNDING_GUARD) else None
    return WindingEstimate(raw, cls)


def discrete_dirichlet(spline, knots=None, nodal=None) -> float:
    """Dirichlet energy ``(1/2) sum d^2(f_i, f_{i+1}) / Delta_i`` of a geodesic spline.

    Accepts a fitted spline, or ``(manifold, knots, nodal)``.
    """
    if knots is None:
        manifold, knots, f = spline.manifold, spline.knots, spline.nodal
    else:
        manifold, f = spline, nodal
    knots = np.asarray(knots, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(knots) < 2:
        return 0.0
    d = manifold.dist(f[:-1], f[1:])
    return float(0.5 * np.sum(d**2 / np.diff(knots)))


def _closing_gap(knots, domain_length):
    gap = domain_length - (knots[-1] - knots[0])
    if gap < 0:
        raise ValueError("knots span more than the domain length")
    return gap


def closed_winding_number(spline, domain_length: float = 1.0) -> WindingEstimate:
    """Degree of the fit read as a loop on a periodic domain of length ``domain_length``.

    The chain of nodal values is closed by the shortest step from the last
    value back to the first, so the total displacement is an exact multiple
    of the period.

    Raises
    ------
    AmbiguousIncrement
        Some step, the closing one included, is (nearly) antipodal.
    """
    manifold, f = spline.manifold, np.asarray(spline.nodal, dtype=float)
    _closing_gap(spline.knots, domain_length)
    loop = np.concatenate([f, f[:1]])
    raw = winding_displacement(manifold, loop)
    k = np.rint(raw)
    return WindingEstimate(raw, HomotopyClass(tuple(k)))


def closed_dirichlet(spline, domain_length: float = 1.0) -> float:
    """Dirichlet energy of the closed loop: the open chain plus the wrap-around edge.

    The closing edge spans the rest of the periodic domain,
    ``domain_length - (t_m - t_1)``. A zero gap with distinct end values gives
    ``inf``.
    """
    gap = _closing_gap(spline.knots, domain_length)
    M, f = spline.manifold, np.asarray(spline.nodal, dtype=float)
    d = float(M.dist(f[-1], f[0]))
    if gap == 0:
        close = 0.0 if d == 0 else math.inf
    else:
        close = 0.5 * d * d / gap
    return discrete_dirichlet(spline) + close


def energy_barrier(manifold: Manifold, cls: HomotopyClass, domain_length: float = 1.0) -> float:
    """Minimum Dirichlet energy ``l^2 / (2L)`` of a curve in a homotopy class.

    ``l`` is the length of the shortest closed geodesic in the class: the
    circumference times ``|k|`` on a circle, the lattice norm
    ``|(k1 L1, k2 L2)|`` on a flat torus.
    """
    if not domain_length > 0:
        raise ValueError("domain length must be positive")
    if cls.is_trivial:
        return 0.0
    periods = _periods(manifold)
    if len(cls.winding) != len(periods):
        raise ValueError(f"class {cls.winding} does not match {manifold.tag}")
    length = math.hypot(*(k * p for k, p in zip(cls.winding, periods)))
    return length**2 / (2.0 * domain_length)


def recovery_indicator(spline, true_class: HomotopyClass) -> bool:
    """True when the fit has an unambiguous class equal to ``true_class``."""
    try:
        est = winding_number(spline)
    except AmbiguousIncrement:
        return False
    return est.cls is not None and est.cls == true_class
