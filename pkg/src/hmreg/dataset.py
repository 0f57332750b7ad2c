"""Sorted design points paired with manifold-valued responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifolds import Manifold

MIN_GAP = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Observations ``(t_i, Y_i)`` grouped into strictly increasing knots.

    Observations whose design points coincide (gap below ``1e-12``) share a
    knot; the fidelity term then sums over all of them.

    Attributes
    ----------
    manifold : Manifold
    knots : ndarray, shape (m,)
        Strictly increasing knot locations.
    points : ndarray, shape (n, D)
        Responses, ordered by design point.
    knot_index : ndarray of int, shape (n,)
        Knot that each response belongs to.
    obs_t : ndarray, shape (n,)
        Original (sorted) design point of each response.
    """

    manifold: Manifold
    knots: np.ndarray
    points: np.ndarray
    knot_index: np.ndarray
    obs_t: np.ndarray

    @classmethod
    def from_observations(cls, manifold: Manifold, t, y) -> "Dataset":
        t = np.asarray(t, dtype=float).ravel()
        y = np.asarray(y, dtype=float).reshape(len(t), -1)
        if len(t) == 0:
            raise ValueError("dataset must contain at least one observation")
        if y.shape[1] != manifold.ambient_dim:
            raise ValueError(f"responses have {y.shape[1]} coordinates, manifold needs {manifold.ambient_dim}")
        if not np.all(np.isfinite(t)):
            raise ValueError("design points must be finite")
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        new_knot = np.ones(len(t), dtype=bool)
        new_knot[1:] = np.diff(t) >= MIN_GAP
        knot_index = np.cumsum(new_knot) - 1
        knots = t[new_knot]
        return cls(manifold, knots, y, knot_index, t)

    @property
    def n_total(self) -> int:
        return len(self.points)

    @property
    def n_knots(self) -> int:
        return len(self.knots)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def multiplicity(self) -> np.ndarray:
        return np.bincount(self.knot_index, minlength=self.n_knots)

    def knot_groups(self):
        """Yield ``(knot, responses)`` pairs in knot order."""
        bounds = np.searchsorted(self.knot_index, np.arange(self.n_knots + 1))
        for i in range(self.n_knots):
            yield self.knots[i], self.points[bounds[i]:bounds[i + 1]]

    def subset(self, indices) -> "Dataset":
        """Dataset built from the observations at ``indices`` (sorted order)."""
        indices = np.asarray(indices)
        return Dataset.from_observations(self.manifold, self.obs_t[indices], self.points[indices])
