"""Penalized geodesic-spline regression for manifold-valued responses."""

from .dataset import Dataset
from .errors import HMRegError
from .manifolds import SO3, SPD2, Circle, Euclidean, Hyperbolic2, Sphere, Torus2, manifold_from_tag
from .spline import FitConfig, FitReport, GeodesicSpline, evaluate, fit, jump_residual

__version__ = "0.1.0"

__all__ = [
    "Dataset", "HMRegError", "Circle", "Euclidean", "Hyperbolic2", "SO3", "SPD2", "Sphere", "Torus2",
    "manifold_from_tag", "FitConfig", "FitReport", "GeodesicSpline", "evaluate", "fit", "jump_residual",
    "__version__",
]
