"""Shared manifold lists and sampling helpers for the tests."""

import numpy as np

from hmreg.manifolds import SO3, SPD2, Circle, Euclidean, Hyperbolic2, Sphere, Torus2

ALL_MANIFOLDS = [Sphere(), Circle(), Hyperbolic2(), SPD2(), SO3(), Torus2(), Euclidean(2)]
CURVED = [Sphere(), Hyperbolic2(), SPD2(), SO3()]


def ids(ms):
    return [m.tag.split(":")[0] for m in ms]


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def local_pair(M, rng, size, frac=0.45):
    """Points ``p`` and tangent vectors of length below ``frac * min(inj, 3)``."""
    p = M.random_point(rng, size)
    v = M.random_tangent(rng, p)
    reach = frac * min(M.inj_radius, 3.0)
    nv = M.norm(p, v)[..., None]
    scale = rng.uniform(0.0, 1.0, size=nv.shape) * reach / np.maximum(nv, 1e-300)
    return p, v * scale
