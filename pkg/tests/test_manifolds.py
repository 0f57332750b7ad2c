import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import ALL_MANIFOLDS, ids, local_pair
from hmreg.errors import CutLocus, DomainError
from hmreg.manifolds import (SO3, SPD2, Circle, Euclidean, Hyperbolic2, Sphere, Torus2, curvature_factor,
                             format_point, manifold_from_tag, parse_point)
from oracles import curvature_factor_series


@pytest.mark.parametrize("M", ALL_MANIFOLDS, ids=ids(ALL_MANIFOLDS))
class TestGeometry:
    def test_points_valid(self, M, rng):
        p = M.random_point(rng, 200)
        assert all(M.check_point(x) for x in p)

    def test_exp_log_round_trip(self, M, rng):
        p, v = local_pair(M, rng, 1000)
        q = M.exp(p, v)
        assert all(M.check_point(x, 1e-9) for x in q)
        np.testing.assert_allclose(M.log(p, q), v, atol=1e-8)
        np.testing.assert_allclose(M.dist(p, q), M.norm(p, v), atol=1e-8)

    def test_distance_symmetric_and_triangle(self, M, rng):
        p, q, r = (M.random_point(rng, 1000) for _ in range(3))
        dpq = M.dist(p, q)
        np.testing.assert_allclose(dpq, M.dist(q, p), atol=1e-10)
        assert np.all(M.dist(p, r) <= dpq + M.dist(q, r) + 1e-10)
        np.testing.assert_allclose(M.dist(p, p), 0.0, atol=1e-7)

    def test_tangent_basis_orthonormal(self, M, rng):
        p = M.random_point(rng, 1000)
        B = M.tangent_basis(p)
        assert B.shape == (1000, M.dim, M.ambient_dim)
        gram = M.inner(p[:, None, None, :], B[:, :, None, :], B[:, None, :, :])
        np.testing.assert_allclose(gram, np.broadcast_to(np.eye(M.dim), gram.shape), atol=1e-10)
        np.testing.assert_allclose(M.tangent_project(p[:, None, :], B), B, atol=1e-10)

    def test_projection_idempotent(self, M, rng):
        p = M.random_point(rng, 1000)
        x = p + 0.05 * rng.standard_normal(p.shape)
        once = M.project(x)
        np.testing.assert_allclose(M.project(once), once, atol=1e-10)
        np.testing.assert_allclose(M.tangent_project(p, M.tangent_project(p, x)), M.tangent_project(p, x), atol=1e-10)
        # the extrinsic embedding inverts on the manifold
        back = M.from_ambient(M.to_ambient(p))
        np.testing.assert_allclose(M.dist(back, p), 0.0, atol=1e-7)

    def test_transport_isometry_and_velocity(self, M, rng):
        p, v = local_pair(M, rng, 300)
        q = M.exp(p, v)
        u = M.random_tangent(rng, p)
        w = M.random_tangent(rng, p)
        tu, tw = M.transport(p, q, u), M.transport(p, q, w)
        np.testing.assert_allclose(M.inner(q, tu, tw), M.inner(p, u, w), atol=1e-10)
        np.testing.assert_allclose(M.transport(p, q, M.log(p, q)), -M.log(q, p), atol=1e-9)

    def test_geodesic_midpoint(self, M, rng):
        p, v = local_pair(M, rng, 200)
        q = M.exp(p, v)
        mid = M.geodesic(p, q, 0.5)
        np.testing.assert_allclose(M.dist(p, mid), 0.5 * M.dist(p, q), atol=1e-9)
        np.testing.assert_allclose(M.dist(mid, q), 0.5 * M.dist(p, q), atol=1e-9)

    def test_tag_round_trip(self, M):
        assert manifold_from_tag(M.tag) == M


def test_transport_matches_stepwise_projection():
    # fine-step projection transport converges to parallel transport at rate O(1/N)
    rng = np.random.Generator(np.random.Philox(3))
    for M in (Sphere(), Hyperbolic2(), SO3()):
        p, v = local_pair(M, rng, None, 0.4)
        u = M.random_tangent(rng, p)
        q = M.exp(p, v)
        w = u.copy()
        N = 4000
        for s in range(1, N + 1):
            w = M.tangent_project(M.geodesic(p, q, s / N), w)
        w *= M.norm(p, u) / M.norm(q, w)
        np.testing.assert_allclose(M.transport(p, q, u), w, atol=5e-3)


def test_spd_transport_composes_along_geodesic(rng):
    M = SPD2()
    p, v = local_pair(M, rng, None)
    q = M.exp(p, v)
    m = M.geodesic(p, q, 0.3)
    u = M.random_tangent(rng, p)
    np.testing.assert_allclose(M.transport(m, q, M.transport(p, m, u)), M.transport(p, q, u), atol=1e-12)


def test_sphere_antipodal_log_raises():
    S = Sphere()
    with pytest.raises(CutLocus):
        S.log(np.array([0, 0, 1.0]), np.array([0, 0, -1.0]))


def test_circle_wraps_intrinsically():
    C = Circle()
    a, b = np.radians([350.0]), np.radians([10.0])
    assert C.dist(a, b) == pytest.approx(math.radians(20.0), abs=1e-12)
    assert C.log(a, b)[0] == pytest.approx(math.radians(20.0), abs=1e-12)


def test_sphere_radius_scales_distance():
    S = Sphere(2.0)
    p, q = np.array([0, 0, 2.0]), np.array([2.0, 0, 0])
    assert S.dist(p, q) == pytest.approx(math.pi, abs=1e-12)
    assert S.kappa_plus == pytest.approx(0.25)


def test_so3_geometry_constants():
    M = SO3()
    # metric <U, V> = tr(U^T V) / 4: rotations by angle a sit at distance a / sqrt(2)
    assert M.kappa_plus == pytest.approx(0.5)
    assert M.inj_radius == pytest.approx(math.pi / math.sqrt(2))
    Rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]]).ravel()
    assert M.dist(np.eye(3).ravel(), Rz) == pytest.approx((math.pi / 2) / math.sqrt(2), abs=1e-12)


def test_hyperbolic_distance_closed_form():
    H = Hyperbolic2()
    p = np.array([0.0, 0.0, 1.0])
    r = 1.7
    q = np.array([math.sinh(r), 0.0, math.cosh(r)])
    assert H.dist(p, q) == pytest.approx(r, abs=1e-12)


def test_spd_distance_closed_form():
    M = SPD2()
    p = np.eye(2).ravel()
    q = np.diag([math.e, math.e**2]).ravel()
    assert M.dist(p, q) == pytest.approx(math.sqrt(5.0), abs=1e-12)


def test_torus_distance_componentwise():
    T = Torus2()
    p = np.array([0.1, 6.2])
    q = np.array([6.2, 0.1])
    d = math.hypot(0.1 + 2 * math.pi - 6.2, 0.1 + 2 * math.pi - 6.2)
    assert T.dist(p, q) == pytest.approx(d, abs=1e-12)


def test_euclidean_is_flat():
    E = Euclidean(3)
    p, q = np.zeros(3), np.array([1.0, 2.0, 2.0])
    assert E.dist(p, q) == pytest.approx(3.0)
    assert E.kappa_plus == 0.0


@pytest.mark.parametrize("tag", ["sphere:r=1.0", "circle", "h2", "spd2", "so3", "torus2", "euclid:d=2"])
def test_tags_parse(tag):
    assert manifold_from_tag(tag).tag.startswith(tag.split(":")[0])


@pytest.mark.parametrize("tag", ["klein", "sphere:q=1", "euclid:d=x"])
def test_bad_tags_rejected(tag):
    with pytest.raises(ValueError):
        manifold_from_tag(tag)


def test_point_text_round_trip(rng):
    M = SPD2()
    p = M.random_point(rng)
    np.testing.assert_array_equal(parse_point(format_point(p), M), p)
    with pytest.raises(ValueError):
        parse_point("1,2", M)


class TestCurvatureFactor:
    def test_flat_is_one(self):
        assert curvature_factor(0.0, 0.7) == 1.0
        assert curvature_factor(-1.0, 5.0) == 1.0
        assert curvature_factor(1.0, 0.0) == 1.0

    def test_unit_sphere_value(self):
        # oracle: power series of x cot x, independent of the tan-based formula
        assert curvature_factor(1.0, 0.1) == pytest.approx(curvature_factor_series(1.0, 0.1), abs=1e-12)
        assert curvature_factor(1.0, 0.1) == pytest.approx(0.99666444232592, abs=1e-12)

    @given(st.floats(0.01, 10.0), st.floats(0.0, 1.0))
    def test_small_radius_expansion(self, kappa, frac):
        r = math.sqrt(0.1 * frac / kappa)
        eta = curvature_factor(kappa, r)
        assert abs(eta - (1 - kappa * r * r / 3)) <= kappa**2 * r**4 + 1e-15
        assert 0 < eta <= 1

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            curvature_factor(1.0, math.pi / 2)
        with pytest.raises((DomainError, ValueError)):
            curvature_factor(1.0, -0.1)


@given(st.integers(0, 2**32 - 1))
def test_sphere_exp_log_property(seed):
    M = Sphere()
    rng = np.random.Generator(np.random.Philox(seed))
    p, v = local_pair(M, rng, 5, 0.9)
    np.testing.assert_allclose(M.log(p, M.exp(p, v)), v, atol=1e-8)


@given(st.integers(0, 2**32 - 1), st.sampled_from([Hyperbolic2(), SPD2(), SO3(), Torus2()]))
def test_log_antisymmetric_under_transport(seed, M):
    rng = np.random.Generator(np.random.Philox(seed))
    p, v = local_pair(M, rng, 3)
    q = M.exp(p, v)
    np.testing.assert_allclose(M.norm(q, M.log(q, p)), M.norm(p, v), atol=1e-8)
