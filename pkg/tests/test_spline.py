import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import ALL_MANIFOLDS, CURVED, ids, local_pair, philox
from hmreg.dataset import Dataset
from hmreg.manifolds import Circle, Euclidean, Sphere
from hmreg.spline import (FitConfig, discrete_objective, evaluate, fit, initial_nodal, jump_residual,
                          riemannian_gradient)
from oracles import circle_two_point, euclidean_spline, fd_gradient


def noisy_curve(M, rng, n, spread=0.35, noise=0.15):
    """Responses scattered around a short geodesic, with a couple of tied design points."""
    p, v = local_pair(M, rng, None, spread)
    t = np.sort(rng.uniform(0, 1, n))
    t[1] = t[0]
    base = M.exp(np.broadcast_to(p, (n, len(p))), t[:, None] * v)
    eps = M.random_tangent(rng, base, noise)
    return Dataset.from_observations(M, t, M.exp(base, eps))


class TestDataset:
    def test_ties_merge_into_one_knot(self):
        d = Dataset.from_observations(Circle(), [0.5, 0.0, 0.5 + 1e-13, 1.0], [[1.0], [0.0], [2.0], [3.0]])
        assert d.n_knots == 3
        assert d.multiplicity.tolist() == [1, 2, 1]
        assert d.n_total == 4
        groups = [pts.ravel().tolist() for _, pts in d.knot_groups()]
        assert groups == [[0.0], [1.0, 2.0], [3.0]]

    def test_sorted_and_gaps(self):
        d = Dataset.from_observations(Euclidean(1), [0.3, 0.1, 0.2], [[3.0], [1.0], [2.0]])
        np.testing.assert_allclose(d.knots, [0.1, 0.2, 0.3])
        np.testing.assert_allclose(d.points.ravel(), [1, 2, 3])
        np.testing.assert_allclose(d.gaps, [0.1, 0.1])

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Dataset.from_observations(Sphere(), [0.0], [[1.0, 0.0]])
        with pytest.raises(ValueError):
            Dataset.from_observations(Circle(), [], np.zeros((0, 1)))
        with pytest.raises(ValueError):
            Dataset.from_observations(Circle(), [np.nan], [[0.0]])

    def test_subset(self):
        d = Dataset.from_observations(Euclidean(1), [0.0, 0.5, 1.0], [[0.0], [1.0], [2.0]])
        s = d.subset([0, 2])
        np.testing.assert_allclose(s.knots, [0.0, 1.0])


class TestClosedForms:
    @pytest.mark.parametrize("lam", [0.05, 0.25, 1.0, 4.0])
    def test_circle_two_point(self, lam):
        d = Dataset.from_observations(Circle(), [0.0, 1.0], [[0.0], [1.0]])
        spline, rep = fit(d, lam)
        assert rep.converged
        np.testing.assert_allclose(spline.nodal.ravel(), circle_two_point(lam), atol=1e-8)

    def test_circle_two_point_quarter(self):
        d = Dataset.from_observations(Circle(), [0.0, 1.0], [[0.0], [1.0]])
        spline, _ = fit(d, 0.25)
        np.testing.assert_allclose(spline.nodal.ravel(), [0.25, 0.75], atol=1e-8)

    def test_euclidean_matches_dense_solve(self):
        rng = philox(7)
        for _ in range(10):
            n = int(rng.integers(5, 120))
            t = np.round(rng.uniform(0, 1, n), 2)
            y = np.sin(4 * t) + 0.3 * rng.standard_normal(n)
            lam = float(10 ** rng.uniform(-4, 0))
            knots, ref = euclidean_spline(t, y, lam)
            spline, rep = fit(Dataset.from_observations(Euclidean(1), t, y[:, None]), lam)
            assert rep.converged
            np.testing.assert_allclose(spline.knots, knots)
            assert np.max(np.abs(spline.nodal.ravel() - ref)) < 1e-6

    def test_single_knot_is_frechet_mean(self):
        d = Dataset.from_observations(Circle(), [0.5, 0.5, 0.5], [[0.1], [0.3], [0.5]])
        spline, rep = fit(d, 1.0)
        assert rep.reason == "single knot"
        assert spline.nodal[0, 0] == pytest.approx(0.3, abs=1e-9)

    def test_lambda_must_be_positive(self):
        d = Dataset.from_observations(Circle(), [0.0, 1.0], [[0.0], [1.0]])
        with pytest.raises(ValueError):
            fit(d, 0.0)


@pytest.mark.parametrize("M", ALL_MANIFOLDS, ids=ids(ALL_MANIFOLDS))
def test_gradient_matches_finite_differences(M):
    rng = philox(11)
    data = noisy_curve(M, rng, 8)
    F = initial_nodal(data)
    F = M.exp(F, M.random_tangent(rng, F, 0.05))
    lam = 0.02
    G = riemannian_gradient(data, F, lam)
    ref = fd_gradient(M, lambda X: discrete_objective(data, X, lam), F)
    assert np.linalg.norm(G - ref) <= 1e-5 * np.linalg.norm(ref)


@pytest.mark.parametrize("M", CURVED + [Circle()], ids=ids(CURVED + [Circle()]))
def test_fit_converges_and_decreases(M):
    data = noisy_curve(M, philox(5), 60)
    spline, rep = fit(data, 0.01)
    assert rep.converged and rep.reason == "grad_tol"
    assert rep.grad_norm <= 1e-8
    assert np.all(np.diff(rep.trace) <= 1e-14 * max(abs(rep.trace[0]), 1))
    assert rep.objective <= discrete_objective(data, initial_nodal(data), 0.01)


@given(st.integers(0, 2**32 - 1), st.sampled_from(ALL_MANIFOLDS), st.floats(1e-3, 1.0))
def test_jump_identity_at_convergence(seed, M, lam):
    data = noisy_curve(M, philox(seed), 25)
    cfg = FitConfig()
    spline, rep = fit(data, lam, cfg)
    if rep.converged:
        assert np.all(jump_residual(spline, data, lam) <= cfg.grad_tol / (2 * lam) * (1 + 1e-9))


def test_jump_residual_is_gradient_over_two_lambda():
    M = Sphere()
    data = noisy_curve(M, philox(2), 20)
    F = initial_nodal(data)
    lam = 0.3
    spline = fit(data, lam, FitConfig(max_iters=1))[0]
    G = riemannian_gradient(data, spline.nodal, lam)
    np.testing.assert_allclose(jump_residual(spline, data, lam), M.norm(spline.nodal, G)[1:-1] / (2 * lam),
                               rtol=1e-10, atol=1e-14)
    assert F.shape == spline.nodal.shape


class TestEvaluate:
    def test_hits_knots_and_is_constant_outside(self):
        M = Sphere()
        data = noisy_curve(M, philox(4), 10)
        spline, _ = fit(data, 0.1)
        np.testing.assert_allclose(evaluate(spline, spline.knots), spline.nodal)
        np.testing.assert_allclose(evaluate(spline, -1.0), spline.nodal[0])
        np.testing.assert_allclose(evaluate(spline, 2.0), spline.nodal[-1])

    def test_constant_speed_between_knots(self):
        M = Sphere()
        data = noisy_curve(M, philox(9), 6)
        spline, _ = fit(data, 0.1)
        a, b = spline.knots[2], spline.knots[3]
        s = np.linspace(a, b, 5)
        pts = evaluate(spline, s)
        steps = M.dist(pts[:-1], pts[1:])
        np.testing.assert_allclose(steps, steps[0], atol=1e-10)
        assert steps.sum() == pytest.approx(M.dist(spline.nodal[2], spline.nodal[3]), abs=1e-10)

    def test_circle_wraps_between_knots(self):
        d = Dataset.from_observations(Circle(), [0.0, 1.0], [[6.2], [0.1]])
        spline, _ = fit(d, 1e-6)
        mid = evaluate(spline, 0.5)[0]
        assert min(mid, 2 * np.pi - mid) < 0.2


def test_fit_deterministic():
    data = noisy_curve(Sphere(), philox(1), 40)
    a, _ = fit(data, 0.05)
    b, _ = fit(data, 0.05)
    np.testing.assert_array_equal(a.nodal, b.nodal)


def test_large_lambda_approaches_frechet_mean():
    from hmreg.baselines import frechet_mean

    M = Sphere()
    data = noisy_curve(M, philox(8), 30)
    spline, _ = fit(data, 1e5)
    mean = frechet_mean(M, data.points)
    assert np.max(M.dist(spline.nodal, mean)) < 1e-3
