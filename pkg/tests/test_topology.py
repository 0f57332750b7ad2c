import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmreg.dataset import Dataset
from hmreg.errors import AmbiguousIncrement, UnsupportedManifold
from hmreg.manifolds import Circle, Sphere, Torus2
from hmreg.spline import fit
from hmreg.topology import (HomotopyClass, discrete_dirichlet, energy_barrier, recovery_indicator,
                            winding_displacement, winding_number)

TWO_PI = 2 * math.pi


def wound(k, m=100, L=TWO_PI):
    t = np.linspace(0, 1, m)
    return t, (L * k * t % L)[:, None]


@pytest.mark.parametrize("k", [-3, -1, 0, 1, 2, 5])
def test_winding_of_linear_wraps(k):
    t, f = wound(k)
    est = winding_number(Circle(), f)
    assert est.cls == HomotopyClass((k,))
    assert est.raw[0] == pytest.approx(k, abs=1e-9)


def test_torus_half_winding_has_no_class():
    t = np.linspace(0, 1, 200)
    f = np.c_[3 * math.pi * t % TWO_PI, TWO_PI * t % TWO_PI]
    est = winding_number(Torus2(), f)
    np.testing.assert_allclose(est.raw, [1.5, 1.0], atol=1e-9)
    assert est.cls is None and not est.has_class


def test_antipodal_increment_is_ambiguous():
    with pytest.raises(AmbiguousIncrement):
        winding_displacement(Circle(), np.array([[0.0], [math.pi]]))


def test_non_periodic_target_rejected():
    with pytest.raises(UnsupportedManifold):
        winding_number(Sphere(), np.zeros((3, 3)))


def test_dirichlet_of_uniform_wrap_equals_barrier():
    # a uniform k-fold wrap is the energy minimizer in its class: Dir = (2 pi k)^2 / 2
    for k in (1, 2, 3):
        t, f = wound(k, 400)
        assert discrete_dirichlet(Circle(), t, f) == pytest.approx(energy_barrier(Circle(), HomotopyClass((k,))), rel=1e-9)
        assert energy_barrier(Circle(), HomotopyClass((k,))) == pytest.approx(2 * math.pi**2 * k**2)


def test_torus_barrier_uses_lattice_length():
    T = Torus2(1.0, 2.0)
    assert energy_barrier(T, HomotopyClass((1, 1))) == pytest.approx((1 + 4) / 2)
    assert energy_barrier(T, HomotopyClass((0, 0))) == 0.0
    with pytest.raises(ValueError):
        energy_barrier(T, HomotopyClass((1,)))


@given(st.integers(-4, 4), st.floats(0.3, 3.0), st.integers(2, 40))
def test_barrier_lower_bounds_any_discrete_curve(k, L, m):
    # Cauchy-Schwarz: sum d^2/gap >= (sum d)^2 / sum gap, and sum d >= |k| L
    rng = np.random.Generator(np.random.Philox(m))
    t = np.sort(np.r_[0.0, rng.uniform(0, 1, m), 1.0])
    inc = np.diff(L * k * t) + rng.normal(0, 0.01, len(t) - 1)
    f = (np.r_[0.0, np.cumsum(inc)] % L)[:, None]
    C = Circle(L)
    try:
        est = winding_number(C, f)
    except AmbiguousIncrement:
        return
    if est.cls is not None and abs(est.raw[0] - round(est.raw[0])) < 1e-12:
        assert discrete_dirichlet(C, t, f) >= energy_barrier(C, est.cls) - 1e-9


def test_recovery_indicator_on_fit():
    t = np.linspace(0, 1, 200)
    rng = np.random.Generator(np.random.Philox(0))
    y = (TWO_PI * t + 0.1 * rng.standard_normal(200)) % TWO_PI
    data = Dataset.from_observations(Circle(), t, y[:, None])
    spline, _ = fit(data, 1e-3)
    assert recovery_indicator(spline, HomotopyClass((1,)))
    assert not recovery_indicator(spline, HomotopyClass((0,)))
    flat, _ = fit(data, 1e3)
    assert recovery_indicator(flat, HomotopyClass((0,)))


def test_homotopy_class_int():
    assert int(HomotopyClass((3,))) == 3
    with pytest.raises(TypeError):
        int(HomotopyClass((1, 2)))
    assert HomotopyClass((0, 0)).is_trivial


def test_closed_loop_degree_and_energy():
    from hmreg.spline import GeodesicSpline
    from hmreg.topology import closed_dirichlet, closed_winding_number

    # 0.9 of a turn over [0.05, 0.95]; the closing edge adds the last 0.1 turn over gap 0.1
    t = np.linspace(0.05, 0.95, 91)
    f = (TWO_PI * (t - 0.05) % TWO_PI)[:, None]
    sp = GeodesicSpline(Circle(), t, f, 1.0)
    assert winding_number(sp).raw[0] == pytest.approx(0.9, abs=1e-9)
    est = closed_winding_number(sp)
    assert est.cls == HomotopyClass((1,))
    # uniform speed 2 pi around the whole loop: exactly the barrier
    assert closed_dirichlet(sp) == pytest.approx(2 * math.pi**2, rel=1e-9)
    assert discrete_dirichlet(sp) < 2 * math.pi**2


@given(st.integers(0, 2**32 - 1), st.integers(3, 60))
def test_closed_loop_energy_respects_barrier(seed, m):
    from hmreg.spline import GeodesicSpline
    from hmreg.topology import closed_dirichlet, closed_winding_number

    rng = np.random.Generator(np.random.Philox(seed))
    t = np.sort(rng.uniform(0, 1, m))
    if np.any(np.diff(t) <= 0):
        return
    f = rng.uniform(0, TWO_PI, (m, 1))
    sp = GeodesicSpline(Circle(), t, f, 1.0)
    try:
        k = closed_winding_number(sp).cls
    except AmbiguousIncrement:
        return
    assert closed_dirichlet(sp) >= energy_barrier(Circle(), k) - 1e-9
