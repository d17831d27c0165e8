import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from heatkern import geometry as geo
from heatkern.errors import CutPairError, ResolutionTooSmall

from conftest import random_points

MODELS = [geo.ManifoldModel.circle(1.3), geo.ManifoldModel.torus(1.0, 2.0), geo.ManifoldModel.sphere(0.8)]


def jacobi_theta(r, radius=1.0):
    """Theta from the Jacobi field J'' + K J = 0, J(0) = 0, J'(0) = 1, as J(r)/r."""
    K = 1.0 / radius**2
    sol = solve_ivp(lambda s, y: [y[1], -K * y[0]], (0.0, r), [0.0, 1.0], rtol=1e-12, atol=1e-14)
    return sol.y[0, -1] / r


@pytest.mark.parametrize("x,y,expected", [(0.0, math.pi, math.pi), (0.0, 1.5 * math.pi, math.pi / 2)])
def test_circle_distance_examples(circle, x, y, expected):
    assert geo.distance(circle, x, y) == pytest.approx(expected, abs=1e-14)


def test_sphere_quarter_circle(sphere):
    d = geo.distance(sphere, [math.pi / 2, 0.0], [math.pi / 2, math.pi / 2])
    assert d == pytest.approx(math.pi / 2, abs=1e-14)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind)
def test_metric_axioms_on_random_triples(model):
    rng = np.random.default_rng(11)
    x, y, z = (random_points(model, 1000, rng) for _ in range(3))
    dxy, dyx = geo.distance(model, x, y), geo.distance(model, y, x)
    assert np.max(np.abs(dxy - dyx)) <= 1e-12
    assert np.all(dxy <= geo.distance(model, x, z) + geo.distance(model, z, y) + 1e-12)
    assert np.all(dxy <= geo.model_constants(model)["diam"] + 1e-12)
    assert np.all(dxy >= 0)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind)
def test_geodesic_midpoints(model):
    rng = np.random.default_rng(5)
    for x, y in zip(random_points(model, 100, rng), random_points(model, 100, rng)):
        geos = geo.minimizing_geodesics(model, x, y)
        if isinstance(geos, geo.GeodesicFamily):
            geos = [geos.member(0.3)]
        d = geo.distance(model, x, y)
        for g in geos:
            mid = g(0.5)
            assert geo.distance(model, x, mid) == pytest.approx(d / 2, abs=1e-10)
            assert geo.distance(model, mid, y) == pytest.approx(d / 2, abs=1e-10)
            assert g.length == pytest.approx(d, abs=1e-12)
            assert geo.points_equal(model, g(0.0), x, 1e-12)
            assert geo.points_equal(model, g(1.0), y, 1e-12)


def test_geodesic_counts(circle, sphere, torus):
    assert len(geo.minimizing_geodesics(circle, 0.0, math.pi / 2)) == 1
    pair = geo.minimizing_geodesics(circle, 0.0, math.pi)
    assert len(pair) == 2 and all(g.length == pytest.approx(math.pi) for g in pair)
    fam = geo.minimizing_geodesics(sphere, [0.0, 0.0], [math.pi, 0.0])
    assert isinstance(fam, geo.GeodesicFamily) and fam.dim == 1
    assert fam.length == pytest.approx(math.pi)
    assert len(geo.minimizing_geodesics(torus, [0.0, 0.0], [0.5, 1.0])) == 4
    assert len(geo.minimizing_geodesics(torus, [0.0, 0.0], [0.5, 0.3])) == 2
    const = geo.minimizing_geodesics(sphere, [0.4, 1.0], [0.4, 1.0])
    assert len(const) == 1 and const[0].length == 0.0


def test_antipodal_family_members_reach_the_antipode(sphere):
    x = np.array([1.0, 2.0])
    y = geo.antipode(sphere, x)
    fam = geo.minimizing_geodesics(sphere, x, y)
    for alpha in np.linspace(0, 2 * math.pi, 7):
        g = fam.member(alpha)
        assert geo.points_equal(sphere, g(1.0), y, 1e-12)
        assert geo.distance(sphere, x, g(0.25)) == pytest.approx(math.pi / 4, abs=1e-12)


def test_van_vleck_examples(sphere, torus):
    assert geo.van_vleck_theta(torus, [0.1, 0.2], [0.3, 0.9]) == 1.0
    theta = geo.van_vleck_theta(sphere, [math.pi / 2, 0.0], [math.pi / 2, math.pi / 2])
    assert theta == pytest.approx(jacobi_theta(math.pi / 2), rel=1e-10)
    assert theta == pytest.approx(0.636619772, rel=1e-9)
    assert geo.van_vleck_theta(sphere, [0.3, 0.3], [0.3, 0.3]) == pytest.approx(1.0)


def test_van_vleck_matches_jacobi_oracle():
    model = geo.ManifoldModel.sphere(1.7)
    rng = np.random.default_rng(3)
    x, y = random_points(model, 100, rng), random_points(model, 100, rng)
    keep = ~geo.is_cut_pair(model, x, y)
    for a, b in zip(x[keep], y[keep]):
        r = float(geo.distance(model, a, b))
        if r < 1e-8:
            continue
        assert geo.van_vleck_theta(model, a, b) == pytest.approx(jacobi_theta(r, 1.7), rel=1e-8)


def test_van_vleck_refuses_cut_pairs(sphere, circle):
    with pytest.raises(CutPairError):
        geo.van_vleck_theta(sphere, [0.0, 0.0], [math.pi, 0.0])
    with pytest.raises(CutPairError):
        geo.van_vleck_theta(circle, 0.0, math.pi)


def test_grid_examples(circle, sphere):
    g = geo.build_grid(circle, 8)
    assert g.size == 8 and np.allclose(g.weights, math.pi / 4)
    s = geo.build_grid(sphere, (16, 32))
    assert s.size == 512
    assert s.weights.sum() == pytest.approx(4 * math.pi, rel=1e-10)
    t = geo.build_grid(geo.ManifoldModel.torus(1, 2), (10, 10))
    assert t.size == 100 and np.allclose(t.weights, 0.02) and t.weights.sum() == pytest.approx(2)
    with pytest.raises(ResolutionTooSmall):
        geo.build_grid(circle, 3)


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(["circle", "torus", "sphere"]), n=st.integers(4, 40),
       scale=st.floats(0.3, 3.0))
def test_grid_weights_sum_to_volume(kind, n, scale):
    model = {"circle": geo.ManifoldModel.circle(scale), "torus": geo.ManifoldModel.torus(scale, 2 * scale),
             "sphere": geo.ManifoldModel.sphere(scale)}[kind]
    g = geo.build_grid(model, n)
    assert np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(geo.model_constants(model)["vol"], rel=1e-10)


def test_model_constants():
    c = geo.model_constants(geo.ManifoldModel.circle(1))
    assert (c["dim"], c["inj"], c["diam"], c["vol"]) == pytest.approx((1, math.pi, math.pi, 2 * math.pi))
    c = geo.model_constants(geo.ManifoldModel.sphere(2))
    assert (c["dim"], c["inj"], c["diam"], c["vol"]) == pytest.approx((2, 2 * math.pi, 2 * math.pi, 16 * math.pi))
    c = geo.model_constants(geo.ManifoldModel.torus(1, 1))
    assert (c["dim"], c["inj"], c["diam"], c["vol"]) == pytest.approx((2, 0.5, math.sqrt(2) / 2, 1))


def test_parse_and_invalid_models():
    assert geo.ManifoldModel.parse("torus:1,2").lengths == (1.0, 2.0)
    assert geo.ManifoldModel.parse("sphere:2").radius == 2.0
    with pytest.raises(ValueError):
        geo.ManifoldModel.parse("cube:1")
    with pytest.raises(ValueError):
        geo.ManifoldModel.circle(-1.0)


@settings(max_examples=50, deadline=None)
@given(th=st.floats(0, math.pi), ph=st.floats(-10, 10), r=st.floats(0, 3.0), a=st.floats(0, 6.3))
def test_exp_point_distance(th, ph, r, a):
    model = geo.ManifoldModel.sphere(1.0)
    y = geo.exp_point(model, [th, ph], r, a)
    assert geo.distance(model, [th, ph], y) == pytest.approx(r, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(th=st.floats(0, math.pi), ph=st.floats(-20, 20))
def test_normalize_is_idempotent(th, ph):
    model = geo.ManifoldModel.sphere(1.0)
    p = geo.normalize(model, [th, ph])
    assert 0 <= p[0] <= math.pi and 0 <= p[1] < 2 * math.pi
    assert geo.points_equal(model, p, geo.normalize(model, p))
