import math

import numpy as np
import pytest

from heatkern import convolution as cv
from heatkern import geometry as geo
from heatkern import kernels as K
from heatkern import laplace as L
from heatkern.errors import (CutPairError, DegenerateHessian, DimensionTooLarge, NegativeEigenvalue,
                             PartitionTooCoarse)
from heatkern.kernels import CutoffProfile


def test_gaussian_toy_is_exact():
    spec, gamma = L.gaussian_toy()
    assert L.laplace_leading_term(spec, gamma) == pytest.approx(0.5, rel=1e-8)
    for t in (1e-3, 0.05, 1.0):
        assert L.brute_force_integral(spec, t) == pytest.approx(0.5, abs=1e-12)


def test_valley_leading_term_and_fit():
    spec, gamma = L.valley_toy()
    ok, vmax, gmax = gamma.validate(spec)
    assert ok, (vmax, gmax)
    lead = L.laplace_leading_term(spec, gamma)
    assert lead == pytest.approx(4.442882938, rel=1e-8)
    ts = [1e-3, 2e-3, 4e-3]
    vals = [math.sqrt(4 * math.pi * t) * L.brute_force_integral(spec, t) for t in ts]
    limit, _ = L.fitted_limit(ts, vals)
    assert limit == pytest.approx(lead, rel=1e-2)


def test_amplitude_vanishing_on_critical_set():
    spec, gamma = L.valley_toy(L.ring_bump)
    assert L.laplace_leading_term(spec, gamma) == 0.0
    assert L.decay_rate(spec, [0.01, 0.02, 0.04]) < 0


def test_first_order_exact_gaussian_moment():
    # (4 pi t)^(-1/2) int e^(-x^2/2t) (1 + x^2) dx = (1 + t) / sqrt(2)
    spec = L.IntegrandSpec((-6.0,), (6.0,), lambda x: x[..., 0] ** 2,
                           amplitude=lambda t, x: 1 + x[..., 0] ** 2)
    assert L.first_order_coefficient(spec, [0.0]) == pytest.approx(1 / math.sqrt(2), rel=1e-6)
    for t in (0.01, 0.1):
        assert L.brute_force_integral(spec, t) == pytest.approx((1 + t) / math.sqrt(2), rel=1e-10)


@pytest.mark.parametrize("dim", [1, 2])
def test_first_order_against_brute_force(dim):
    def phase(x):
        r2 = np.sum(x * x, axis=-1)
        return r2 + 0.3 * r2**2 + 0.2 * x[..., 0] ** 3

    spec = L.IntegrandSpec((-1.5,) * dim, (1.5,) * dim, phase,
                           amplitude=lambda t, x: np.cos(x[..., -1]) + 0.5 * x[..., 0])
    ts = [5e-4, 1e-3, 2e-3, 4e-3]
    vals = [L.brute_force_integral(spec, t) for t in ts]
    c0, c1 = L.fitted_limit(ts, vals)
    assert c0 == pytest.approx(2 ** (-dim / 2), rel=1e-6)
    assert L.first_order_coefficient(spec, np.zeros(dim)) == pytest.approx(c1, rel=1e-2)


def test_first_order_rejects_curved_domains():
    spec, _ = L.valley_toy()
    with pytest.raises(NotImplementedError):
        L.first_order_coefficient(spec, [1.0, 0.0])


def test_normal_determinant_cases():
    det, lam = L.normal_determinant(np.diag([8.0, 2.0]), np.diag([4.0, 1.0]), 0)
    assert det == pytest.approx(4.0)
    det, _ = L.normal_determinant(np.diag([0.0, 3.0]), np.eye(2), 1)
    assert det == pytest.approx(3.0)
    with pytest.raises(DegenerateHessian):
        L.normal_determinant(np.diag([0.0, 3.0]), np.eye(2), 0)
    with pytest.raises(DegenerateHessian):
        L.normal_determinant(np.diag([1.0, 3.0]), np.eye(2), 1)
    with pytest.raises(NegativeEigenvalue):
        L.normal_determinant(np.diag([-1.0, 3.0]), np.eye(2), 0)


def test_fd_hessian_on_a_cubic():
    f = lambda x: x[0] ** 3 + 2 * x[0] * x[1] ** 2
    H = L.fd_hessian(f, np.array([0.5, -1.0]), 1e-3)
    assert np.allclose(H, [[3.0, -4.0], [-4.0, 2.0]], atol=1e-8)


def _geodesic_nodes(model, x, y, partition, which=0):
    g = geo.minimizing_geodesics(model, x, y)
    g = g.member(0.7) if isinstance(g, geo.GeodesicFamily) else g[which]
    return np.stack([g(s) for s in partition.nodes[1:-1]])


def test_path_energy_examples(circle, sphere):
    part = cv.Partition.equidistant(1.0, 5)
    dom = L.PathSpaceDomain(circle, [0.0], [1.0], part)
    nodes = _geodesic_nodes(circle, [0.0], [1.0], part)
    assert float(L.path_energy(dom, nodes)) == pytest.approx(0.5, abs=1e-14)
    rng = np.random.default_rng(4)
    for _ in range(10):
        assert float(L.path_energy(dom, nodes + 0.05 * rng.standard_normal(nodes.shape))) > 0.5
    x = np.array([0.6, 1.0])
    sdom = L.PathSpaceDomain(sphere, x, geo.antipode(sphere, x), part)
    snodes = _geodesic_nodes(sphere, x, geo.antipode(sphere, x), part)
    assert float(L.path_energy(sdom, snodes)) == pytest.approx(math.pi**2 / 2, rel=1e-12)


def test_path_energy_refuses_cut_hops(circle):
    dom = L.PathSpaceDomain(circle, [0.0], [0.0], cv.Partition.equidistant(1.0, 2))
    with pytest.raises(CutPairError):
        L.path_energy(dom, np.array([[math.pi]]))


def test_upsilon_examples(circle, sphere, lap, cos_potential):
    N = 6
    part = cv.Partition.equidistant(1.0, N)
    prof = CutoffProfile.default(circle)
    dom = L.PathSpaceDomain(circle, [0.0], [0.5], part)
    nodes = _geodesic_nodes(circle, [0.0], [0.5], part)
    assert float(L.upsilon(dom, 0, prof, 0.3, nodes)) == pytest.approx(N ** (N / 2), rel=1e-12)
    # at t = 0 only Phi_0 survives
    dom2 = L.PathSpaceDomain(circle, [0.2], [1.4], part)
    nodes2 = _geodesic_nodes(circle, [0.2], [1.4], part)
    assert float(L.upsilon(dom2, 2, prof, 0.0, nodes2, cos_potential)) == pytest.approx(N ** (N / 2))
    sp = CutoffProfile.default(sphere)
    x, y = np.array([0.5, 0.5]), np.array([2.0, 1.5])
    sdom = L.PathSpaceDomain(sphere, x, y, part)
    snodes = _geodesic_nodes(sphere, x, y, part)
    hop = float(geo.distance(sphere, x, y)) / N
    expected = (N * K.heat_coefficient(sphere, lap, 0, x, geo.exp_point(sphere, x, hop))) ** N
    assert float(L.upsilon(sdom, 1, sp, 0.0, snodes)) == pytest.approx(expected, rel=1e-10)
    # a hop beyond r1 kills the product
    far = L.PathSpaceDomain(circle, [0.0], [0.0], cv.Partition.equidistant(1.0, 2))
    assert float(L.upsilon(far, 0, prof, 0.1, np.array([[prof.r1 + 0.05]]))) == 0.0
    with pytest.raises(K.OrderUnsupported):
        L.upsilon(sdom, 2, sp, 0.0, snodes)


def test_path_integral_single_step(circle, lap):
    prof = CutoffProfile.default(circle)
    dom = L.PathSpaceDomain(circle, [0.3], [1.1], cv.Partition.equidistant(1.0, 1))
    v = L.path_integral_form(dom, lap, 1, prof, 0.2, geo.build_grid(circle, 8))
    assert v == pytest.approx(K.approximate_kernel(circle, lap, 1, prof, 0.2, 0.3, 1.1), rel=1e-13)


def test_path_integral_two_steps_on_circle(circle, cos_potential):
    grid = geo.build_grid(circle, 64)
    prof = CutoffProfile.default(circle)
    tau = cv.Partition(np.array([0.0, 0.4, 1.0]))
    t = 0.3
    C = cv.convolution_product(circle, cos_potential, 2, prof, cv.Partition(t * tau.nodes), grid).values
    for i, j in ((0, 7), (5, 30)):
        dom = L.PathSpaceDomain(circle, grid.nodes[i], grid.nodes[j], tau)
        v = L.path_integral_form(dom, cos_potential, 2, prof, t, grid)
        assert v == pytest.approx(C[i, j], rel=1e-10)


def test_path_integral_dimension_limit(circle, lap):
    dom = L.PathSpaceDomain(circle, [0.0], [1.0], cv.Partition.equidistant(1.0, 4))
    with pytest.raises(DimensionTooLarge):
        L.path_integral_form(dom, lap, 0, CutoffProfile.default(circle), 0.1, geo.build_grid(circle, 8))


def test_path_space_needs_unit_interval(circle):
    with pytest.raises(ValueError):
        L.PathSpaceDomain(circle, [0.0], [1.0], cv.Partition.equidistant(2.0, 4))


def test_cut_locus_noncut_pairs_recover_phi0(circle, sphere, lap):
    res = L.cut_locus_coefficient(circle, lap, [0.1], [0.8], cv.Partition.equidistant(1.0, 4))
    assert len(res) == 1 and res[0].dim == 0
    assert res[0].coefficient == pytest.approx(1.0, rel=1e-6)
    x, y = np.array([0.7, 0.2]), np.array([2.1, 2.5])
    res = L.cut_locus_coefficient(sphere, lap, x, y, cv.Partition.equidistant(1.0, 4))
    assert res[0].coefficient == pytest.approx(K.heat_coefficient(sphere, lap, 0, x, y), rel=1e-5)


def test_cut_locus_antipodal_circle(circle, lap):
    x = np.array([1.3])
    res = L.cut_locus_coefficient(circle, lap, x, geo.antipode(circle, x), cv.Partition.equidistant(1.0, 4))
    assert len(res) == 2
    assert all(c.coefficient == pytest.approx(1.0, rel=1e-5) and c.zero_modes == 0 for c in res)


def test_cut_locus_sphere_stability_and_zero_modes(sphere, lap):
    x = np.array([2.0, 4.0])
    y = geo.antipode(sphere, x)
    coarse = L.cut_locus_coefficient(sphere, lap, x, y, cv.Partition.equidistant(1.0, 4))[0]
    fine = L.cut_locus_coefficient(sphere, lap, x, y, cv.Partition.equidistant(1.0, 8))[0]
    assert coarse.dim == 1 and coarse.zero_modes == 1 and fine.zero_modes == 1
    assert abs(coarse.coefficient - fine.coefficient) <= 0.02 * fine.coefficient
    assert fine.min_normal_eigenvalue > 0


def test_cut_locus_partition_too_coarse(circle, sphere, lap):
    x = np.array([0.4])
    with pytest.raises(PartitionTooCoarse):
        L.cut_locus_coefficient(circle, lap, x, geo.antipode(circle, x), cv.Partition.equidistant(1.0, 1))
    with pytest.raises(PartitionTooCoarse):
        L.cut_locus_coefficient(circle, lap, x, [1.0], cv.Partition.equidistant(1.0, 1))


@pytest.mark.parametrize("kind", ["circle", "torus", "sphere"])
def test_energy_gradient_vanishes_on_minimizers(kind):
    model = {"circle": geo.ManifoldModel.circle(1.0), "torus": geo.ManifoldModel.torus(1.0, 2.0),
             "sphere": geo.ManifoldModel.sphere(1.0)}[kind]
    x, y = {"circle": ([0.2], [2.0]), "torus": ([0.1, 0.3], [0.4, 1.2]),
            "sphere": ([1.2, 0.4], [1.9, 1.6])}[kind]
    part = cv.Partition.equidistant(1.0, 4)
    dom = L.PathSpaceDomain(model, x, y, part)
    nodes = _geodesic_nodes(model, x, y, part)
    f = lambda c: float(L.path_energy(dom, c.reshape(nodes.shape)))
    grad = L.fd_gradient(f, nodes.ravel(), 1e-5)
    assert np.max(np.abs(grad)) <= 1e-6 * max(1.0, f(nodes.ravel()))


def test_antipodal_sphere_limit_is_two_pi_squared():
    limit, rows = L.antipodal_sphere_limit()
    assert limit == pytest.approx(2 * math.pi**2, rel=1e-4)
    assert len(rows) == 5


def test_expansion_report(tmp_path):
    rep = L.ExpansionReport()
    rep.add(0, 1, 19.74, 19.7392)
    rep.add(1, 0, 1.0)
    assert "component" in rep.table().splitlines()[0]
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "component,dim,coeff_leading,coeff_fitted,rel_err"
    assert lines[2].endswith("nan,nan")
