import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatkern import convolution as cv
from heatkern import geometry as geo
from heatkern import kernels as K
from heatkern.errors import BadTimeOrder, GridMismatch, InsufficientPoints
from heatkern.kernels import CutoffProfile, KernelMatrix


def _random_matrix(grid, rng):
    return KernelMatrix(grid, 0.1, rng.random((grid.size, grid.size)) + 0.1, "laplace")


def test_convolve_is_associative(torus):
    rng = np.random.default_rng(0)
    grid = geo.build_grid(torus, (6, 8))
    A, B, C = (_random_matrix(grid, rng) for _ in range(3))
    left = cv.convolve(cv.convolve(A, B), C).values
    right = cv.convolve(A, cv.convolve(B, C)).values
    assert np.max(np.abs(left - right) / np.abs(left)) <= 1e-12


def test_convolve_rejects_mismatched_grids(circle):
    rng = np.random.default_rng(1)
    A = _random_matrix(geo.build_grid(circle, 8), rng)
    B = _random_matrix(geo.build_grid(circle, 8), rng)
    cv.convolve(A, B)  # equal grids built separately are accepted
    C = _random_matrix(geo.build_grid(circle, 10), rng)
    with pytest.raises(GridMismatch):
        cv.convolve(A, C)


def test_chapman_kolmogorov_on_circle(circle, lap):
    grid = geo.build_grid(circle, 64)
    P = K.reference_kernel(circle, lap, 0.3, grid)
    half = K.reference_kernel(circle, lap, 0.15, grid)
    assert np.max(np.abs(cv.convolve(half, half).values - P.values)) <= 1e-12


def test_short_time_kernel_acts_as_identity(circle, lap):
    grid = geo.build_grid(circle, 256)
    f = np.cos(grid.nodes[:, 0]) + 2
    P = K.reference_kernel(circle, lap, 1e-3, grid).values
    assert np.max(np.abs((P * grid.weights) @ f - f)) < 2e-3


def test_admissible_mesh_examples(circle, sphere):
    assert cv.admissible_mesh(circle, 0.5) == pytest.approx(0.5)
    assert cv.admissible_mesh(geo.ManifoldModel.torus(1, 1), 0.999) == pytest.approx(0.999 * 0.5)
    assert cv.admissible_mesh(sphere, 0.9) == pytest.approx(0.9)
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            cv.admissible_mesh(circle, bad)


def test_single_step_product_is_the_approximate_kernel(sphere, lap):
    grid = geo.build_grid(sphere, (6, 12))
    prof = CutoffProfile.default(sphere)
    with pytest.warns(cv.MeshWarning):
        C = cv.convolution_product(sphere, lap, 1, prof, cv.Partition.equidistant(0.2, 1), grid).values
    A = K.approximate_kernel_matrix(sphere, lap, 1, prof, 0.2, grid).values
    assert np.array_equal(C, A)


def test_fold_order_independence(circle, cos_potential):
    grid = geo.build_grid(circle, 48)
    prof = CutoffProfile.default(circle)
    part = cv.Partition.ragged(0.2, 5, seed=3)
    mats = [K.approximate_kernel_matrix(circle, cos_potential, 2, prof, d, grid).values
            for d in part.increments]
    right = mats[-1]
    for A in reversed(mats[:-1]):
        right = (A * grid.weights) @ right
    left = cv.convolution_product(circle, cos_potential, 2, prof, part, grid).values
    assert np.max(np.abs(left - right) / np.abs(right)) <= 1e-12


def test_zonal_path_matches_dense(sphere, lap):
    grid = geo.build_grid(sphere, (8, 16))
    prof = CutoffProfile.default(sphere)
    part = cv.Partition(np.array([0.0, 0.03, 0.06, 0.1, 0.14]))
    dense = cv.convolution_product(sphere, lap, 1, prof, part, grid).values
    zonal = cv.zonal_convolution_product(sphere, 1, prof, part, grid).to_dense()
    assert np.max(np.abs(dense - zonal)) <= 1e-12 * np.max(dense)
    with pytest.raises(GridMismatch):
        cv.zonal_convolution_product(sphere, 1, prof, part, geo.build_grid(geo.ManifoldModel.circle(1), 8))


def test_mesh_warning_when_partition_is_too_coarse(torus, lap):
    grid = geo.build_grid(torus, (6, 6))
    prof = CutoffProfile.default(torus)
    with pytest.warns(cv.MeshWarning):
        cv.convolution_product(torus, lap, 0, prof, cv.Partition.equidistant(1.0, 2), grid)
    with warnings.catch_warnings():
        warnings.simplefilter("error", cv.MeshWarning)
        cv.convolution_product(torus, lap, 0, prof, cv.Partition.equidistant(0.1, 8), grid)


def test_flat_circle_zero_order_error_is_uniform_in_mesh(circle, lap):
    grid = geo.build_grid(circle, 128)
    errs = [cv.product_errors(circle, lap, 0, CutoffProfile.default(circle),
                              cv.Partition.equidistant(0.1, N), grid)[1] for N in (8, 16, 32)]
    # no cutoff or wrap-around is felt at this time scale
    assert max(errs) < 1e-10


def test_flat_circle_resolution_doubling(circle, lap):
    prof = CutoffProfile.default(circle)
    part = cv.Partition.equidistant(0.1, 32)
    # steps of 0.1/32 need a node spacing well below their Gaussian width
    coarse = cv.convolution_product(circle, lap, 0, prof, part, geo.build_grid(circle, 128)).values
    fine = cv.convolution_product(circle, lap, 0, prof, part, geo.build_grid(circle, 256)).values[::2, ::2]
    assert np.max(np.abs(fine - coarse) / fine) < 1e-6


def test_sphere_sweep_small_grid_has_first_order(sphere, lap):
    res = cv.convergence_sweep(sphere, lap, 1, 0.1, [4, 8, 16], geo.build_grid(sphere, (32, 64)))
    assert abs(res.fitted_order - 1) <= 0.3
    assert [r.mesh for r in res.rows] == sorted((r.mesh for r in res.rows), reverse=True)


def test_sweep_needs_three_partitions(circle, lap):
    with pytest.raises(InsufficientPoints):
        cv.convergence_sweep(circle, lap, 1, 0.1, [4, 8], geo.build_grid(circle, 32))
    with pytest.raises(InsufficientPoints):
        cv.fit_order([0.1, 0.05], [1e-3, 5e-4])


def test_fit_order_on_exact_power_law():
    m = np.array([0.1, 0.05, 0.025, 0.0125])
    assert cv.fit_order(m, 3 * m**1.5) == pytest.approx(1.5)


def test_rows_csv_is_sorted_descending(tmp_path):
    rows = [cv.ConvergenceRow(m, 1.0, 2.0, 3.0, 0.0) for m in (0.01, 0.04, 0.02)]
    path = tmp_path / "rows.csv"
    cv.write_rows_csv(rows, path)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["mesh", "sup_error", "rel_pDelta", "rel_e", "runtime_ms"]
    assert [float(r[0]) for r in data[1:]] == [0.04, 0.02, 0.01]


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.01, 5.0), N=st.integers(1, 50), seed=st.integers(0, 1000))
def test_ragged_partition_properties(t, N, seed):
    p = cv.Partition.ragged(t, N, seed)
    assert p.N == N and p.t == pytest.approx(t, rel=1e-12)
    assert np.all(p.increments > 0)
    # increments stay within a factor 1.2 / 0.8 of each other after renormalising
    assert p.mesh <= 1.5 * t / N * (1 + 1e-9)
    assert np.array_equal(p.nodes, cv.Partition.ragged(t, N, seed).nodes)


def test_partition_validation():
    with pytest.raises(ValueError):
        cv.Partition(np.array([0.0]))
    with pytest.raises(ValueError):
        cv.Partition(np.array([0.1, 0.5]))
    with pytest.raises(ValueError):
        cv.Partition(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValueError):
        cv.Partition.equidistant(1.0, 0)


def test_offdiagonal_mass_examples(circle):
    grid = geo.build_grid(circle, 48)
    assert cv.offdiagonal_mass(circle, 0.5, 0.1, 0.2, 4.0, grid) == 0.0
    # with s0 = 0 and s1 = t the only hop is x -> y itself
    assert cv.offdiagonal_mass(circle, 0.5, 0.0, 0.5, 1.0, grid) == pytest.approx(1.0)
    with pytest.raises(BadTimeOrder):
        cv.offdiagonal_mass(circle, 0.5, 0.3, 0.2, 1.0, grid)
    with pytest.raises(BadTimeOrder):
        cv.offdiagonal_mass(circle, 0.5, 0.1, 0.7, 1.0, grid)


def test_offdiagonal_decay_rate(circle):
    grid = geo.build_grid(circle, 96)
    t = 1.0
    delta = cv.admissible_mesh(circle, 0.9)
    R = math.pi / 2
    fit = cv.offdiagonal_decay(circle, t, R, [t * delta / 2 * f for f in (0.1, 0.2, 0.4)], grid)
    assert fit["rate"] >= 0.5
    assert all(v > 0 for v in fit["values"])
