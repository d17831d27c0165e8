"""Repeated convolution of approximate heat kernels over time partitions."""
from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import kernels as K
from .errors import BadTimeOrder, GridMismatch, InsufficientPoints
from .geometry import ManifoldModel, QuadratureGrid
from .kernels import CutoffProfile, KernelMatrix, OperatorSpec

# above this many nodes the sphere uses the longitude-Fourier path
DENSE_LIMIT = 4096


class MeshWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    """Time nodes 0 = tau_0 < ... < tau_N = t."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("a partition needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("partitions start at 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("partition nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def equidistant(cls, t: float, N: int) -> "Partition":
        if N < 1:
            raise ValueError("N must be at least 1")
        nodes = t * np.arange(N + 1) / N
        nodes[-1] = t
        return cls(nodes)

    @classmethod
    def ragged(cls, t: float, N: int, seed: int = 0, spread: float = 0.2) -> "Partition":
        """Increments t/N perturbed by a uniform factor in [1 - spread, 1 + spread]."""
        rng = np.random.default_rng(seed)
        inc = 1.0 + spread * rng.uniform(-1.0, 1.0, N)
        nodes = np.concatenate([[0.0], np.cumsum(inc)]) * (t / inc.sum())
        nodes[-1] = t
        return cls(nodes)

    @property
    def t(self) -> float:
        return float(self.nodes[-1])

    @property
    def N(self) -> int:
        return len(self.nodes) - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def mesh(self) -> float:
        return float(self.increments.max())


@dataclass(frozen=True)
class ConvergenceRow:
    mesh: float
    sup_error: float
    rel_pDelta: float
    rel_e: float
    runtime_ms: float


@dataclass(eq=False)
class SweepResult:
    rows: list[ConvergenceRow]
    fitted_order: float
    monotone: bool
    warnings: list[str] = field(default_factory=list)
    resolution_change: float | None = None

    @property
    def resolution_stable(self) -> bool | None:
        if self.resolution_change is None:
            return None
        return self.resolution_change < 0.1

    def to_csv(self, path):
        write_rows_csv(self.rows, path)


def write_rows_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mesh", "sup_error", "rel_pDelta", "rel_e", "runtime_ms"])
        for r in sorted(rows, key=lambda r: -r.mesh):
            w.writerow([format(v, ".17g") for v in
                        (r.mesh, r.sup_error, r.rel_pDelta, r.rel_e, r.runtime_ms)])


def _same_grid(a: QuadratureGrid, b: QuadratureGrid) -> bool:
    if a is b:
        return True
    return (a.model == b.model and a.shape == b.shape
            and np.array_equal(a.nodes, b.nodes) and np.array_equal(a.weights, b.weights))


def convolve(A: KernelMatrix, B: KernelMatrix, grid: QuadratureGrid | None = None) -> KernelMatrix:
    """(A * B)(x, y) = sum_z A(x, z) w(z) B(z, y)."""
    grid = A.grid if grid is None else grid
    if not (_same_grid(A.grid, grid) and _same_grid(B.grid, grid)):
        raise GridMismatch("kernel matrices live on different grids")
    vals = (A.values * grid.weights) @ B.values
    return KernelMatrix(grid, A.t + B.t, vals, A.op_label)


def admissible_mesh(model: ManifoldModel, safety: float) -> float:
    """delta = safety * (inj / diam)^2."""
    if not 0 < safety < 1:
        raise ValueError("safety must lie in (0, 1)")
    c = geo.model_constants(model)
    return safety * (c["inj"] / c["diam"]) ** 2


def check_mesh(model, partition: Partition, safety: float = 0.9) -> str | None:
    delta = admissible_mesh(model, safety)
    if partition.mesh > delta * partition.t:
        msg = f"mesh {partition.mesh:.3g} exceeds delta*t = {delta * partition.t:.3g}"
        warnings.warn(msg, MeshWarning, stacklevel=3)
        return msg
    return None


def _runs(increments):
    """Group consecutive equal increments into (value, count) runs."""
    runs: list[list] = []
    for d in increments:
        if runs and abs(d - runs[-1][0]) <= 1e-14 * d:
            runs[-1][1] += 1
        else:
            runs.append([float(d), 1])
    return runs


def convolution_product(model, op, nu, profile, partition: Partition, grid: QuadratureGrid,
                        safety: float = 0.9) -> KernelMatrix:
    """Dense fold e^nu_{D1} * ... * e^nu_{DN} on ``grid``."""
    if grid.model != model:
        raise GridMismatch("grid belongs to a different model")
    check_mesh(model, partition, safety)
    w = grid.weights
    out = None
    for d, count in _runs(partition.increments):
        A = K.approximate_kernel_matrix(model, op, nu, profile, d, grid).values
        # (A W)^count A ... : fold as P <- P W A
        blk = A
        if count > 1:
            AW = A * w
            blk = np.linalg.matrix_power(AW, count - 1) @ A
        out = blk if out is None else (out * w) @ blk
    return KernelMatrix(grid, partition.t, out, op.label(), {"N": partition.N, "nu": nu})


# -- sphere: longitude-Fourier block diagonalisation ---------------------------------


@dataclass(eq=False)
class ZonalMatrix:
    """Kernel on a sphere grid that commutes with longitude shifts.

    ``modes[m]`` is the (n_lat x n_lat) block of the m-th real Fourier mode in
    the longitude difference; values at ((i, a), (j, b)) are recovered from
    the inverse transform at index (a - b) mod n_lon.
    """

    grid: QuadratureGrid
    t: float
    modes: np.ndarray

    def lag_values(self) -> np.ndarray:
        """Array C[i, j, lag] of kernel values."""
        n_lon = self.grid.shape[1]
        return np.fft.irfft(self.modes, n=n_lon, axis=0).transpose(1, 2, 0)

    def to_dense(self) -> np.ndarray:
        n_lat, n_lon = self.grid.shape
        C = self.lag_values()
        a = np.arange(n_lon)
        lag = (a[:, None] - a[None, :]) % n_lon
        return C[:, :, lag].transpose(0, 2, 1, 3).reshape(n_lat * n_lon, n_lat * n_lon)


def _lag_distances(grid: QuadratureGrid, i: int) -> np.ndarray:
    """Distances from node (theta_i, 0) to every (theta_j, lag)."""
    n_lat, n_lon = grid.shape
    th = grid.nodes[::n_lon, 0]
    ph = geo.TWO_PI * np.arange(n_lon) / n_lon
    x = np.array([th[i], 0.0])
    Y = np.stack(np.meshgrid(th, ph, indexing="ij"), axis=-1)
    return geo.distance(grid.model, x, Y)


def _zonal_blocks(model, nu, profile, d, grid):
    n_lat, n_lon = grid.shape
    modes = np.empty((n_lon // 2 + 1, n_lat, n_lat))
    for i in range(n_lat):
        row = K.approximate_kernel_radial(model, nu, profile, d, _lag_distances(grid, i))
        modes[:, i, :] = np.fft.rfft(row, axis=1).real.T
    return modes


def zonal_convolution_product(model, nu, profile, partition: Partition, grid: QuadratureGrid,
                              safety: float = 0.9) -> ZonalMatrix:
    """Convolution product of rotation-invariant sphere kernels (L = Delta)."""
    if model.kind != "sphere" or grid.model != model:
        raise GridMismatch("the longitude-Fourier path needs a sphere grid")
    check_mesh(model, partition, safety)
    n_lat, n_lon = grid.shape
    sw = np.sqrt(grid.weights[::n_lon])
    out = None
    for d, count in _runs(partition.increments):
        S = _zonal_blocks(model, nu, profile, d, grid) * sw[:, None] * sw[None, :]
        blk = np.linalg.matrix_power(S, count)
        out = blk if out is None else out @ blk
    modes = out / sw[:, None] / sw[None, :]
    return ZonalMatrix(grid, partition.t, modes)


# -- errors and sweeps --------------------------------------------------------------


def _dense_errors(model, op, t, grid, C):
    xs, ys = grid.nodes[:, None, :], grid.nodes[None, :, :]
    e_t = K.euclidean_kernel(model, t, xs, ys)
    if model.kind == "sphere":
        p_delta = K.sphere_heat_ratio_fast(geo.pairwise_distance(grid), t, model.radius) * e_t
    else:
        p_delta = K.heat_ratio(model, t, xs, ys) * e_t
    p_ref = K.reference_kernel(model, op, t, grid).values if op.has_potential else p_delta
    err = np.abs(C - p_ref)
    return float(err.max()), float(np.max(err / p_delta)), float(np.max(err / e_t))


def _zonal_errors(model, t, Z: ZonalMatrix):
    C = Z.lag_values()
    sup = rel_p = rel_e = 0.0
    for i in range(C.shape[0]):
        r = _lag_distances(Z.grid, i)
        e_t = K.euclidean_from_distance(2, t, r)
        p = K.sphere_heat_ratio_fast(r, t, model.radius) * e_t
        err = np.abs(C[i] - p)
        sup = max(sup, float(err.max()))
        rel_p = max(rel_p, float(np.max(err / p)))
        rel_e = max(rel_e, float(np.max(err / e_t)))
    return sup, rel_p, rel_e


def _use_zonal(model, op, grid):
    return model.kind == "sphere" and not op.has_potential and grid.size > DENSE_LIMIT


def product_errors(model, op, nu, profile, partition, grid, safety=0.9):
    """(sup_error, rel_pDelta, rel_e) of the convolution product against p_t."""
    t = partition.t
    if _use_zonal(model, op, grid):
        Z = zonal_convolution_product(model, nu, profile, partition, grid, safety)
        return _zonal_errors(model, t, Z)
    C = convolution_product(model, op, nu, profile, partition, grid, safety).values
    return _dense_errors(model, op, t, grid, C)


def fit_order(meshes, errors) -> float:
    """Least-squares slope of log(error) against log(mesh)."""
    meshes, errors = np.asarray(meshes, float), np.asarray(errors, float)
    if len(meshes) < 3:
        raise InsufficientPoints("order fitting needs at least three meshes")
    slope, _ = np.polyfit(np.log(meshes), np.log(errors), 1)
    return float(slope)


def _double(grid: QuadratureGrid) -> QuadratureGrid:
    return geo.build_grid(grid.model, tuple(2 * s for s in grid.shape))


def convergence_sweep(model, op, nu, t, N_list, grid, profile=None, safety=0.9,
                      ragged=False, seed=0, check_resolution=False) -> SweepResult:
    """Convolution-product errors over a list of partition sizes, with fitted order."""
    if len(N_list) < 3:
        raise InsufficientPoints("a sweep needs at least three partitions")
    profile = profile or CutoffProfile.default(model)
    notes = []
    rows = []
    parts = []
    for N in N_list:
        part = Partition.ragged(t, N, seed) if ragged else Partition.equidistant(t, N)
        parts.append(part)
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", MeshWarning)
            errs = product_errors(model, op, nu, profile, part, grid, safety)
        notes += [str(c.message) for c in caught]
        rows.append(ConvergenceRow(part.mesh, *errs, (time.perf_counter() - t0) * 1e3))
    rows.sort(key=lambda r: -r.mesh)
    order = fit_order([r.mesh for r in rows], [r.rel_pDelta for r in rows])
    monotone = all(b.rel_pDelta < a.rel_pDelta for a, b in zip(rows, rows[1:]))
    change = None
    if check_resolution:
        finest = min(parts, key=lambda p: p.mesh)
        base = min(rows, key=lambda r: r.mesh).rel_pDelta
        fine = product_errors(model, op, nu, profile, finest, _double(grid), safety)[1]
        change = abs(fine - base) / base
        if change >= 0.1:
            notes.append(f"resolution doubling changed the finest error by {change:.1%}")
    return SweepResult(rows, order, monotone, notes, change)


# -- off-diagonal mass -------------------------------------------------------------


def offdiagonal_mass(model, t, s0, s1, R, grid: QuadratureGrid, op: OperatorSpec | None = None) -> float:
    """max over grid pairs of the heat-path mass with a hop of length >= R in [s0, s1], over p_t."""
    if not 0 <= s0 < s1 <= t:
        raise BadTimeOrder("need 0 <= s0 < s1 <= t")
    op = op or OperatorSpec.laplace()
    if R > geo.model_constants(model)["diam"]:
        return 0.0
    w = grid.weights
    d = geo.pairwise_distance(grid)
    mid = K.reference_kernel(model, op, s1 - s0, grid).values * (d >= R)
    left = K.reference_kernel(model, op, s0, grid).values * w if s0 > 0 else None
    right = K.reference_kernel(model, op, t - s1, grid).values if s1 < t else None
    M = mid if left is None else left @ mid
    if right is not None:
        M = (M * w) @ right
    p_t = K.reference_kernel(model, op, t, grid).values
    return float(np.max(M / p_t))


def offdiagonal_decay(model, t, R, gaps, grid, s0=None) -> dict:
    """Fit log(mass) against -R^2 / (4 gap) over hop durations ``gaps``."""
    s0 = t / 4 if s0 is None else s0
    vals = [offdiagonal_mass(model, t, s0, s0 + g, R, grid) for g in gaps]
    x = -R * R / (4 * np.asarray(gaps, float))
    slope, intercept = np.polyfit(x, np.log(vals), 1)
    return {"gaps": list(map(float, gaps)), "values": vals, "rate": float(slope),
            "constant": float(math.exp(intercept))}
