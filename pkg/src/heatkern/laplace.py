"""Laplace asymptotics for integrals concentrated on non-degenerate critical manifolds.

Two domains are supported: coordinate rectangles with a Riemannian metric and
density, and finite-dimensional spaces of broken geodesics between two points
of a model manifold (the time-sliced path space).
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from . import kernels as K
from .convolution import Partition
from .errors import (
    CutPairError,
    DegenerateHessian,
    DimensionTooLarge,
    NegativeEigenvalue,
    PartitionTooCoarse,
    QuadratureNotConverged,
)
from .geometry import ManifoldModel
from .kernels import CutoffProfile, OperatorSpec

FD_STEP = 1e-4
ZERO_MODE_TOL = 1e-6


# -- Hessians ---------------------------------------------------------------------------


def _fd_hessian(f, x, h):
    """Central-difference Hessian of scalar ``f`` at ``x`` with per-axis steps ``h``."""
    n = len(x)
    H = np.empty((n, n))
    f0 = f(x)
    E = np.diag(h)
    for i in range(n):
        H[i, i] = (f(x + E[i]) - 2 * f0 + f(x - E[i])) / h[i] ** 2
        for j in range(i):
            v = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j]))
            H[i, j] = H[j, i] = v / (4 * h[i] * h[j])
    return H


def fd_hessian(f, x, h):
    """Hessian with one Richardson step: (4 H(h/2) - H(h)) / 3."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    return (4 * _fd_hessian(f, x, h / 2) - _fd_hessian(f, x, h)) / 3


def fd_gradient(f, x, h):
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    E = np.diag(h)
    return np.array([(f(x + E[i]) - f(x - E[i])) / (2 * h[i]) for i in range(len(x))])


def _metric_root_inv(G):
    w, U = np.linalg.eigh(G)
    return (U / np.sqrt(w)) @ U.T


def normal_determinant(H, G, d: int, tol: float = ZERO_MODE_TOL) -> tuple[float, np.ndarray]:
    """Determinant of the Hessian on the normal space after dropping ``d`` zero modes.

    ``H`` is the coordinate Hessian and ``G`` the metric; eigenvalues are those of
    G^(-1/2) H G^(-1/2).  Returns (determinant, all eigenvalues sorted by magnitude).
    """
    S = _metric_root_inv(G)
    lam = np.linalg.eigvalsh(S @ H @ S)
    lam = lam[np.argsort(np.abs(lam))]
    scale = np.abs(lam).max()
    small = int(np.sum(np.abs(lam) <= tol * scale))
    if small != d:
        raise DegenerateHessian(f"found {small} zero modes, expected {d}")
    normal = lam[d:]
    if np.any(normal < 0):
        raise NegativeEigenvalue("the critical set is not a local minimum")
    return float(np.prod(normal)), lam


# -- rectangle domains ------------------------------------------------------------------


@dataclass(eq=False)
class IntegrandSpec:
    """Phase and amplitude on a coordinate rectangle with metric and density.

    ``phase(x)`` and ``density(x)`` act on arrays with a trailing coordinate
    axis; ``amplitude(t, x)`` likewise.  ``metric(x)`` returns the metric matrix
    at a single point.  The default density and metric are Euclidean.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    phase: Callable
    amplitude: Callable = lambda t, x: np.ones(x.shape[:-1])
    density: Callable | None = None
    metric: Callable | None = None

    @property
    def dim(self) -> int:
        return len(self.lower)

    def metric_at(self, x):
        if self.metric is None:
            return np.eye(self.dim)
        return np.asarray(self.metric(np.asarray(x, float)), float)

    def steps(self):
        return FD_STEP * (np.asarray(self.upper) - np.asarray(self.lower))


@dataclass(eq=False)
class CriticalManifold:
    """Parameterised component of the zero set of the phase, with a quadrature rule."""

    dim: int
    param: Callable  # (k, dim) parameters -> (k, N) points
    nodes: np.ndarray  # (k, dim) parameter nodes
    weights: np.ndarray

    @classmethod
    def point(cls, x) -> "CriticalManifold":
        x = np.atleast_1d(np.asarray(x, float))
        return cls(0, lambda u: np.broadcast_to(x, (len(u), len(x))).copy(), np.zeros((1, 0)), np.ones(1))

    @classmethod
    def curve(cls, param, lo, hi, n=64, periodic=True) -> "CriticalManifold":
        if periodic:
            u = lo + (hi - lo) * np.arange(n) / n
            w = np.full(n, (hi - lo) / n)
        else:
            u, w = geo.gauss_legendre(lo, hi, n)
        return cls(1, param, u[:, None], w)

    def points(self):
        return self.param(self.nodes)

    def induced_weights(self, spec: IntegrandSpec):
        """Quadrature weights times the Riemannian length/area element of the parameterisation."""
        if self.dim == 0:
            return self.weights.copy()
        h = 1e-6
        out = np.empty(len(self.weights))
        for k, u in enumerate(self.nodes):
            J = np.stack([(self.param((u + h * e)[None])[0] - self.param((u - h * e)[None])[0]) / (2 * h)
                          for e in np.eye(self.dim)], axis=1)
            G = spec.metric_at(self.param(u[None])[0])
            out[k] = self.weights[k] * math.sqrt(np.linalg.det(J.T @ G @ J))
        return out

    def validate(self, spec: IntegrandSpec, tol_phase=1e-10, tol_grad=1e-8):
        """Max |phase| and max scaled |gradient| along the quadrature nodes."""
        pts = self.points()
        vals = np.abs(spec.phase(pts)).max()
        f = lambda x: float(spec.phase(x[None])[0])
        grads = max(np.abs(fd_gradient(f, p, spec.steps()) ).max() for p in pts)
        return vals <= tol_phase and grads <= tol_grad, float(vals), float(grads)


def laplace_leading_term(spec: IntegrandSpec, gamma: CriticalManifold) -> float:
    """int_Gamma a(0, x) / det(normal Hessian)^(1/2) over the induced measure."""
    f = lambda x: float(spec.phase(x[None])[0])
    pts = gamma.points()
    amps = spec.amplitude(0.0, pts)
    wts = gamma.induced_weights(spec)
    total = 0.0
    for p, a, w in zip(pts, amps, wts):
        det, _ = normal_determinant(fd_hessian(f, p, spec.steps()), spec.metric_at(p), gamma.dim)
        total += w * a / math.sqrt(det)
    return float(total)


def brute_force_integral(spec: IntegrandSpec, t: float, rtol: float = 1e-10,
                         order: int = 8, max_points: int = 2 ** 25) -> float:
    """(4 pi t)^(-N/2) int e^(-phase/2t) a(t, x) dvol by composite Gauss-Legendre with panel doubling.

    The first panel width is about 2 sqrt(t) (unit-scale phases), so the
    Gaussian core is resolved before convergence is tested.
    """
    if not t > 0:
        raise K.NonpositiveTime(f"time must be positive, got {t}")
    g, gw = np.polynomial.legendre.leggauss(order)
    N = spec.dim
    lows, highs = np.asarray(spec.lower, float), np.asarray(spec.upper, float)
    panels = np.clip(np.ceil((highs - lows) / (2 * math.sqrt(t))), 4, 256).astype(int)
    prev = None
    while True:
        if np.prod(order * panels) > max_points:
            raise QuadratureNotConverged("tensor quadrature exceeded its point budget")
        axes, wax = [], []
        for lo, hi, p in zip(lows, highs, panels):
            edges = np.linspace(lo, hi, p + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[1:] + edges[:-1])
            axes.append((mid[:, None] + half[:, None] * g).ravel())
            wax.append((half[:, None] * gw).ravel())
        rest_w = _outer_weights(wax[1:])
        rest_x = (np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(len(rest_w), N - 1)
                  if N > 1 else np.zeros((1, 0)))
        block = max(1, 2 ** 20 // len(rest_w))
        total = 0.0
        for start in range(0, len(axes[0]), block):
            x0, w0 = axes[0][start:start + block], wax[0][start:start + block]
            X = np.concatenate([np.repeat(x0, len(rest_w))[:, None], np.tile(rest_x, (len(x0), 1))], axis=1)
            vals = np.exp(-spec.phase(X) / (2 * t)) * spec.amplitude(t, X)
            if spec.density is not None:
                vals = vals * spec.density(X)
            total += float(np.dot(np.multiply.outer(w0, rest_w).ravel(), vals))
        cur = total * (4 * math.pi * t) ** (-N / 2)
        if prev is not None and abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
        panels = panels * 2


def _outer_weights(ws):
    out = np.ones(1)
    for w in ws:
        out = np.multiply.outer(out, w).ravel()
    return out


def first_order_coefficient(spec: IntegrandSpec, x0, h: float = 1e-2) -> float:
    """Coefficient c1 in I(t, a) = c0 + c1 t + O(t^2) at an isolated minimum ``x0``.

    Uses the classical second-order Laplace formula with derivatives of the
    phase (to fourth order) and amplitude (to second order) from finite
    differences, in Euclidean coordinates with unit density.
    """
    if spec.metric is not None or spec.density is not None:
        raise NotImplementedError("first-order terms are implemented for Euclidean rectangles only")
    x0 = np.asarray(x0, float)
    n = len(x0)
    f = lambda x: float(spec.phase(np.asarray(x)[None])[0])
    a = lambda x: float(spec.amplitude(0.0, np.asarray(x)[None])[0])
    E = np.eye(n) * h

    def d3(i, j, k):
        g = lambda y: float(fd_hessian(f, y, h)[i, j])
        return (g(x0 + E[k]) - g(x0 - E[k])) / (2 * h)

    def d4(i, j, k, l):
        g = lambda y: float(fd_hessian(f, y, h)[i, j])
        return float(fd_hessian(g, x0, h)[k, l])

    H = fd_hessian(f, x0, h)
    Ginv = np.linalg.inv(H)
    da = fd_gradient(a, x0, h)
    dda = fd_hessian(a, x0, h)
    a0 = a(x0)
    F3 = np.empty((n, n, n))
    for i, j, k in itertools.product(range(n), repeat=3):
        F3[i, j, k] = d3(i, j, k)
    F4 = np.empty((n,) * 4)
    for i, j, k, l in itertools.product(range(n), repeat=4):
        F4[i, j, k, l] = d4(i, j, k, l)
    G = Ginv
    c = (0.5 * np.einsum("ij,ij", dda, G)
         - 0.5 * np.einsum("i,ij,jkl,kl", da, G, F3, G)
         - a0 / 8 * np.einsum("ijkl,ij,kl", F4, G, G)
         + a0 / 8 * np.einsum("ijk,lmn,ij,kl,mn", F3, F3, G, G, G)
         + a0 / 12 * np.einsum("ijk,lmn,il,jm,kn", F3, F3, G, G, G))
    # e^{-phase/2t}: the expansion parameter 1/lambda equals 2t
    return float(2 * c / math.sqrt(np.linalg.det(H)))


def fitted_limit(ts, values, degree: int = 2) -> tuple[float, float]:
    """Polynomial extrapolation to t = 0; returns (limit, slope at 0)."""
    coef = np.polyfit(np.asarray(ts, float), np.asarray(values, float), degree)
    return float(coef[-1]), float(coef[-2])


def decay_rate(spec: IntegrandSpec, ts) -> float:
    """Slope of log I(t, a) against 1/t."""
    vals = [brute_force_integral(spec, t) for t in ts]
    slope, _ = np.polyfit(1.0 / np.asarray(ts, float), np.log(vals), 1)
    return float(slope)


# toy problems used by the CLI and the test-suite

def gaussian_toy() -> tuple[IntegrandSpec, CriticalManifold]:
    spec = IntegrandSpec((-8.0, -8.0), (8.0, 8.0), lambda x: np.sum(x * x, axis=-1))
    return spec, CriticalManifold.point([0.0, 0.0])


def valley_toy(amplitude=None) -> tuple[IntegrandSpec, CriticalManifold]:
    """phi = (rho - 1)^2 on the polar rectangle 0.2 < rho < 2 with the flat metric."""
    spec = IntegrandSpec(
        (0.2, 0.0), (2.0, geo.TWO_PI),
        phase=lambda x: (x[..., 0] - 1.0) ** 2,
        amplitude=amplitude or (lambda t, x: np.ones(x.shape[:-1])),
        density=lambda x: x[..., 0],
        metric=lambda x: np.diag([1.0, x[0] ** 2]),
    )
    gamma = CriticalManifold.curve(lambda u: np.stack([np.ones(len(u)), u[:, 0]], axis=-1), 0.0, geo.TWO_PI, 64)
    return spec, gamma


def ring_bump(t, x, lo=1.3, hi=1.8):
    """Smooth amplitude supported in lo < rho < hi."""
    rho = x[..., 0]
    s = (rho - lo) * (hi - rho)
    out = np.zeros_like(rho)
    inside = s > 0
    out[inside] = np.exp(-1.0 / s[inside])
    return out


# -- path space -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathSpaceDomain:
    """Broken geodesics from x to y with breaks at the interior partition times of [0, 1]."""

    model: ManifoldModel
    x: np.ndarray
    y: np.ndarray
    partition: Partition

    def __post_init__(self):
        object.__setattr__(self, "x", geo.normalize(self.model, self.x))
        object.__setattr__(self, "y", geo.normalize(self.model, self.y))
        if abs(self.partition.t - 1.0) > 1e-14:
            raise ValueError("path-space partitions live on [0, 1]")

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def increments(self):
        return self.partition.increments

    def full_nodes(self, nodes):
        """Prepend x and append y to interior nodes of shape (..., N-1, ncoords)."""
        nodes = np.asarray(nodes, dtype=float)
        batch = nodes.shape[:-2]
        c = self.model.ncoords
        x = np.broadcast_to(self.x, batch + (1, c))
        y = np.broadcast_to(self.y, batch + (1, c))
        return np.concatenate([x, nodes.reshape(batch + (-1, c)), y], axis=-2)

    def hops(self, nodes):
        full = self.full_nodes(nodes)
        return full[..., :-1, :], full[..., 1:, :]


def _hop_distances(domain, nodes, strict=True):
    a, b = domain.hops(nodes)
    if strict and np.any(geo.is_cut_pair(domain.model, a, b)):
        raise CutPairError("a hop joins a cut pair")
    return geo.distance(domain.model, a, b)


def path_energy(domain: PathSpaceDomain, nodes) -> np.ndarray:
    """Discrete energy 1/2 sum_j d(x_{j-1}, x_j)^2 / Delta_j."""
    d = _hop_distances(domain, nodes)
    return 0.5 * np.sum(d * d / domain.increments, axis=-1)


def upsilon(domain: PathSpaceDomain, nu: int, profile: CutoffProfile, t, nodes,
            op: OperatorSpec | None = None, strict: bool = True) -> np.ndarray:
    """prod_j Delta_j^(-n/2) chi(d_j) sum_{i<=nu} (t Delta_j)^i Phi_i(hop_j) / i!."""
    op = op or OperatorSpec.laplace()
    model = domain.model
    K._check_operator(model, op)
    if nu > K.MAX_ORDER[model.kind]:
        raise K.OrderUnsupported(f"order {nu} unsupported on the {model.kind}")
    a, b = domain.hops(nodes)
    d = _hop_distances(domain, nodes, strict)
    inc = domain.increments
    factor = inc ** (-model.dim / 2) * K.cutoff(profile, d)
    live = d < profile.r1
    series = np.zeros_like(d)
    if np.any(live):
        coeffs = K._coefficient_list(model, op, nu, a[live], b[live], d[live])
        scaled_t = np.broadcast_to(t * inc, d.shape)[live]
        series[live] = sum(scaled_t**i * c / math.factorial(i) for i, c in enumerate(coeffs))
    return np.prod(factor * series, axis=-1)


MAX_TENSOR_FACTORS = 2


def path_integral_form(domain: PathSpaceDomain, op, nu, profile, t, grid: geo.QuadratureGrid) -> float:
    """(4 pi t)^(-nN/2) sum over grid^(N-1) of e^(-E/2t) Upsilon, by tensor quadrature."""
    K._check_time(t)
    model = domain.model
    m = domain.N - 1
    if m > MAX_TENSOR_FACTORS:
        raise DimensionTooLarge(f"tensor quadrature over {m} factors is not supported")
    n = model.dim
    pre = (4 * math.pi * t) ** (-n * domain.N / 2)
    if m == 0:
        nodes = np.zeros((0, model.ncoords))
        E = float(0.5 * np.sum(_hop_distances(domain, nodes, False) ** 2 / domain.increments))
        return pre * math.exp(-E / (2 * t)) * float(upsilon(domain, nu, profile, t, nodes, op, strict=False))
    idx = np.stack(np.meshgrid(*[np.arange(grid.size)] * m, indexing="ij"), axis=-1).reshape(-1, m)
    total = 0.0
    for chunk in np.array_split(idx, max(1, len(idx) // 200_000)):
        nodes = grid.nodes[chunk]
        d = _hop_distances(domain, nodes, strict=False)
        E = 0.5 * np.sum(d * d / domain.increments, axis=-1)
        ups = upsilon(domain, nu, profile, t, nodes, op, strict=False)
        w = np.prod(grid.weights[chunk], axis=-1)
        total += float(np.sum(w * np.exp(-E / (2 * t)) * ups))
    return pre * total


# -- cut-locus coefficients -----------------------------------------------------------------


def _rotation_to(model, x, y):
    """Rotation taking x to the north pole (antipodal) or x, y onto the equator."""
    X = geo.to_cartesian(x)
    Y = geo.to_cartesian(y)
    if geo.distance(model, x, y) >= math.pi * model.radius - geo.CUT_TOL:
        e3 = X
        e1 = np.cross(e3, [0.0, 0.0, 1.0])
        if np.linalg.norm(e1) < 1e-8:
            e1 = np.cross(e3, [1.0, 0.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(e3, e1)
        return np.stack([e1, e2, e3])
    e1 = X
    e3 = np.cross(X, Y)
    if np.linalg.norm(e3) < 1e-12:
        e3 = np.cross(e1, [0.0, 0.0, 1.0])
        if np.linalg.norm(e3) < 1e-8:
            e3 = np.cross(e1, [1.0, 0.0, 0.0])
    e3 /= np.linalg.norm(e3)
    return np.stack([e1, np.cross(e3, e1), e3])


@dataclass(eq=False)
class ComponentCoefficient:
    index: int
    dim: int
    coefficient: float
    zero_modes: int
    min_normal_eigenvalue: float


def _component_point_coefficient(domain, profile, op, chart_nodes, to_nodes, metric, d, steps, quad_w=1.0):
    """Upsilon(0)/sqrt(det) at one path in chart coordinates ``chart_nodes``."""
    f = lambda c: float(path_energy(domain, to_nodes(c)))
    H = fd_hessian(f, chart_nodes, steps)
    det, lam = normal_determinant(H, metric(chart_nodes), d)
    ups = float(upsilon(domain, 0, profile, 0.0, to_nodes(chart_nodes), op))
    return ups / math.sqrt(det), lam


def cut_locus_coefficient(model: ManifoldModel, op: OperatorSpec | None, x, y, partition: Partition,
                          nu: int = 0, profile: CutoffProfile | None = None,
                          family_nodes: int = 16) -> list[ComponentCoefficient]:
    """Leading coefficients Phi_{0,l}: p_t/e_t ~ sum_l (4 pi t)^(-d_l/2) Phi_{0,l}.

    Each component of minimizing geodesics is embedded in the broken-geodesic
    space via its values at the interior partition times; the coefficient is
    int Upsilon(0)/det(normal Hessian of E)^(1/2) over the component with the
    product metric.  Only the t^0 coefficient is computed, whatever ``nu``.
    """
    op = op or OperatorSpec.laplace()
    profile = profile or CutoffProfile.default(model)
    domain = PathSpaceDomain(model, x, y, partition)
    taus = partition.nodes[1:-1]
    m = len(taus)
    inj = geo.model_constants(model)["inj"]
    dist = float(geo.distance(model, x, y))
    if np.any(partition.increments * dist >= inj - geo.CUT_TOL):
        raise PartitionTooCoarse("a hop of a minimizing geodesic reaches the cut locus")
    if m == 0:
        raise PartitionTooCoarse("the partition has no interior nodes")
    geos = geo.minimizing_geodesics(model, x, y)
    out = []
    R = model.radius
    if model.kind != "sphere":
        c = model.ncoords
        scale = np.array([R] if model.kind == "circle" else [1.0, 1.0])
        metric = lambda _c: np.diag(np.tile(scale**2, m))
        steps = FD_STEP * np.ones(m * c)
        for k, g in enumerate(geos):
            base = np.stack([g(s) for s in taus])

            def to_nodes(cc, base=base):
                return cc.reshape(m, c)

            coeff, lam = _component_point_coefficient(domain, profile, op, base.ravel(), to_nodes,
                                                      metric, 0, steps)
            out.append(ComponentCoefficient(k, 0, coeff, 0, float(lam[0])))
        return out
    # sphere: rotate so that nodes sit away from the coordinate poles
    Q = _rotation_to(model, x, y)
    rot_domain = PathSpaceDomain(model, geo.from_cartesian(Q @ geo.to_cartesian(domain.x)),
                                 geo.from_cartesian(Q @ geo.to_cartesian(domain.y)), partition)

    def metric(cc):
        th = cc.reshape(m, 2)[:, 0]
        return R**2 * np.diag(np.ravel(np.stack([np.ones(m), np.sin(th) ** 2], axis=-1)))

    to_nodes = lambda cc: cc.reshape(m, 2)
    steps = FD_STEP * np.ones(2 * m)
    if isinstance(geos, geo.GeodesicFamily):
        # meridians from the north pole: theta_j = pi tau_j, phi_j = alpha
        speed = R * math.sqrt(float(np.sum(np.sin(math.pi * taus) ** 2)))
        total = 0.0
        lam_min = math.inf
        for alpha in geo.TWO_PI * np.arange(family_nodes) / family_nodes:
            cc = np.ravel(np.stack([math.pi * taus, np.full(m, alpha)], axis=-1))
            val, lam = _component_point_coefficient(rot_domain, profile, op, cc, to_nodes, metric, 1, steps)
            total += val * speed * geo.TWO_PI / family_nodes
            lam_min = min(lam_min, float(lam[1]))
        return [ComponentCoefficient(0, 1, total, 1, lam_min)]
    cc = np.ravel(np.stack([np.full(m, math.pi / 2), dist / R * taus], axis=-1))
    val, lam = _component_point_coefficient(rot_domain, profile, op, cc, to_nodes, metric, 0, steps)
    return [ComponentCoefficient(0, 0, val, 0, float(lam[0]))]


def antipodal_sphere_limit(radius: float = 1.0, ts=None) -> tuple[float, list[tuple[float, float]]]:
    """Extrapolate (4 pi t)^(1/2) p_t/e_t at the antipode to t = 0 from the spectral series."""
    ts = ts if ts is not None else np.array([1e-3, 1.5e-3, 2e-3, 3e-3, 4e-3])
    rows = []
    for t in ts:
        ratio, _ = K._sphere_ratio_mp_single(math.pi, t / radius**2)
        rows.append((float(t), math.sqrt(4 * math.pi * t) * ratio))
    limit, _ = fitted_limit([r[0] for r in rows], [r[1] for r in rows], 2)
    return limit, rows


# -- reports -------------------------------------------------------------------------------


@dataclass(eq=False)
class ExpansionReport:
    rows: list[dict] = field(default_factory=list)

    def add(self, component, dim, leading, fitted=None):
        rel = abs(leading - fitted) / abs(fitted) if fitted not in (None, 0) else float("nan")
        self.rows.append({"component": component, "dim": int(dim), "coeff_leading": float(leading),
                          "coeff_fitted": float("nan") if fitted is None else float(fitted),
                          "rel_err": rel})

    def table(self) -> str:
        head = f"{'component':<12}{'dim':>4}{'leading':>20}{'fitted':>20}{'rel_err':>12}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r['component']!s:<12}{r['dim']:>4}{r['coeff_leading']:>20.12g}"
                         f"{r['coeff_fitted']:>20.12g}{r['rel_err']:>12.3e}")
        return "\n".join(lines)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["component", "dim", "coeff_leading", "coeff_fitted", "rel_err"])
            for r in self.rows:
                w.writerow([r["component"], r["dim"]] + [format(r[k], ".17g") for k in
                                                         ("coeff_leading", "coeff_fitted", "rel_err")])
