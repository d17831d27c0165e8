"""Closed-form Riemannian primitives for the three model manifolds.

Points are numpy arrays whose last axis holds the intrinsic coordinates:
one angle for the circle, ``(u, v)`` for the flat torus and
``(colatitude, longitude)`` for the round 2-sphere.  All distance-type
functions broadcast over the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CutPairError, ResolutionTooSmall

TWO_PI = 2.0 * math.pi

CUT_TOL = 1e-9
POINT_TOL = 1e-12


@dataclass(frozen=True)
class ManifoldModel:
    """Tagged descriptor of a model geometry.

    ``kind`` is one of ``"circle"``, ``"torus"`` or ``"sphere"``.  Circles and
    spheres use ``radius``; the torus uses ``lengths = (L1, L2)``.
    """

    kind: str
    radius: float = 1.0
    lengths: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "sphere"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "torus":
            if len(self.lengths) != 2 or min(self.lengths) <= 0:
                raise ValueError("torus lengths must be two positive numbers")
            object.__setattr__(self, "lengths", (float(self.lengths[0]), float(self.lengths[1])))
        elif not self.radius > 0:
            raise ValueError("radius must be positive")

    @classmethod
    def circle(cls, radius: float = 1.0) -> "ManifoldModel":
        return cls("circle", radius=float(radius))

    @classmethod
    def torus(cls, l1: float = 1.0, l2: float = 1.0) -> "ManifoldModel":
        return cls("torus", lengths=(float(l1), float(l2)))

    @classmethod
    def sphere(cls, radius: float = 1.0) -> "ManifoldModel":
        return cls("sphere", radius=float(radius))

    @classmethod
    def parse(cls, text: str) -> "ManifoldModel":
        """Parse ``circle:R``, ``torus:L1,L2`` or ``sphere:R``."""
        kind, _, args = text.strip().partition(":")
        kind = kind.lower()
        vals = [float(a) for a in args.split(",") if a.strip()] if args else []
        if len(vals) > (2 if kind == "torus" else 1):
            raise ValueError(f"too many parameters in model {text!r}")
        if kind == "circle":
            return cls.circle(*(vals or [1.0]))
        if kind == "torus":
            if len(vals) == 1:
                vals = vals * 2
            return cls.torus(*(vals or [1.0, 1.0]))
        if kind == "sphere":
            return cls.sphere(*(vals or [1.0]))
        raise ValueError(f"cannot parse model {text!r}")

    def label(self) -> str:
        if self.kind == "torus":
            return "torus:%r,%r" % self.lengths
        return f"{self.kind}:{self.radius!r}"

    @property
    def dim(self) -> int:
        return 1 if self.kind == "circle" else 2

    @property
    def ncoords(self) -> int:
        return self.dim


def model_constants(model: ManifoldModel) -> dict:
    """Return ``{dim, inj, diam, vol}`` for ``model``."""
    if model.kind == "circle":
        R = model.radius
        return {"dim": 1, "inj": math.pi * R, "diam": math.pi * R, "vol": TWO_PI * R}
    if model.kind == "torus":
        l1, l2 = model.lengths
        return {"dim": 2, "inj": min(l1, l2) / 2, "diam": math.hypot(l1, l2) / 2, "vol": l1 * l2}
    R = model.radius
    return {"dim": 2, "inj": math.pi * R, "diam": math.pi * R, "vol": 4 * math.pi * R * R}


# -- points -----------------------------------------------------------------


def as_points(model: ManifoldModel, x) -> np.ndarray:
    """Coerce ``x`` to a float array with a trailing coordinate axis."""
    x = np.asarray(x, dtype=float)
    if model.kind == "circle" and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != model.ncoords:
        raise ValueError(f"expected {model.ncoords} coordinates, got shape {x.shape}")
    return x


def _mod(x, period):
    """x mod period in [0, period); np.mod can round tiny negatives up to period."""
    m = np.mod(x, period)
    return np.where(m >= period, 0.0, m)


def normalize(model: ManifoldModel, x) -> np.ndarray:
    """Map coordinates into the canonical fundamental domain."""
    x = as_points(model, x).copy()
    if model.kind == "circle":
        x[..., 0] = _mod(x[..., 0], TWO_PI)
    elif model.kind == "torus":
        for i, L in enumerate(model.lengths):
            x[..., i] = _mod(x[..., i], L)
    else:
        x = from_cartesian(to_cartesian(x))
    return x


def points_equal(model: ManifoldModel, x, y, tol: float = POINT_TOL) -> bool:
    a, b = normalize(model, x), normalize(model, y)
    if model.kind == "sphere":
        return bool(np.all(np.linalg.norm(to_cartesian(a) - to_cartesian(b), axis=-1) <= tol))
    diff = np.abs(a - b)
    period = np.array([TWO_PI] if model.kind == "circle" else model.lengths)
    diff = np.minimum(diff, period - diff)
    return bool(np.all(diff <= tol))


def to_cartesian(x) -> np.ndarray:
    """Unit vectors in R^3 for sphere coordinates ``(colatitude, longitude)``."""
    x = np.asarray(x, dtype=float)
    th, ph = x[..., 0], x[..., 1]
    s = np.sin(th)
    return np.stack([s * np.cos(ph), s * np.sin(ph), np.cos(th)], axis=-1)


def from_cartesian(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    rho = np.hypot(v[..., 0], v[..., 1])
    th = np.arctan2(rho, v[..., 2])
    ph = _mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
    # longitude is meaningless at the poles; pin it to zero
    ph = np.where(rho <= 1e-15, 0.0, ph)
    return np.stack([th, ph], axis=-1)


def _wrap(d, period):
    """Signed representative of ``d`` modulo ``period`` in [-period/2, period/2)."""
    return np.mod(d + 0.5 * period, period) - 0.5 * period


def displacement(model: ManifoldModel, x, y) -> np.ndarray:
    """Shortest signed displacement from x to y on a flat model, in length units."""
    x, y = as_points(model, x), as_points(model, y)
    if model.kind == "circle":
        return model.radius * _wrap(y - x, TWO_PI)
    if model.kind == "torus":
        L = np.array(model.lengths)
        return _wrap(y - x, L)
    raise ValueError("displacement is defined on flat models only")


def angle_between(a, b) -> np.ndarray:
    """Angle between unit vectors, stable for nearly equal and nearly antipodal pairs."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def distance(model: ManifoldModel, x, y) -> np.ndarray:
    """Geodesic distance, broadcasting over leading axes."""
    x, y = as_points(model, x), as_points(model, y)
    if model.kind == "circle":
        return np.abs(displacement(model, x, y))[..., 0]
    if model.kind == "torus":
        return np.linalg.norm(displacement(model, x, y), axis=-1)
    return model.radius * angle_between(to_cartesian(x), to_cartesian(y))


def is_cut_pair(model: ManifoldModel, x, y) -> np.ndarray:
    """True where (x, y) is not joined by a unique minimizing geodesic."""
    if model.kind == "torus":
        disp = np.abs(displacement(model, x, y))
        half = np.array(model.lengths) / 2
        return np.any(disp >= half - CUT_TOL, axis=-1)
    return distance(model, x, y) >= model_constants(model)["inj"] - CUT_TOL


# -- geodesics ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Geodesic:
    """Constant-speed geodesic on [0, 1]; ``evaluate(s)`` returns coordinates."""

    start: np.ndarray
    end: np.ndarray
    length: float
    evaluate: Callable[[float], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, s):
        return self.evaluate(s)


@dataclass(frozen=True, eq=False)
class GeodesicFamily:
    """One-parameter family of minimizing geodesics, indexed by an initial angle.

    ``evaluate(alpha, s)`` is the point at parameter ``s`` on the geodesic
    leaving ``start`` in direction ``alpha`` in [0, 2*pi).
    """

    start: np.ndarray
    end: np.ndarray
    length: float
    dim: int
    evaluate: Callable[[float, float], np.ndarray] = field(repr=False, compare=False)

    def member(self, alpha: float) -> Geodesic:
        return Geodesic(self.start, self.end, self.length, lambda s: self.evaluate(alpha, s))


def _flat_geodesic(model, x, disp):
    x = np.array(x, dtype=float)
    scale = model.radius if model.kind == "circle" else 1.0
    step = disp / scale
    end = normalize(model, x + step)
    length = float(np.linalg.norm(disp))

    def evaluate(s):
        return normalize(model, x + np.multiply.outer(np.asarray(s, dtype=float), step))

    return Geodesic(x, end, length, evaluate)


def _tangent_frame(a):
    """Two orthonormal vectors spanning the tangent plane of S^2 at ``a``."""
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = helper - np.dot(helper, a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return e1, e2


def exp_point(model: ManifoldModel, x, r: float, angle: float = 0.0) -> np.ndarray:
    """Point reached from ``x`` along the unit direction at ``angle`` after length ``r``."""
    x = normalize(model, x)
    if model.kind == "circle":
        return normalize(model, x + r / model.radius)
    if model.kind == "torus":
        return normalize(model, x + r * np.array([np.cos(angle), np.sin(angle)]))
    a = to_cartesian(x)
    e1, e2 = _tangent_frame(a)
    v = np.cos(angle) * e1 + np.sin(angle) * e2
    rho = r / model.radius
    return normalize(model, from_cartesian(np.cos(rho) * a + np.sin(rho) * v))


def antipode(model: ManifoldModel, x) -> np.ndarray:
    """The farthest point from ``x`` (all half-periods on the torus)."""
    x = normalize(model, x)
    if model.kind == "circle":
        return normalize(model, x + np.pi)
    if model.kind == "torus":
        return normalize(model, x + 0.5 * np.asarray(model.lengths))
    return normalize(model, from_cartesian(-to_cartesian(x)))


def minimizing_geodesics(model: ManifoldModel, x, y):
    """All length-minimizing geodesics from x to y.

    Returns a list of :class:`Geodesic` or, for antipodal points on the
    sphere, a :class:`GeodesicFamily` of dimension 1.
    """
    x, y = normalize(model, x), normalize(model, y)
    if model.kind == "circle":
        d = displacement(model, x, y)
        half = math.pi * model.radius
        if abs(abs(d[0]) - half) <= POINT_TOL * max(1.0, half):
            return [_flat_geodesic(model, x, np.array([half])),
                    _flat_geodesic(model, x, np.array([-half]))]
        return [_flat_geodesic(model, x, d)]
    if model.kind == "torus":
        d = displacement(model, x, y)
        options = []
        for i, L in enumerate(model.lengths):
            if abs(abs(d[i]) - L / 2) <= POINT_TOL * max(1.0, L):
                options.append([L / 2, -L / 2])
            else:
                options.append([d[i]])
        return [_flat_geodesic(model, x, np.array([a, b])) for a in options[0] for b in options[1]]

    R = model.radius
    a, b = to_cartesian(x), to_cartesian(y)
    if np.linalg.norm(a + b) <= POINT_TOL:
        e1, e2 = _tangent_frame(a)

        def family(alpha, s):
            v = math.cos(alpha) * e1 + math.sin(alpha) * e2
            s = np.asarray(s, dtype=float)[..., None]
            return from_cartesian(np.cos(math.pi * s) * a + np.sin(math.pi * s) * v)

        return GeodesicFamily(x, y, math.pi * R, 1, family)
    ang = float(angle_between(a, b))
    if ang <= POINT_TOL:
        return [Geodesic(x, y, 0.0, lambda s: np.broadcast_to(x, np.shape(s) + (2,)).copy())]
    v = b - np.dot(a, b) * a
    v /= np.linalg.norm(v)

    def evaluate(s):
        s = np.asarray(s, dtype=float)[..., None]
        return from_cartesian(np.cos(ang * s) * a + np.sin(ang * s) * v)

    return [Geodesic(x, y, R * ang, evaluate)]


# -- van Vleck determinant ----------------------------------------------------


def sinc_ratio(rho):
    """sin(rho)/rho with the removable singularity filled in."""
    rho = np.asarray(rho, dtype=float)
    return np.sinc(rho / math.pi)


def van_vleck_theta(model: ManifoldModel, x, y) -> np.ndarray:
    """Van Vleck-Morette determinant Theta(x, y) for non-cut pairs."""
    if np.any(is_cut_pair(model, x, y)):
        raise CutPairError("van Vleck determinant requested at a cut pair")
    r = distance(model, x, y)
    if model.kind == "sphere":
        return sinc_ratio(r / model.radius)
    return np.ones_like(r)


# -- quadrature grids ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and positive weights approximating the Riemannian volume measure."""

    model: ManifoldModel
    nodes: np.ndarray
    weights: np.ndarray
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.weights)

    def label(self) -> str:
        return "x".join(str(s) for s in self.shape)


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def build_grid(model: ManifoldModel, resolution) -> QuadratureGrid:
    """Quadrature grid for the volume measure.

    ``resolution`` is an int, or a pair for the torus (n1, n2) and the sphere
    (n_lat, n_lon).  A scalar sphere resolution n means n x 2n.
    """
    res = tuple(int(r) for r in np.atleast_1d(resolution))
    if min(res) < 4:
        raise ResolutionTooSmall(f"resolution {resolution} below the minimum of 4")
    if model.kind == "circle":
        n = res[0]
        nodes = (TWO_PI * np.arange(n) / n)[:, None]
        weights = np.full(n, TWO_PI * model.radius / n)
        return QuadratureGrid(model, nodes, weights, (n,))
    if model.kind == "torus":
        n1, n2 = res if len(res) == 2 else (res[0], res[0])
        l1, l2 = model.lengths
        u, v = np.meshgrid(l1 * np.arange(n1) / n1, l2 * np.arange(n2) / n2, indexing="ij")
        nodes = np.stack([u.ravel(), v.ravel()], axis=-1)
        weights = np.full(n1 * n2, l1 * l2 / (n1 * n2))
        return QuadratureGrid(model, nodes, weights, (n1, n2))
    n_lat, n_lon = res if len(res) == 2 else (res[0], 2 * res[0])
    c, w = np.polynomial.legendre.leggauss(n_lat)
    th = np.arccos(c[::-1])
    w = w[::-1]
    ph = TWO_PI * np.arange(n_lon) / n_lon
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    nodes = np.stack([TH.ravel(), PH.ravel()], axis=-1)
    R = model.radius
    weights = np.repeat(w * TWO_PI * R * R / n_lon, n_lon)
    return QuadratureGrid(model, nodes, weights, (n_lat, n_lon))


def pairwise_distance(grid: QuadratureGrid, other: QuadratureGrid | None = None) -> np.ndarray:
    """Matrix of distances between grid nodes (rows: first grid)."""
    other = grid if other is None else other
    return distance(grid.model, grid.nodes[:, None, :], other.nodes[None, :, :])
