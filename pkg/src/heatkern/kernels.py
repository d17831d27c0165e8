"""Euclidean kernel, cutoff, heat coefficients, approximate and reference heat kernels.

Conventions: ``L = Delta + V`` with ``Delta`` the non-negative Laplace-Beltrami
operator, heat kernels solve ``(d/dt + L) p = 0`` and the short-time expansion
is normalised as ``p_t / e_t ~ sum_j t^j Phi_j / j!``.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import geometry as geo
from .errors import (
    CutPairError,
    NonpositiveTime,
    OrderUnsupported,
    TruncationNotConverged,
)
from .geometry import ManifoldModel, QuadratureGrid

# oracle truncation tolerances
SPECTRAL_TAIL = 1e-16
LEGENDRE_TAIL = 1e-15
MAX_TERMS = 200_000

MAX_ORDER = {"circle": 2, "torus": 2, "sphere": 1}


def _check_time(t):
    if not np.all(np.asarray(t) > 0):
        raise NonpositiveTime(f"time must be positive, got {t}")


# -- cutoff -------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth cutoff equal to 1 on [0, r0] and 0 on [r1, inf)."""

    r0: float
    r1: float

    def __post_init__(self):
        if not 0 < self.r0 < self.r1:
            raise ValueError("cutoff radii must satisfy 0 < r0 < r1")

    @classmethod
    def default(cls, model: ManifoldModel) -> "CutoffProfile":
        inj = geo.model_constants(model)["inj"]
        return cls(0.4 * inj, 0.8 * inj)

    def check(self, model: ManifoldModel) -> "CutoffProfile":
        if self.r1 >= geo.model_constants(model)["inj"]:
            raise ValueError("cutoff support must lie inside the injectivity radius")
        return self

    def __call__(self, r):
        return cutoff(self, r)


def _bump(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff(profile: CutoffProfile, r):
    """Value of the smooth cutoff at distance ``r``."""
    r = np.asarray(r, dtype=float)
    s = np.clip((profile.r1 - r) / (profile.r1 - profile.r0), 0.0, 1.0)
    a, b = _bump(s), _bump(1.0 - s)
    return a / (a + b)


# -- operators ----------------------------------------------------------------


@dataclass(frozen=True)
class OperatorSpec:
    """Scalar Laplace-type operator: ``laplace`` or ``schroedinger`` (circle only).

    The potential is the trigonometric polynomial
    ``V(theta) = sum_k cos_coeffs[k] cos(k theta) + sum_k sin_coeffs[k-1] sin(k theta)``.
    """

    kind: str = "laplace"
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("laplace", "schroedinger"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))

    @classmethod
    def laplace(cls) -> "OperatorSpec":
        return cls("laplace")

    @classmethod
    def schroedinger(cls, cos_coeffs=(0.0, 1.0), sin_coeffs=()) -> "OperatorSpec":
        return cls("schroedinger", tuple(cos_coeffs), tuple(sin_coeffs))

    @classmethod
    def parse(cls, text: str) -> "OperatorSpec":
        """Parse ``laplace`` or ``schroedinger:a0,a1,...[;b1,b2,...]``."""
        kind, _, args = text.strip().partition(":")
        kind = kind.lower()
        if kind == "laplace":
            return cls.laplace()
        if kind == "schroedinger":
            cos_part, _, sin_part = args.partition(";")
            cos_c = [float(a) for a in cos_part.split(",") if a.strip()] or [0.0, 1.0]
            sin_c = [float(a) for a in sin_part.split(",") if a.strip()]
            return cls.schroedinger(cos_c, sin_c)
        raise ValueError(f"cannot parse operator {text!r}")

    def label(self) -> str:
        if self.kind == "laplace":
            return "laplace"
        s = "schroedinger:" + " ".join(repr(c) for c in self.cos_coeffs)
        if self.sin_coeffs:
            s += ";" + " ".join(repr(c) for c in self.sin_coeffs)
        return s

    @property
    def has_potential(self) -> bool:
        return self.kind == "schroedinger" and any(self.cos_coeffs + self.sin_coeffs)

    @property
    def degree(self) -> int:
        return max(len(self.cos_coeffs) - 1, len(self.sin_coeffs), 0)

    def potential(self, theta, derivative: int = 0):
        """V or its ``derivative``-th angular derivative at angle ``theta``."""
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        if self.kind != "schroedinger":
            return out
        for k, a in enumerate(self.cos_coeffs):
            if derivative == 0 or k > 0:
                out = out + a * k**derivative * np.cos(k * theta + derivative * math.pi / 2)
        for k, b in enumerate(self.sin_coeffs, start=1):
            out = out + b * k**derivative * np.sin(k * theta + derivative * math.pi / 2)
        return out

    def fourier(self) -> dict[int, complex]:
        """Coefficients v_m with V = sum_m v_m exp(i m theta)."""
        v: dict[int, complex] = {}
        for k, a in enumerate(self.cos_coeffs):
            if k == 0:
                v[0] = v.get(0, 0) + a
            else:
                v[k] = v.get(k, 0) + a / 2
                v[-k] = v.get(-k, 0) + a / 2
        for k, b in enumerate(self.sin_coeffs, start=1):
            v[k] = v.get(k, 0) - 0.5j * b
            v[-k] = v.get(-k, 0) + 0.5j * b
        return v

    def minimum(self) -> float:
        if self.kind != "schroedinger":
            return 0.0
        th = np.linspace(0, geo.TWO_PI, 8192, endpoint=False)
        return float(self.potential(th).min())


def _check_operator(model: ManifoldModel, op: OperatorSpec):
    if op.kind == "schroedinger" and model.kind != "circle":
        raise OrderUnsupported("potentials are supported on the circle only")


# -- Euclidean kernel -----------------------------------------------------------


def euclidean_kernel(model: ManifoldModel, t, x, y):
    """(4 pi t)^(-n/2) exp(-d(x,y)^2 / 4t)."""
    _check_time(t)
    return euclidean_from_distance(model.dim, t, geo.distance(model, x, y))


def euclidean_from_distance(n: int, t, r):
    _check_time(t)
    r = np.asarray(r, dtype=float)
    return (4 * math.pi * t) ** (-n / 2) * np.exp(-r * r / (4 * t))


# -- heat coefficients ------------------------------------------------------------

_GL_S, _GL_W = geo.gauss_legendre(0.0, 1.0, 32)


def _q_over_rho(rho):
    """(1/rho - cot rho) / rho, series near zero."""
    rho = np.asarray(rho, dtype=float)
    small = np.abs(rho) < 0.1
    out = np.empty_like(rho)
    r2 = rho[small] ** 2
    out[small] = 1 / 3 + r2 / 45 + 2 * r2**2 / 945 + r2**3 / 4725 + 2 * r2**4 / 93555
    rb = rho[~small]
    out[~small] = (1 / rb - 1 / np.tan(rb)) / rb
    return out


def _csc2_minus(rho):
    """csc(rho)^2 - 1/rho^2, series near zero."""
    rho = np.asarray(rho, dtype=float)
    small = np.abs(rho) < 0.1
    out = np.empty_like(rho)
    r2 = rho[small] ** 2
    out[small] = 1 / 3 + r2 / 15 + 2 * r2**2 / 189 + r2**3 / 675 + 2 * r2**4 / 10395
    rb = rho[~small]
    out[~small] = 1 / np.sin(rb) ** 2 - 1 / rb**2
    return out


def _transport_source(rho):
    """-Theta^(1/2) * Delta(Theta^(-1/2)) on the unit sphere, as a function of distance.

    With g = log Theta^(-1/2), q = 1/rho - cot rho:
    g' = q/2, g'' = (csc^2 - 1/rho^2)/2, and the radial Laplacian gives
    B = g'' + g'^2 + cot(rho) g' = h/2 - q^2/4 + q/(2 rho).
    """
    qr = _q_over_rho(rho)
    q = qr * rho
    return 0.5 * _csc2_minus(rho) - 0.25 * q * q + 0.5 * qr


def _sphere_phi1_direct(rho):
    """Phi_1 on the unit sphere: Theta^(-1/2)(rho) * int_0^1 B(s rho) ds."""
    rho = np.asarray(rho, dtype=float)
    vals = _transport_source(np.multiply.outer(rho, _GL_S)) @ _GL_W
    return vals / np.sqrt(geo.sinc_ratio(rho))


_PHI1_TABLE_MAX = 0.9 * math.pi


@functools.lru_cache(maxsize=1)
def _sphere_phi1_interpolant():
    return np.polynomial.chebyshev.Chebyshev.interpolate(
        _sphere_phi1_direct, 90, domain=[0.0, _PHI1_TABLE_MAX])


def sphere_phi1_unit(rho):
    rho = np.asarray(rho, dtype=float)
    inside = rho <= _PHI1_TABLE_MAX
    out = np.empty_like(rho)
    out[inside] = _sphere_phi1_interpolant()(rho[inside])
    if np.any(~inside):
        out[~inside] = _sphere_phi1_direct(rho[~inside])
    return out


def _circle_potential_coefficients(model, op, nu, x, y):
    """Phi_1, Phi_2 on a circle with potential, via the flat transport recursion."""
    R = model.radius
    th0 = geo.as_points(model, x)[..., 0]
    h = geo.displacement(model, x, y)[..., 0] / R  # signed angle
    th0, h = np.broadcast_arrays(th0, h)
    s = _GL_S
    path = th0[..., None] + h[..., None] * s
    mean_v = op.potential(path) @ _GL_W
    out = [-mean_v]
    if nu >= 2:
        # L a_1 at gamma(sigma) = int u^2 V''(x + u sigma h) du - V(gamma(sigma)) int V(x + u sigma h) du
        inner = th0[..., None, None] + h[..., None, None] * np.multiply.outer(s, s)  # [..., sigma, u]
        vpp = op.potential(inner, derivative=2) / R**2
        la1 = (vpp * s**2) @ _GL_W - op.potential(path) * (op.potential(inner) @ _GL_W)
        a2 = -(la1 * s) @ _GL_W
        out.append(2.0 * a2)
    return out


def _coefficient_list(model, op, nu, x, y, r=None):
    """Phi_0..Phi_nu at the given pairs (assumed non-cut)."""
    if nu > MAX_ORDER[model.kind]:
        raise OrderUnsupported(f"order {nu} unsupported on the {model.kind}")
    if r is None:
        r = geo.distance(model, x, y)
    if model.kind == "sphere":
        rho = r / model.radius
        coeffs = [1.0 / np.sqrt(geo.sinc_ratio(rho))]
        if nu >= 1:
            coeffs.append(sphere_phi1_unit(rho) / model.radius**2)
        return coeffs
    coeffs = [np.ones_like(r)]
    if nu >= 1:
        if op.has_potential:
            coeffs += _circle_potential_coefficients(model, op, nu, x, y)
        else:
            coeffs += [np.zeros_like(r)] * nu
    return coeffs


def heat_coefficient(model: ManifoldModel, op: OperatorSpec, j: int, x, y):
    """Heat coefficient Phi_j(x, y) in the ``t^j Phi_j / j!`` normalisation."""
    _check_operator(model, op)
    if j < 0 or j > MAX_ORDER[model.kind]:
        raise OrderUnsupported(f"Phi_{j} unsupported on the {model.kind}")
    if np.any(geo.is_cut_pair(model, x, y)):
        raise CutPairError("heat coefficients are defined off the cut locus only")
    return _coefficient_list(model, op, j, x, y)[j]


def series_sum(coeffs, t):
    return sum(t**j * c / math.factorial(j) for j, c in enumerate(coeffs))


def approximate_kernel(model, op, nu, profile, t, x, y):
    """Approximate heat kernel chi(d) e_t sum_{j<=nu} t^j Phi_j / j!."""
    _check_time(t)
    _check_operator(model, op)
    if nu > MAX_ORDER[model.kind]:
        raise OrderUnsupported(f"order {nu} unsupported on the {model.kind}")
    x, y = geo.as_points(model, x), geo.as_points(model, y)
    x, y = np.broadcast_arrays(x, y)
    r = geo.distance(model, x, y)
    out = np.zeros_like(r)
    live = r < profile.r1
    if np.any(live):
        rl = r[live]
        coeffs = _coefficient_list(model, op, nu, x[live], y[live], rl)
        out[live] = cutoff(profile, rl) * euclidean_from_distance(model.dim, t, rl) * series_sum(coeffs, t)
    return out


def approximate_kernel_radial(model, nu, profile, t, r):
    """Approximate kernel of L = Delta as a function of distance alone."""
    _check_time(t)
    if nu > MAX_ORDER[model.kind]:
        raise OrderUnsupported(f"order {nu} unsupported on the {model.kind}")
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    live = r < profile.r1
    rl = r[live]
    if model.kind == "sphere":
        rho = rl / model.radius
        series = 1.0 / np.sqrt(geo.sinc_ratio(rho))
        if nu >= 1:
            series = series + t * sphere_phi1_unit(rho) / model.radius**2
    else:
        series = 1.0
    out[live] = cutoff(profile, rl) * euclidean_from_distance(model.dim, t, rl) * series
    return out


# -- kernel matrices --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Kernel values on grid x grid at time ``t`` (rows: first argument)."""

    grid: QuadratureGrid
    t: float
    values: np.ndarray
    op_label: str = "laplace"
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# %s,%s,%s,%s\n" % (self.grid.model.label(), self.op_label,
                                          format(self.t, ".17g"), self.grid.label()))
            w = csv.writer(fh, lineterminator="\n")
            for row in self.values:
                w.writerow([format(v, ".17g") for v in row])

    @staticmethod
    def read_csv(path) -> tuple[dict, np.ndarray]:
        with open(path) as fh:
            header = fh.readline().lstrip("# ").strip()
            values = np.loadtxt(fh, delimiter=",", ndmin=2)
        model, op, t, grid = header.rsplit(",", 3) if header.count(",") > 3 else header.split(",")
        return {"model": model, "op": op, "t": float(t), "grid": grid}, values


def approximate_kernel_matrix(model, op, nu, profile, t, grid: QuadratureGrid) -> KernelMatrix:
    vals = approximate_kernel(model, op, nu, profile, t, grid.nodes[:, None, :], grid.nodes[None, :, :])
    return KernelMatrix(grid, float(t), vals, op.label(), {"nu": nu})


# -- reference heat kernels -------------------------------------------------------


def _image_count(t, period):
    return int(math.ceil(math.sqrt(4 * t * 40 * math.log(10)) / period)) + 1


def line_image_ratio_tail(s, t, period):
    """Sum over nonzero images of exp(-((s + kP)^2 - s^2) / 4t); s in [-P/2, P/2]."""
    s = np.asarray(s, dtype=float)
    kmax = _image_count(t, period)
    tail = np.zeros_like(s)
    for k in range(kmax, 0, -1):
        for kk in (k, -k):
            tail = tail + np.exp(-(2 * s * kk * period + (kk * period) ** 2) / (4 * t))
    return tail


def periodic_image_kernel(s, t, period):
    """1D periodic heat kernel by the method of images."""
    s = np.asarray(s, dtype=float)
    kmax = _image_count(t, period)
    out = np.zeros_like(s)
    for k in range(kmax, -kmax - 1, -1):
        out = out + np.exp(-((s + k * period) ** 2) / (4 * t))
    return out / math.sqrt(4 * math.pi * t)


def periodic_fourier_kernel(s, t, period, max_terms=MAX_TERMS):
    """1D periodic heat kernel by its eigenfunction expansion."""
    s = np.asarray(s, dtype=float)
    omega = 2 * math.pi / period
    kmax = int(math.ceil(math.sqrt(-math.log(SPECTRAL_TAIL) / t) / omega)) + 1
    if kmax > max_terms:
        raise TruncationNotConverged(f"Fourier sum needs {kmax} terms at t={t}")
    out = np.full_like(s, 1.0)
    for k in range(kmax, 0, -1):
        out = out + 2 * math.exp(-((omega * k) ** 2) * t) * np.cos(omega * k * s)
    return out / period


def _flat_axes(model):
    if model.kind == "circle":
        return [geo.TWO_PI * model.radius]
    return list(model.lengths)


def flat_heat_kernel(model, t, x, y, method="images"):
    _check_time(t)
    disp = geo.displacement(model, x, y)
    out = 1.0
    for i, P in enumerate(_flat_axes(model)):
        f = periodic_image_kernel if method == "images" else periodic_fourier_kernel
        out = out * f(disp[..., i], t, P)
    return out


def sphere_legendre_kernel(r, t, radius=1.0, max_terms=MAX_TERMS):
    """Legendre series for the 2-sphere heat kernel (double precision)."""
    _check_time(t)
    tu = t / radius**2
    u = np.cos(np.asarray(r, dtype=float) / radius)
    lmax = 0
    while (2 * lmax + 1) * math.exp(-lmax * (lmax + 1) * tu) >= LEGENDRE_TAIL or lmax < 2:
        lmax += 1
        if lmax > max_terms:
            raise TruncationNotConverged(f"Legendre series needs more than {max_terms} terms at t={t}")
    p_prev, p_cur = np.ones_like(u), u.copy()
    total = p_prev + 3 * math.exp(-2 * tu) * p_cur
    for l in range(1, lmax):
        p_prev, p_cur = p_cur, ((2 * l + 1) * u * p_cur - l * p_prev) / (l + 1)
        total = total + (2 * l + 3) * math.exp(-(l + 1) * (l + 2) * tu) * p_cur
    return total / (4 * math.pi * radius**2)


def _sphere_ratio_mp_single(rho: float, tu: float, digits: int = 22):
    """High-precision (p_t / e_t, p_t) on the unit sphere at distance rho, time tu."""
    expo = rho * rho / (4 * tu)
    loss = expo / math.log(10) + max(0.0, math.log10(1 / (4 * math.pi * tu)))
    dps = int(loss) + digits + 10
    with mpmath.workdps(dps):
        t = mpmath.mpf(tu)
        u = mpmath.cos(mpmath.mpf(rho))
        e_t = mpmath.exp(-mpmath.mpf(rho) ** 2 / (4 * t)) / (4 * mpmath.pi * t)
        thresh = e_t * 4 * mpmath.pi * mpmath.mpf(10) ** (-digits)
        l_turn = int(1 / math.sqrt(2 * tu)) + 2
        p_prev, p_cur = mpmath.mpf(1), u
        total = 1 + 3 * mpmath.exp(-2 * t) * u
        l = 1
        while True:
            p_prev, p_cur = p_cur, ((2 * l + 1) * u * p_cur - l * p_prev) / (l + 1)
            l += 1
            w = (2 * l + 1) * mpmath.exp(-l * (l + 1) * t)
            total += w * p_cur
            if l > l_turn and w < thresh:
                break
            if l > MAX_TERMS:
                raise TruncationNotConverged("high-precision Legendre series did not converge")
        p = total / (4 * mpmath.pi)
        return float(p / e_t), float(p)


def sphere_heat_ratio(r, t, radius=1.0):
    """p_t / e_t on the sphere at distances ``r``; exact to ~1e-15 relative at any t."""
    _check_time(t)
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    uniq, inv = np.unique(np.round(flat / radius, 14), return_inverse=True)
    vals = np.array([_sphere_ratio_mp_single(float(rho), t / radius**2)[0] for rho in uniq])
    return vals[inv].reshape(r.shape)


@functools.lru_cache(maxsize=16)
def sphere_ratio_interpolant(t: float, radius: float = 1.0, tol: float = 1e-12):
    """Chebyshev interpolant of log(p_t/e_t) in the distance on [0, pi R].

    The ratio is analytic up to and including the antipode, so the degree is
    doubled from 48 until values at off-node distances agree to ``tol``.
    """
    _check_time(t)
    rmax = math.pi * radius

    def logratio(r):
        return np.log(sphere_heat_ratio(np.asarray(r), t, radius))

    probe = (np.arange(23) + 0.37) * rmax / 23
    exact = logratio(probe)
    deg = 48
    while True:
        cheb = np.polynomial.chebyshev.Chebyshev.interpolate(logratio, deg, domain=[0.0, rmax])
        if np.max(np.abs(cheb(probe) - exact)) < tol or deg >= 768:
            return cheb
        deg *= 2


def sphere_heat_ratio_fast(r, t, radius=1.0):
    """Interpolated p_t/e_t on the sphere, for large batches of distances."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, math.pi * radius)
    return np.exp(sphere_ratio_interpolant(float(t), float(radius))(r))


def sphere_heat_kernel_precise(r, t, radius=1.0):
    """Sphere heat kernel at distances ``r`` without cancellation loss."""
    r = np.asarray(r, dtype=float)
    return sphere_heat_ratio(r, t, radius) * euclidean_from_distance(2, t, r)


class CircleGalerkin:
    """Fourier-Galerkin discretisation of Delta + V on the circle of radius R.

    Basis exp(i k theta) / sqrt(2 pi R), |k| <= K.
    """

    def __init__(self, model: ManifoldModel, op: OperatorSpec, K: int):
        self.model, self.op, self.K = model, op, K
        R = model.radius
        ks = np.arange(-K, K + 1)
        H = np.diag((ks / R) ** 2).astype(complex)
        for m, v in op.fourier().items():
            if abs(m) <= 2 * K:
                H += v * np.eye(2 * K + 1, k=-m)
        self.ks = ks
        self.eigvals, self.eigvecs = np.linalg.eigh(H)

    @staticmethod
    def size_for(model: ManifoldModel, op: OperatorSpec, t: float) -> int:
        vmin = op.minimum()
        need = math.sqrt(max(-math.log(SPECTRAL_TAIL) / t + vmin, 1.0)) * model.radius
        K = int(math.ceil(need)) + 8 + 2 * op.degree
        if K > 4096:
            raise TruncationNotConverged(f"Galerkin basis of size {2 * K + 1} exceeds the budget at t={t}")
        return K

    def _basis(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.exp(1j * np.multiply.outer(theta, self.ks)) / math.sqrt(geo.TWO_PI * self.model.radius)

    def kernel(self, t, x, y):
        _check_time(t)
        bx = self._basis(geo.as_points(self.model, x)[..., 0]) @ self.eigvecs
        by = self._basis(geo.as_points(self.model, y)[..., 0]) @ self.eigvecs
        decay = np.exp(-self.eigvals * t)
        return np.real(np.sum(bx * decay * np.conj(by), axis=-1))

    def kernel_matrix(self, t, grid: QuadratureGrid):
        bx = self._basis(grid.nodes[:, 0]) @ self.eigvecs
        decay = np.exp(-self.eigvals * t)
        return np.real((bx * decay) @ np.conj(bx).T)

    def evolve_constant(self, t, theta):
        """(e^{-tL} 1)(theta) computed in the Galerkin basis."""
        one = np.zeros(2 * self.K + 1, dtype=complex)
        one[self.K] = math.sqrt(geo.TWO_PI * self.model.radius)
        coef = self.eigvecs @ (np.exp(-self.eigvals * t) * (self.eigvecs.conj().T @ one))
        return np.real(self._basis(theta) @ coef)


@functools.lru_cache(maxsize=32)
def circle_galerkin(model: ManifoldModel, op: OperatorSpec, K: int) -> CircleGalerkin:
    return CircleGalerkin(model, op, K)


def galerkin_for(model, op, t) -> CircleGalerkin:
    return circle_galerkin(model, op, CircleGalerkin.size_for(model, op, t))


def heat_kernel(model: ManifoldModel, op: OperatorSpec, t, x, y):
    """Reference heat kernel p_t^L(x, y) at arbitrary point pairs."""
    _check_time(t)
    _check_operator(model, op)
    if op.has_potential:
        return galerkin_for(model, op, t).kernel(t, x, y)
    if model.kind == "sphere":
        return sphere_legendre_kernel(geo.distance(model, x, y), t, model.radius)
    return flat_heat_kernel(model, t, x, y)


def reference_kernel(model: ManifoldModel, op: OperatorSpec, t, grid: QuadratureGrid) -> KernelMatrix:
    """Independent oracle for p_t^L on ``grid``.

    Flat models with L = Delta evaluate both the image sum and the Fourier sum.
    ``meta`` stores their sup-norm discrepancy relative to the sup of the
    kernel, and the pointwise relative discrepancy (the latter is limited by
    double precision wherever p_t underflows the O(1) Fourier terms).
    """
    _check_time(t)
    _check_operator(model, op)
    xs, ys = grid.nodes[:, None, :], grid.nodes[None, :, :]
    meta = {}
    if op.has_potential:
        gal = galerkin_for(model, op, t)
        vals = gal.kernel_matrix(t, grid)
        meta["galerkin_size"] = 2 * gal.K + 1
    elif model.kind == "sphere":
        vals = sphere_legendre_kernel(geo.pairwise_distance(grid), t, model.radius)
    else:
        vals = flat_heat_kernel(model, t, xs, ys, "images")
        four = flat_heat_kernel(model, t, xs, ys, "fourier")
        diff = np.abs(four - vals)
        meta["dual_oracle_discrepancy"] = float(diff.max() / np.abs(vals).max())
        # pairs where the kernel underflows carry no pointwise information
        pos = vals > 0
        meta["dual_oracle_pointwise"] = float(np.max(diff[pos] / vals[pos]))
    return KernelMatrix(grid, float(t), vals, op.label(), meta)


def heat_ratio(model: ManifoldModel, t, x, y):
    """p_t^Delta / e_t computed without underflow or cancellation."""
    _check_time(t)
    if model.kind == "sphere":
        return sphere_heat_ratio(geo.distance(model, x, y), t, model.radius)
    disp = geo.displacement(model, x, y)
    out = 1.0
    for i, P in enumerate(_flat_axes(model)):
        out = out * (1.0 + line_image_ratio_tail(disp[..., i], t, P))
    return out


def expansion_remainder(model, op, nu, t, x, y):
    """p_t/e_t - sum_{j<=nu} t^j Phi_j / j! at non-cut pairs."""
    _check_time(t)
    _check_operator(model, op)
    if np.any(geo.is_cut_pair(model, x, y)):
        raise CutPairError("expansion remainder is defined off the cut locus only")
    coeffs = _coefficient_list(model, op, nu, x, y)
    if not op.has_potential and model.kind != "sphere":
        # Phi_0 = 1 and Phi_j = 0: the remainder is exactly the image tail
        disp = geo.displacement(model, x, y)
        ratio_m1 = 0.0
        prod = 1.0
        for i, P in enumerate(_flat_axes(model)):
            tail = line_image_ratio_tail(disp[..., i], t, P)
            ratio_m1 = ratio_m1 * (1 + tail) + prod * tail
            prod = prod * (1 + tail)
        return ratio_m1
    if op.has_potential:
        ratio = heat_kernel(model, op, t, x, y) / euclidean_kernel(model, t, x, y)
    else:
        ratio = heat_ratio(model, t, x, y)
    return ratio - series_sum(coeffs, t)


# -- Gaussian bounds ----------------------------------------------------------------


def gaussian_bounds(model: ManifoldModel, t_values, grid: QuadratureGrid) -> dict:
    """Fitted constants for eps <= p_t/e_t <= C t^(-a) over all grid pairs.

    Returns per-time min/max ratios, the global lower constant ``eps`` and
    the least-squares fit ``log max_ratio = log C - a log t``.
    """
    d = geo.pairwise_distance(grid)
    xs, ys = grid.nodes[:, None, :], grid.nodes[None, :, :]
    rows = []
    for t in t_values:
        if model.kind == "sphere":
            ratio = sphere_heat_ratio(d, t, model.radius)
        else:
            ratio = heat_ratio(model, t, xs, ys)
        rows.append((float(t), float(ratio.min()), float(ratio.max())))
    ts = np.array([r[0] for r in rows])
    mx = np.array([r[2] for r in rows])
    slope, intercept = np.polyfit(np.log(ts), np.log(mx), 1)
    return {
        "rows": rows,
        "eps": min(r[1] for r in rows),
        "upper_exponent": float(-slope),
        "upper_constant": float(math.exp(intercept)),
    }
