"""Gaussian averages of wave-type kernels: the cosine identity and Riesz moments."""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import roots_hermite

from . import geometry as geo
from . import kernels as K
from .errors import NonpositiveTime, OrderUnsupported, QuadratureNotConverged

GH_START = 64
GH_CAP = 4096
GH_TOL = 1e-10


def gaussian_weight(t, s):
    """gamma_t(s) = (4 pi t)^(-1/2) exp(-s^2 / 4t)."""
    if not t > 0:
        raise NonpositiveTime(f"time must be positive, got {t}")
    s = np.asarray(s, dtype=float)
    return np.exp(-s * s / (4 * t)) / math.sqrt(4 * math.pi * t)


@functools.lru_cache(maxsize=16)
def _hermite(n: int):
    x, w = roots_hermite(n)
    return x, w / math.sqrt(math.pi)


def gaussian_average(f, t, tol=GH_TOL, start=GH_START, cap=GH_CAP):
    """int gamma_t(s) f(s) ds by Gauss-Hermite with node doubling.

    ``f`` maps an array of s-values to an array (extra trailing axes allowed).
    Returns (value, nodes used).
    """
    if not t > 0:
        raise NonpositiveTime(f"time must be positive, got {t}")
    scale = 2 * math.sqrt(t)
    n = start
    x, w = _hermite(n)
    prev = np.tensordot(w, f(scale * x), axes=(0, 0))
    while True:
        n *= 2
        if n > cap:
            raise QuadratureNotConverged(f"Gauss-Hermite did not settle within {cap} nodes")
        x, w = _hermite(n)
        cur = np.tensordot(w, f(scale * x), axes=(0, 0))
        if np.max(np.abs(cur - prev)) <= tol:
            return cur, n
        prev = cur


def cosine_transmute_check(lam, t):
    """(int gamma_t(s) cos(s sqrt(lam)) ds, exp(-lam t))."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    k = math.sqrt(lam)
    val, _ = gaussian_average(lambda s: np.cos(k * s), t)
    return float(val), math.exp(-lam * t)


def transmuted_decay(lams, t):
    """Vectorised quadrature values of exp(-lam t) for eigenvalues ``lams`` (possibly negative)."""
    lams = np.asarray(lams, dtype=float)
    out = np.empty_like(lams)
    pos = lams >= 0
    if np.any(pos):
        k = np.sqrt(lams[pos])
        out[pos], _ = gaussian_average(lambda s: np.cos(np.multiply.outer(s, k)), t)
    if np.any(~pos):
        # negative eigenvalues: cos(s sqrt(lam)) continues to cosh(s sqrt(-lam))
        k = np.sqrt(-lams[~pos])
        out[~pos], _ = gaussian_average(lambda s: np.cosh(np.multiply.outer(s, k)), t)
    return out


@dataclass(eq=False)
class SpectralOperator:
    """Eigenpairs of a circle operator, with basis evaluation on angles."""

    model: geo.ManifoldModel
    eigvals: np.ndarray
    coeffs: np.ndarray  # columns: eigenvectors in the exp(i k theta) basis
    ks: np.ndarray

    @classmethod
    def for_operator(cls, model, op, t) -> "SpectralOperator":
        gal = K.galerkin_for(model, op, t)
        return cls(model, gal.eigvals, gal.eigvecs, gal.ks)

    def eigenfunctions(self, theta):
        theta = np.asarray(theta, dtype=float)
        basis = np.exp(1j * np.multiply.outer(theta, self.ks)) / math.sqrt(geo.TWO_PI * self.model.radius)
        return basis @ self.coeffs


def transmuted_kernel(model, op, t, x, y, spectral: SpectralOperator | None = None):
    """sum_k q_k(t) phi_k(x) conj(phi_k(y)) with q_k(t) from the Gaussian cosine average."""
    if model.kind != "circle":
        raise ValueError("transmuted kernels are built on the circle")
    spec = spectral or SpectralOperator.for_operator(model, op, t)
    decay = transmuted_decay(spec.eigvals, t)
    fx = spec.eigenfunctions(geo.as_points(model, x)[..., 0])
    fy = spec.eigenfunctions(geo.as_points(model, y)[..., 0])
    return np.real(np.sum(fx * decay * np.conj(fy), axis=-1))


def transmuted_kernel_matrix(model, op, t, grid) -> K.KernelMatrix:
    spec = SpectralOperator.for_operator(model, op, t)
    decay = transmuted_decay(spec.eigvals, t)
    F = spec.eigenfunctions(grid.nodes[:, 0])
    vals = np.real((F * decay) @ np.conj(F).T)
    return K.KernelMatrix(grid, float(t), vals, op.label(), {"method": "transmuted"})


# -- Riesz moments ---------------------------------------------------------------------


def riesz_constant(alpha: float, n: int = 1) -> float:
    """2^(1-alpha) pi^((1-n)/2) / (Gamma(alpha/2) Gamma((alpha-n+1)/2)), via log-Gamma."""
    lg = math.lgamma(alpha / 2) + math.lgamma((alpha - n + 1) / 2)
    return math.exp((1 - alpha) * math.log(2) + 0.5 * (1 - n) * math.log(math.pi) - lg)


def riesz_identity_check(j: int, t: float, r: float, n: int = 1):
    """(LHS, e_t t^j / j!) for the Gaussian moment of the order 2 + 2j Riesz kernel.

    LHS = (1/2t) int gamma_t(s) R(s) s ds with
    R(s) = C sign(s) (s^2 - r^2)_+^((alpha-n-1)/2); by symmetry this is
    (C/t) int_r^inf gamma_t(s) (s^2 - r^2)^j s ds for n = 1.
    """
    if n != 1:
        raise OrderUnsupported("only the one-dimensional identity is implemented")
    if j < 1:
        raise OrderUnsupported("j = 0 is not a classical integral in dimension one")
    if not t > 0:
        raise NonpositiveTime(f"time must be positive, got {t}")
    if r < 0:
        raise ValueError("r must be nonnegative")
    alpha = 2 + 2 * j
    power = (alpha - n - 1) / 2
    # substitute s = r + u; the Gaussian tail below 1e-14 sets the upper limit
    umax = math.sqrt(4 * t * 36 * math.log(10)) + 1.0

    def integrand(u):
        s = r + u
        return float(gaussian_weight(t, s)) * (u * (s + r)) ** power * s

    val, _ = integrate.quad(integrand, 0.0, umax, epsabs=0.0, epsrel=1e-13, limit=400)
    lhs = riesz_constant(alpha, n) / t * val
    rhs = float(K.euclidean_from_distance(1, t, r)) * t**j / math.factorial(j)
    return lhs, rhs


@dataclass(frozen=True)
class CheckRow:
    case: str
    param1: float
    param2: float
    lhs: float
    rhs: float

    @property
    def abs_err(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_err(self) -> float:
        return self.abs_err / abs(self.rhs) if self.rhs else self.abs_err


def write_checks_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "param1", "param2", "lhs", "rhs", "abs_err", "rel_err"])
        for r in rows:
            w.writerow([r.case] + [format(v, ".17g") for v in
                                   (r.param1, r.param2, r.lhs, r.rhs, r.abs_err, r.rel_err)])


def riesz_battery(js=(1, 2, 3), rs=(0.0, 0.5, 1.0, 2.0), ts=(0.1, 0.5, 1.0)) -> list[CheckRow]:
    rows = []
    for j in js:
        for r in rs:
            for t in ts:
                lhs, rhs = riesz_identity_check(j, t, r)
                rows.append(CheckRow(f"riesz_j{j}", r, t, lhs, rhs))
    return rows


def cosine_battery(lams, ts) -> list[CheckRow]:
    return [CheckRow("cosine", lam, t, *cosine_transmute_check(lam, t)) for lam in lams for t in ts]
