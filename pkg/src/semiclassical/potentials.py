"""Potential models with analytic value, gradient and Hessian.

Every evaluation function is vectorised over leading axes: a position array of
shape ``(..., d)`` gives values of shape ``(...)``, gradients ``(..., d)`` and
Hessians ``(..., d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PotentialModel:
    """Immutable potential V: R^d -> R with analytic derivatives."""

    name: str
    dim: int
    value: ArrayFn
    gradient: ArrayFn
    hessian: ArrayFn
    analytic_flow: Optional[Callable[[np.ndarray, np.ndarray, float], tuple]] = None
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


@dataclass
class DerivativeReport:
    grad_error: float
    hess_error: float
    worst_probe: Optional[np.ndarray]
    passed: bool
    grad_tol: float = 1e-6
    hess_tol: float = 1e-5


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


def harmonic(omega) -> PotentialModel:
    """V(x) = 1/2 x^T Omega x for a symmetric positive definite Omega.

    A scalar ``omega`` is read as a 1x1 matrix.
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    if not np.allclose(omega, omega.T):
        raise ValueError("Omega must be symmetric")
    if np.linalg.eigvalsh(omega).min() <= 0:
        raise ValueError("Omega must be positive definite")
    d = omega.shape[0]

    def value(x):
        x = _as_points(x, d)
        return 0.5 * np.einsum("...i,ij,...j->...", x, omega, x)

    def gradient(x):
        x = _as_points(x, d)
        return x @ omega.T

    def hessian(x):
        x = _as_points(x, d)
        return np.broadcast_to(omega, x.shape[:-1] + (d, d)).copy()

    freqs2, basis = np.linalg.eigh(omega)
    freqs = np.sqrt(freqs2)

    def flow(q, p, t):
        # rotate each normal mode independently
        a = np.asarray(q, dtype=float) @ basis
        b = np.asarray(p, dtype=float) @ basis
        c, s = np.cos(freqs * t), np.sin(freqs * t)
        a_t = c * a + s * b / freqs
        b_t = -freqs * s * a + c * b
        return a_t @ basis.T, b_t @ basis.T

    return PotentialModel("harmonic", d, value, gradient, hessian, flow, {"omega": omega.tolist()})


def free(dim: int) -> PotentialModel:
    """V = 0."""

    def value(x):
        x = _as_points(x, dim)
        return np.zeros(x.shape[:-1])

    def gradient(x):
        return np.zeros_like(_as_points(x, dim))

    def hessian(x):
        x = _as_points(x, dim)
        return np.zeros(x.shape[:-1] + (dim, dim))

    def flow(q, p, t):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return q + t * p, p.copy()

    return PotentialModel("free", dim, value, gradient, hessian, flow)


def quartic(dim: int) -> PotentialModel:
    """V(x) = |x|^4 / 4, rotation invariant."""

    def value(x):
        x = _as_points(x, dim)
        r2 = np.sum(x**2, axis=-1)
        return 0.25 * r2**2

    def gradient(x):
        x = _as_points(x, dim)
        return np.sum(x**2, axis=-1)[..., None] * x

    def hessian(x):
        x = _as_points(x, dim)
        r2 = np.sum(x**2, axis=-1)[..., None, None]
        return r2 * np.eye(dim) + 2.0 * x[..., :, None] * x[..., None, :]

    return PotentialModel("quartic", dim, value, gradient, hessian)


def torsional(dim: int) -> PotentialModel:
    """V(x) = sum_j (1 - cos x_j)."""

    def value(x):
        x = _as_points(x, dim)
        return np.sum(1.0 - np.cos(x), axis=-1)

    def gradient(x):
        return np.sin(_as_points(x, dim))

    def hessian(x):
        x = _as_points(x, dim)
        return np.cos(x)[..., :, None] * np.eye(dim)

    return PotentialModel("torsional", dim, value, gradient, hessian)


def double_well(dim: int) -> PotentialModel:
    """V(x) = (x_1^2 - 1)^2 + 1/2 sum_{j>=2} x_j^2."""

    def value(x):
        x = _as_points(x, dim)
        return (x[..., 0] ** 2 - 1.0) ** 2 + 0.5 * np.sum(x[..., 1:] ** 2, axis=-1)

    def gradient(x):
        x = _as_points(x, dim)
        g = x.copy()
        g[..., 0] = 4.0 * x[..., 0] * (x[..., 0] ** 2 - 1.0)
        return g

    def hessian(x):
        x = _as_points(x, dim)
        h = np.zeros(x.shape[:-1] + (dim, dim))
        h[..., 0, 0] = 12.0 * x[..., 0] ** 2 - 4.0
        for j in range(1, dim):
            h[..., j, j] = 1.0
        return h

    return PotentialModel("double_well", dim, value, gradient, hessian)


def henon_heiles(coupling: float = 1.0 / np.sqrt(80.0)) -> PotentialModel:
    """Two-dimensional Henon-Heiles potential 1/2|x|^2 + c(x^2 y - y^3/3)."""
    lam = float(coupling)

    def value(x):
        x = _as_points(x, 2)
        a, b = x[..., 0], x[..., 1]
        return 0.5 * (a**2 + b**2) + lam * (a**2 * b - b**3 / 3.0)

    def gradient(x):
        x = _as_points(x, 2)
        a, b = x[..., 0], x[..., 1]
        return np.stack([a + 2 * lam * a * b, b + lam * (a**2 - b**2)], axis=-1)

    def hessian(x):
        x = _as_points(x, 2)
        a, b = x[..., 0], x[..., 1]
        h = np.empty(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = 1 + 2 * lam * b
        h[..., 0, 1] = h[..., 1, 0] = 2 * lam * a
        h[..., 1, 1] = 1 - 2 * lam * b
        return h

    return PotentialModel("henon_heiles", 2, value, gradient, hessian, params={"coupling": lam})


def make_potential(name: str, dim: int, params: Optional[dict] = None) -> PotentialModel:
    """Build a built-in potential from a name and parameter map."""
    params = dict(params or {})
    if name == "harmonic":
        omega = params.get("omega", 1.0)
        omega = np.asarray(omega, dtype=float)
        if omega.ndim == 0:
            omega = float(omega) * np.eye(dim)
        elif omega.ndim == 1:
            omega = np.diag(omega)
        return harmonic(omega)
    if name == "free":
        return free(dim)
    if name == "quartic":
        return quartic(dim)
    if name == "torsional":
        return torsional(dim)
    if name == "double_well":
        return double_well(dim)
    if name == "henon_heiles":
        if dim != 2:
            raise ValueError("henon_heiles is two-dimensional")
        return henon_heiles(params.get("coupling", 1.0 / np.sqrt(80.0)))
    raise ValueError(f"unknown potential {name!r}")


POTENTIAL_NAMES = ("harmonic", "free", "quartic", "torsional", "double_well", "henon_heiles")


def taylor_remainder(model: PotentialModel, q, x) -> np.ndarray:
    """Non-quadratic remainder W_q(x) = V(x) - (second-order Taylor polynomial at q)."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    dx = x - q
    quad = (
        model.value(q)
        + dx @ model.gradient(q)
        + 0.5 * np.einsum("...i,ij,...j->...", dx, model.hessian(q), dx)
    )
    return model.value(x) - quad


def check_derivatives(model: PotentialModel, probes: Sequence, h: float = 1e-5) -> DerivativeReport:
    """Compare analytic derivatives against centred finite differences."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValueError("probes must be nonempty")
    d = model.dim
    eye = np.eye(d)
    worst = (0.0, None)
    g_err = h_err = 0.0
    for z in probes:
        g = model.gradient(z)
        hess = model.hessian(z)
        fd_g = np.array([(model.value(z + h * e) - model.value(z - h * e)) / (2 * h) for e in eye])
        fd_h = np.array([(model.gradient(z + h * e) - model.gradient(z - h * e)) / (2 * h) for e in eye])
        eg = np.max(np.abs(g - fd_g)) / max(1.0, np.max(np.abs(g)))
        eh = np.max(np.abs(hess - fd_h)) / max(1.0, np.max(np.abs(hess)))
        eh = max(eh, np.max(np.abs(hess - hess.T)))
        g_err, h_err = max(g_err, eg), max(h_err, eh)
        badness = max(eg / 1e-6, eh / 1e-5)
        if badness > worst[0]:
            worst = (badness, z.copy())
    passed = g_err <= 1e-6 and h_err <= 1e-5
    return DerivativeReport(g_err, h_err, None if passed else worst[1], passed)
