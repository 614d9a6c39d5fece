"""Phase-space representations: Wigner and Husimi functions, spectrograms,
the Husimi correction, and Egorov-type expectation values computed by
transporting phase-space samples along the classical flow.

Convention: W_psi(q, p) = (2 pi eps)^{-d} int conj(psi(q + y/2)) psi(q - y/2) e^{i p.y/eps} dy.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .classical import canonical_state, symplectic_form, verlet_step
from .gaussian import FrameError, GaussianParams, check_frame, width_matrix
from .grid import GridState, wavenumbers
from .hagedorn import HagedornState
from .potentials import PotentialModel
from .quadrature import gauss_hermite_tensor, map_to_gaussian, qmc_points, sample_gaussian, smolyak_gh
from .superposition import fbi_numeric, fbi_packet, standard_gaussian


@dataclass(frozen=True)
class PhaseSpaceObservable:
    """Symbol a(z), z = (q, p). Polynomial symbols keep exact coefficients:
    a(z) = constant + linear.z + z^T quadratic z with ``quadratic`` symmetric."""

    symbol: Callable[[np.ndarray], np.ndarray]
    kind: str = "generic"
    constant: float = 0.0
    linear: Optional[np.ndarray] = None
    quadratic: Optional[np.ndarray] = None

    def __call__(self, z) -> np.ndarray:
        return self.symbol(np.asarray(z, dtype=float))


def polynomial_observable(dim: int, constant: float = 0.0, linear=None, quadratic=None) -> PhaseSpaceObservable:
    n = 2 * dim
    lin = np.zeros(n) if linear is None else np.asarray(linear, dtype=float)
    quad = np.zeros((n, n)) if quadratic is None else np.asarray(quadratic, dtype=float)
    quad = 0.5 * (quad + quad.T)
    if lin.shape != (n,) or quad.shape != (n, n):
        raise ValueError("coefficient shapes do not match the phase-space dimension")

    def symbol(z):
        return constant + z @ lin + np.einsum("...i,ij,...j->...", z, quad, z)

    return PhaseSpaceObservable(symbol, "polynomial", float(constant), lin, quad)


def coordinate_observable(dim: int, index: int, power: int = 1) -> PhaseSpaceObservable:
    """a(z) = z_index^power for power 1 or 2 (index < d is a position, otherwise a momentum)."""
    n = 2 * dim
    if power == 1:
        lin = np.zeros(n)
        lin[index] = 1.0
        return polynomial_observable(dim, linear=lin)
    if power == 2:
        quad = np.zeros((n, n))
        quad[index, index] = 1.0
        return polynomial_observable(dim, quadratic=quad)
    raise ValueError("power must be 1 or 2")


@dataclass(frozen=True)
class WignerGaussian:
    center: np.ndarray
    G: np.ndarray
    eps: float

    def __call__(self, zeta) -> np.ndarray:
        w = np.asarray(zeta, dtype=float) - self.center
        d = len(self.center) // 2
        return (np.pi * self.eps) ** (-d) * np.exp(-np.einsum("...i,ij,...j->...", w, self.G, w) / self.eps)


def _frame_matrix(Q, P) -> np.ndarray:
    return np.concatenate([np.asarray(Q, dtype=complex), np.asarray(P, dtype=complex)], axis=0)


def covariance_checks(G: np.ndarray) -> dict:
    """Residuals of symmetry and symplecticity and the smallest eigenvalue."""
    d = G.shape[0] // 2
    J = symplectic_form(d)
    return {
        "symmetry": float(np.max(np.abs(G - G.T))),
        "symplectic": float(np.max(np.abs(G.T @ J @ G - J))),
        "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (G + G.T)).min()),
    }


def wigner_gaussian(params: GaussianParams, tol: float = 1e-10) -> WignerGaussian:
    """Wigner function of a normalised Gaussian: covariance G = J^T Re(Z Z^*) J with Z = (Q; P)."""
    check_frame(params.Q, params.P)
    Z = _frame_matrix(params.Q, params.P)
    J = symplectic_form(params.dim)
    G = J.T @ (Z @ Z.conj().T).real @ J
    G = 0.5 * (G + G.T)
    checks = covariance_checks(G)
    if checks["symplectic"] > tol * max(1.0, np.linalg.norm(G) ** 2) or checks["min_eigenvalue"] <= 0:
        raise FrameError("Wigner covariance is not symplectic positive definite")
    return WignerGaussian(np.concatenate([params.q, params.p]), G, params.eps)


def laguerre(k: int, x) -> np.ndarray:
    """L_k(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), 1.0 - x
    if k == 0:
        return prev
    for n in range(1, k):
        prev, cur = cur, ((2 * n + 1 - x) * cur - n * prev) / (n + 1)
    return cur


def _laguerre_arguments(frame: GaussianParams, zeta) -> np.ndarray:
    """|l_n(zeta)|^2 with l(zeta) = Z^T J (zeta - z), shape (..., d)."""
    Z = _frame_matrix(frame.Q, frame.P)
    J = symplectic_form(frame.dim)
    w = np.asarray(zeta, dtype=float) - np.concatenate([frame.q, frame.p])
    ell = np.einsum("ij,...j->...i", Z.T @ J, w)
    return np.abs(ell) ** 2


def wigner_hagedorn(frame: GaussianParams, k, zeta) -> np.ndarray:
    """Wigner function of the Hagedorn function phi_k: signed product of Laguerre polynomials."""
    k = tuple(int(v) for v in k)
    eps, d = frame.eps, frame.dim
    r2 = _laguerre_arguments(frame, zeta)
    val = (-1.0) ** sum(k) * (np.pi * eps) ** (-d) * np.exp(-np.sum(r2, axis=-1) / eps)
    for n, kn in enumerate(k):
        val = val * laguerre(kn, 2 * r2[..., n] / eps)
    return val


@dataclass(frozen=True)
class WignerGrid:
    q: np.ndarray
    p: np.ndarray
    values: np.ndarray  # (len(q), len(p))

    def to_csv(self, path) -> None:
        export_slice_csv(path, self.q, self.p, self.values)


def wigner_numeric(psi: GridState, rows: Optional[np.ndarray] = None, check_resolution: bool = True) -> WignerGrid:
    """FFT evaluation of the Wigner function on the grid rows ``rows`` (default all).

    With y = 2 j h the values psi(q +- j h) are grid samples, so each row is
    one FFT of length 2K. psi is taken as zero outside the domain (periodic
    wrap-around would create ghost images half a period away); the momentum
    grid has spacing pi eps / (2 (b - a)).
    """
    if psi.dim != 1:
        raise ValueError("numeric Wigner transform is limited to d = 1")
    h = float(psi.spacing[0])
    eps, K = psi.eps, psi.K
    if check_resolution and h > eps / 4:
        raise ValueError(f"grid spacing {h:.3g} exceeds eps/4; refine the grid")
    rows = np.arange(K) if rows is None else np.asarray(rows, dtype=int)
    n = 2 * K
    j = np.fft.fftfreq(n, 1.0 / n).astype(int)
    padded = np.concatenate([psi.values, np.zeros(2 * K, dtype=complex)])  # index -1..-2K hits zeros
    plus = rows[:, None] + j[None, :]
    minus = rows[:, None] - j[None, :]
    plus = np.where((plus >= 0) & (plus < K), plus, K)
    minus = np.where((minus >= 0) & (minus < K), minus, K)
    prod = padded.conj()[plus] * padded[minus]
    W = (h / (np.pi * eps)) * n * np.fft.ifft(prod, axis=1)
    p = np.pi * eps * np.fft.fftfreq(n, 1.0 / n) / (n * h)
    order = np.argsort(p)
    return WignerGrid(psi.axes()[0][rows], p[order], W.real[:, order])


def _window_inner(psi, z, window: str, index: int = 0) -> np.ndarray:
    """<phi_z | psi> for the unit Gaussian window or the first-order Hermite window phi_j."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if isinstance(psi, GaussianParams):
        base = fbi_packet(z, psi)
        if window == "gaussian":
            return base
        d, eps = psi.dim, psi.eps
        C = width_matrix(psi, check=False).C
        A = (np.eye(d) - 1j * C) / eps
        a = z[:, :d] - psi.q
        b = (a - 1j * z[:, d:] + 1j * psi.p) / eps
        mean = np.linalg.solve(A, b.T).T
        return np.sqrt(2.0 / eps) * (mean[:, index] - a[:, index]) * base
    if isinstance(psi, GridState):
        if window == "gaussian":
            return fbi_numeric(psi, z)
        d, eps = psi.dim, psi.eps
        pts = psi.points()
        out = np.empty(len(z), dtype=complex)
        for i, zz in enumerate(z):
            g = standard_gaussian(zz[:d], zz[d:], pts, eps) * np.sqrt(2.0 / eps) * (pts[:, index] - zz[index])
            out[i] = np.sum(g.conj() * psi.values.ravel()) * psi.cell_volume
        return out
    raise TypeError("unsupported state; expected GaussianParams or GridState")


def _dim_eps(psi):
    if isinstance(psi, (GaussianParams, GridState)):
        return psi.dim, psi.eps
    raise TypeError("unsupported state; expected GaussianParams or GridState")


def husimi(psi, z) -> np.ndarray:
    """(2 pi eps)^{-d} |<g_z|psi>|^2."""
    d, eps = _dim_eps(psi)
    return (2 * np.pi * eps) ** (-d) * np.abs(_window_inner(psi, z, "gaussian")) ** 2


def spectrogram(psi, z, window: str = "gaussian", index: int = 0) -> np.ndarray:
    """(2 pi eps)^{-d} |<phi_z|psi>|^2 for window g_0 ("gaussian") or the Hermite window
    phi_j(x) = (pi eps)^{-d/4} sqrt(2/eps) x_j exp(-|x|^2/(2 eps)) ("hermite", j = index).

    The reflected window phi(q - x) differs from phi(x - q) by a sign for the
    odd Hermite window, which the modulus removes.
    """
    d, eps = _dim_eps(psi)
    if window not in ("gaussian", "hermite"):
        raise ValueError("window must be 'gaussian' or 'hermite'")
    return (2 * np.pi * eps) ** (-d) * np.abs(_window_inner(psi, z, window, index)) ** 2


def husimi_correction(psi, z) -> np.ndarray:
    """(1 + d/2) H - 1/2 sum_j (Hermite-window spectrograms)."""
    d, _ = _dim_eps(psi)
    out = (1 + 0.5 * d) * husimi(psi, z)
    for j in range(d):
        out = out - 0.5 * spectrogram(psi, z, "hermite", j)
    return out


def husimi_correction_fd(psi, z, step: Optional[float] = None) -> np.ndarray:
    """H - (eps/4) Laplacian(H) with a fourth-order central difference (cross-check only)."""
    d, eps = _dim_eps(psi)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    h = 0.01 * np.sqrt(eps) if step is None else step
    base = husimi(psi, z)
    lap = np.zeros(len(z))
    for axis in range(2 * d):
        e = np.zeros(2 * d)
        e[axis] = h
        f = {s: husimi(psi, z + s * e) for s in (-2, -1, 1, 2)}
        lap += (-f[-2] + 16 * f[-1] - 30 * base + 16 * f[1] - f[2]) / (12 * h * h)
    return base - 0.25 * eps * lap


def _standard_points(n: int, sampler: str, level: int, N: int, seed: int):
    """Points y and weights w with sum w f(y) ~ int f(y) pi^{-n/2} exp(-|y|^2) dy."""
    if sampler == "gh":
        rule = gauss_hermite_tensor(level, n)
        return rule.nodes, rule.weights * np.pi ** (-n / 2)
    if sampler == "smolyak":
        rule = smolyak_gh(n, level)
        return rule.nodes, rule.weights * np.pi ** (-n / 2)
    if sampler == "mc":
        return sample_gaussian(np.zeros(n), 0.5 * np.eye(n), N, seed), np.full(N, 1.0 / N)
    if sampler == "qmc":
        return map_to_gaussian(qmc_points(n, N), np.zeros(n), 0.5 * np.eye(n)), np.full(N, 1.0 / N)
    raise ValueError(f"unknown sampler {sampler!r}")


def _transport(model: PotentialModel, z: np.ndarray, t: float, tau: float, order: int) -> np.ndarray:
    d = z.shape[1] // 2
    if t == 0:
        return z
    n = max(1, int(round(t / tau)))
    step = t / n
    state = canonical_state(z[:, :d], z[:, d:])
    for _ in range(n):
        state = verlet_step(model, state, step, order)
    return np.concatenate([state.q, state.p], axis=1)


@dataclass(frozen=True)
class EgorovResult:
    value: float
    total_weight: float
    n_samples: int
    sampler: str


def egorov_expectation(model: PotentialModel, psi0: Union[GaussianParams, HagedornState], a: PhaseSpaceObservable,
                       t: float, tau: float, sampler: str = "gh", density: str = "wigner", level: int = 16,
                       N: int = 10000, seed: int = 0, order: int = 4) -> EgorovResult:
    """int a(Phi^t(z)) rho(z) dz with the initial density rho sampled and transported by Verlet.

    Gaussian packets admit both densities; Hagedorn states with a single
    nonzero coefficient use their signed Laguerre Wigner function (Wigner only).
    The Husimi correction equals W_psi * K with the signed kernel
    K(u) = (pi eps)^{-d} (1 + d - |u|^2/eps) e^{-|u|^2/eps}, so it is sampled as
    a product of two Gaussians with signed importance weights.
    """
    if isinstance(psi0, GaussianParams):
        frame, k = psi0, None
    elif isinstance(psi0, HagedornState):
        nz = np.flatnonzero(np.abs(psi0.coeffs) > 0)
        if len(nz) != 1:
            raise ValueError("Hagedorn initial data must be a single basis function")
        frame, k = psi0.frame, psi0.index_set.indices[nz[0]]
        if density != "wigner":
            raise ValueError("Hagedorn initial data support only the Wigner density")
    else:
        raise TypeError("initial datum must be GaussianParams or HagedornState")
    d, eps = frame.dim, frame.eps
    W = wigner_gaussian(frame)
    R = np.linalg.cholesky(W.G).T  # G = R^T R
    R_inv = np.linalg.inv(R)
    n = 2 * d
    if density == "wigner":
        y, w = _standard_points(n, sampler, level, N, seed)
        z = W.center + np.sqrt(eps) * y @ R_inv.T
        if k is not None:
            r2 = _laguerre_arguments(frame, z)
            factor = (-1.0) ** sum(k) * np.ones(len(z))
            for j, kj in enumerate(k):
                factor *= laguerre(kj, 2 * r2[:, j] / eps)
            w = w * factor
    elif density == "husimi_corrected":
        y, w = _standard_points(2 * n, sampler, level, N, seed)
        u, v = y[:, :n], y[:, n:]
        z = W.center + np.sqrt(eps) * (v @ R_inv.T + u)
        w = w * (1 + d - np.sum(u * u, axis=1))
    else:
        raise ValueError("density must be 'wigner' or 'husimi_corrected'")
    zt = _transport(model, z, t, tau, order)
    vals = a(zt)
    return EgorovResult(float(np.sum(w * vals)), float(np.sum(w)), len(z), sampler)


def _symbol_laplacian(a, z: np.ndarray, step: float) -> np.ndarray:
    if isinstance(a, PhaseSpaceObservable) and a.kind == "polynomial":
        return np.full(len(z), 2.0 * np.trace(a.quadratic))
    base = a(z)
    lap = np.zeros(len(z))
    for axis in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[axis] = step
        f = {s: a(z + s * e) for s in (-2, -1, 1, 2)}
        lap += (-f[-2] + 16 * f[-1] - 30 * base + 16 * f[1] - f[2]) / (12 * step * step)
    return lap


def husimi_average(psi: GaussianParams, a, route: str = "corrected_density", level: int = 16,
                   step: Optional[float] = None) -> float:
    """Phase-space average of a symbol against the corrected Husimi function of a Gaussian.

    ``route='corrected_density'`` integrates a against H^c; ``route='corrected_symbol'``
    integrates a - (eps/4) Laplacian(a) against H. Both use Gauss-Hermite nodes
    for H = W * (pi eps)^{-d} exp(-|u|^2/eps); the routes agree by integration by parts.
    """
    d, eps = psi.dim, psi.eps
    n = 2 * d
    W = wigner_gaussian(psi)
    R_inv = np.linalg.inv(np.linalg.cholesky(W.G).T)
    y, w = _standard_points(2 * n, "gh", level, 0, 0)
    u, v = y[:, :n], y[:, n:]
    z = W.center + np.sqrt(eps) * (v @ R_inv.T + u)
    if route == "corrected_density":
        return float(np.sum(w * (1 + d - np.sum(u * u, axis=1)) * a(z)))
    if route == "corrected_symbol":
        h = 0.01 * np.sqrt(eps) if step is None else step
        return float(np.sum(w * (a(z) - 0.25 * eps * _symbol_laplacian(a, z, h))))
    raise ValueError("route must be 'corrected_density' or 'corrected_symbol'")


def _spectral_derivative(values: np.ndarray, psi: GridState, axis: int) -> np.ndarray:
    k = np.meshgrid(*wavenumbers(psi), indexing="ij")[axis]
    return np.fft.ifftn(1j * k * np.fft.fftn(values))


def weyl_polynomial_expectation(psi: GridState, a: PhaseSpaceObservable) -> float:
    """<psi | op(a) psi> for a polynomial symbol of degree <= 2 with spectral derivatives.

    Mixed products q_i p_j are quantised symmetrically as (q_i p_j + p_j q_i)/2.
    """
    if a.kind != "polynomial":
        raise ValueError("symbol must be a polynomial of degree at most 2")
    d, eps = psi.dim, psi.eps
    v = psi.values
    x = [psi.points()[:, j].reshape(v.shape) for j in range(d)]
    mom = lambda f, j: -1j * eps * _spectral_derivative(f, psi, j)

    def apply(i, f):
        return x[i] * f if i < d else mom(f, i - d)

    def expect(f):
        return np.sum(v.conj() * f) * psi.cell_volume

    total = a.constant * expect(v)
    for i in range(2 * d):
        if a.linear[i] != 0:
            total += a.linear[i] * expect(apply(i, v))
    for i in range(2 * d):
        for j in range(2 * d):
            c = a.quadratic[i, j]
            if c != 0:
                total += c * 0.5 * expect(apply(i, apply(j, v)) + apply(j, apply(i, v)))
    return float(total.real)


def export_slice_csv(path, q_axis, p_axis, values) -> None:
    """Columns q, p, value; one row per grid point of a 2D slice."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q", "p", "value"])
        for i, q in enumerate(q_axis):
            for j, p in enumerate(p_axis):
                writer.writerow([repr(float(q)), repr(float(p)), repr(float(values[i, j]))])
