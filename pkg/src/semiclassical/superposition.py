"""Continuous superpositions of Gaussians as particle methods.

Initial data are sampled in phase space through the wave-packet transform
z -> <g_z|psi0>, particles are transported classically together with their
linearised flow, and the wave function is reassembled either from thawed
Gaussians (width C = P Q^{-1}) or from frozen unit-width Gaussians weighted by
the Herman-Kluk prefactor.

Bookkeeping: the reconstruction prefactor (2 pi eps)^{-d} and the phase-space
quadrature weight are both absorbed into the particle weights.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .classical import TrajectoryState, canonical_state, verlet_step
from .gaussian import BranchError, FrameError, GaussianParams, evaluate, width_matrix
from .grid import GridState
from .potentials import PotentialModel
from .quadrature import gauss_hermite_tensor, map_to_gaussian, qmc_points, sample_gaussian, smolyak_gh

MODES = ("thawed", "frozen")
SAMPLERS = ("gh", "smolyak", "mc", "qmc")
PREFACTOR_JUMP_LIMIT = 0.5
_CHUNK = 256


def standard_gaussian(q, p, x, eps: float) -> np.ndarray:
    """Unit-width g_z(x) = (pi eps)^{-d/4} exp(-|x-q|^2/(2 eps) + i p.(x-q)/eps), broadcast over z."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    d = q.shape[-1]
    y = np.asarray(x, dtype=float) - q
    return (np.pi * eps) ** (-d / 4) * np.exp((-0.5 * np.sum(y * y, axis=-1) + 1j * np.sum(p * y, axis=-1)) / eps)


def fbi_gaussian(z, z0, eps: float) -> np.ndarray:
    """<g_z | g_{z0}> in closed form; z and z0 of shape (..., 2d)."""
    z = np.asarray(z, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    d = z.shape[-1] // 2
    q, p = z[..., :d], z[..., d:]
    q0, p0 = z0[..., :d], z0[..., d:]
    dist2 = np.sum((z - z0) ** 2, axis=-1)
    return np.exp(-dist2 / (4 * eps) + 1j * np.sum((p + p0) * (q - q0), axis=-1) / (2 * eps))


def fbi_packet(z, params: GaussianParams) -> np.ndarray:
    """<g_z | u> for a general Gaussian u by the complex Gaussian integral."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d, eps = params.dim, params.eps
    C = width_matrix(params, check=False).C
    A = (np.eye(d) - 1j * C) / eps
    evals = np.linalg.eigvals(A)
    inv_sqrt_det = np.prod(evals ** -0.5)
    A_inv = np.linalg.inv(A)
    a = z[:, :d] - params.q
    b = (a - 1j * z[:, d:] + 1j * params.p) / eps
    quad = 0.5 * np.einsum("ni,ij,nj->n", b, A_inv, b)
    c = -0.5 * np.sum(a * a, axis=1) / eps + 1j * np.sum(z[:, d:] * a, axis=1) / eps + 1j * params.zeta / eps
    return (np.pi * eps) ** (-d / 4) * (2 * np.pi) ** (d / 2) * inv_sqrt_det * np.exp(quad + c)


def fbi_numeric(psi0: GridState, z, eps: Optional[float] = None, min_points_per_wavelength: float = 4.0) -> np.ndarray:
    """<g_z | psi0> by the trapezoidal rule on the periodic grid."""
    eps = psi0.eps if eps is None else eps
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = psi0.dim
    pmax = float(np.max(np.abs(z[:, d:]))) if len(z) else 0.0
    h = float(np.max(psi0.spacing))
    if pmax > 0 and h > 2 * np.pi * eps / (min_points_per_wavelength * pmax):
        raise ValueError("grid does not resolve the window oscillation")
    if h > np.sqrt(eps):
        raise ValueError("grid does not resolve the window width")
    pts = psi0.points()
    vals = psi0.values.ravel()
    out = np.empty(len(z), dtype=complex)
    for start in range(0, len(z), _CHUNK):
        zz = z[start:start + _CHUNK]
        g = standard_gaussian(zz[:, None, :d], zz[:, None, d:], pts[None], eps)
        out[start:start + _CHUNK] = (g.conj() @ vals) * psi0.cell_volume
    return out


def _grid_center(psi0: GridState) -> np.ndarray:
    pts = psi0.points()
    dens = np.abs(psi0.values.ravel()) ** 2
    mass = dens.sum()
    q = dens @ pts / mass
    k = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(K, h) for K, h in zip(psi0.values.shape, psi0.spacing)], indexing="ij")
    spec = np.abs(np.fft.fftn(psi0.values)) ** 2
    p = np.array([psi0.eps * np.sum(kj * spec) / spec.sum() for kj in k])
    return np.concatenate([q, p])


@dataclass
class Ensemble:
    """Particles in struct-of-arrays layout; ``traj`` carries a leading particle axis."""

    mode: str
    eps: float
    z0: np.ndarray  # (N, 2d)
    weights: np.ndarray  # (N,)
    traj: TrajectoryState
    prefactor: np.ndarray  # frozen: a_nat; thawed: continuous sqrt(det Q)
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.z0.shape[1] // 2

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def t(self) -> float:
        return self.traj.t

    def width(self) -> np.ndarray:
        """Thawed width matrices C = P Q^{-1}, shape (N, d, d)."""
        if self.mode != "thawed":
            raise ValueError("width matrices exist only in thawed mode")
        return np.linalg.solve(np.swapaxes(self.traj.Q, -1, -2), np.swapaxes(self.traj.P, -1, -2)).swapaxes(-1, -2)


def _phase_space_nodes(sampler: str, dim: int, z0: np.ndarray, eps: float, level: int, N: int, seed: int):
    """Nodes z and weights w with sum_i w_i f(z_i) ~ int f(z) dz."""
    n = 2 * dim
    if sampler in ("gh", "smolyak"):
        rule = gauss_hermite_tensor(level, n) if sampler == "gh" else smolyak_gh(n, level)
        z = z0 + 2 * np.sqrt(eps) * rule.nodes
        return z, (4 * eps) ** dim * rule.plain_weights, dict(rule.provenance)
    if sampler == "mc":
        z = sample_gaussian(z0, 2 * eps * np.eye(n), N, seed)
        prov = {"kind": "mc", "N": N, "seed": seed}
    elif sampler == "qmc":
        z = map_to_gaussian(qmc_points(n, N), z0, 2 * eps * np.eye(n))
        prov = {"kind": "qmc", "N": N, "sequence": "halton"}
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    dens = (4 * np.pi * eps) ** (-dim) * np.exp(-np.sum((z - z0) ** 2, axis=1) / (4 * eps))
    return z, 1.0 / (N * dens), prov


def init_ensemble(psi0: Union[GaussianParams, GridState], mode: str, sampler: str = "gh", level: int = 16,
                  N: int = 1000, seed: int = 0, center=None) -> Ensemble:
    """Sample phase space around ``center`` (default: the packet's mean) and weight by the transform."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if isinstance(psi0, GaussianParams):
        eps, d = psi0.eps, psi0.dim
        z0 = np.concatenate([psi0.q, psi0.p]) if center is None else np.asarray(center, float)
        transform = lambda z: fbi_packet(z, psi0)
    elif isinstance(psi0, GridState):
        eps, d = psi0.eps, psi0.dim
        z0 = _grid_center(psi0) if center is None else np.asarray(center, float)
        transform = lambda z: fbi_numeric(psi0, z)
    else:
        raise TypeError("initial datum must be GaussianParams or GridState")
    z, w, prov = _phase_space_nodes(sampler, d, z0, eps, level, N, seed)
    weights = transform(z) * w / (2 * np.pi * eps) ** d
    if not np.all(np.isfinite(weights)):
        raise FloatingPointError("non-finite particle weights")
    traj = canonical_state(z[:, :d], z[:, d:], P_sign=1j if mode == "thawed" else -1j)
    prov = dict(prov, sampler=sampler, center=z0.tolist())
    return Ensemble(mode, eps, z, weights, traj, np.ones(len(z), dtype=complex), prov)


def _frozen_matrix(traj: TrajectoryState) -> np.ndarray:
    return traj.Q + 1j * traj.P


def propagate_ensemble(model: PotentialModel, ens: Ensemble, tau: float, n_steps: int, order: int = 2) -> Ensemble:
    """Verlet transport of all particles; the prefactor follows by continuity.

    Per step the principal root of det(M_new M_old^{-1}) (frozen, M = Q + iP)
    or det(Q_old^{-1} Q_new) (thawed) multiplies the running prefactor.
    """
    traj, pref = ens.traj, ens.prefactor.copy()
    for _ in range(n_steps):
        new = verlet_step(model, traj, tau, order)
        if ens.mode == "frozen":
            old_M, new_M = _frozen_matrix(traj), _frozen_matrix(new)
            ratio = np.linalg.det(np.linalg.solve(np.swapaxes(old_M, -1, -2), np.swapaxes(new_M, -1, -2)))
        else:
            try:
                ratio = np.linalg.det(np.linalg.solve(traj.Q, new.Q))
            except np.linalg.LinAlgError as exc:
                raise FrameError("thawed frame became singular") from exc
            bad = np.flatnonzero(~np.isfinite(ratio) | (np.abs(ratio) < 1e-14))
            if bad.size:
                raise FrameError(f"thawed frame singular for particle {int(bad[0])}")
        jump = np.abs(np.sqrt(ratio + 0j) - 1)
        if np.any(jump > PREFACTOR_JUMP_LIMIT):
            raise BranchError(f"prefactor jump too large for particle {int(np.argmax(jump))}; reduce tau")
        pref = pref * np.sqrt(ratio + 0j)
        traj = new
    return replace(ens, traj=traj, prefactor=pref)


def hk_prefactor(ens: Ensemble) -> np.ndarray:
    if ens.mode != "frozen":
        raise ValueError("Herman-Kluk prefactor exists only in frozen mode")
    return ens.prefactor


def reconstruct(ens: Ensemble, xs) -> np.ndarray:
    """Weighted particle sum at the points ``xs`` (shape (n, d)); particles reduced in index order."""
    xs = np.asarray(xs, dtype=float)
    d, eps = ens.dim, ens.eps
    if xs.ndim == 1:
        xs = xs[:, None] if d == 1 else xs[None, :]
    traj = ens.traj
    amp = ens.weights * np.exp(1j * traj.S / eps)
    if ens.mode == "frozen":
        amp = amp * ens.prefactor
    else:
        C = ens.width()
        C = 0.5 * (C + np.swapaxes(C, -1, -2))
        # |det Q|^{-1/2} equals det(Im C)^{1/4}; the phase comes from the continuous root
        modulus = np.linalg.det(C.imag) ** 0.25
        amp = amp * modulus * np.exp(-1j * np.angle(ens.prefactor))
    out = np.zeros(len(xs), dtype=complex)
    for start in range(0, len(ens), _CHUNK):
        sl = slice(start, start + _CHUNK)
        y = xs[None, :, :] - traj.q[sl, None, :]
        lin = np.einsum("nd,nkd->nk", traj.p[sl], y)
        if ens.mode == "frozen":
            quad = 1j * np.sum(y * y, axis=-1)
        else:
            quad = np.einsum("nki,nij,nkj->nk", y, C[sl], y)
        g = (np.pi * eps) ** (-d / 4) * np.exp(1j / eps * (0.5 * quad + lin))
        out += amp[sl] @ g
    return out


def spectral_parameter_floor(ens: Ensemble, warn_below: float = 1e-3) -> float:
    """min over particles of 1 / (2(||Q||^2 + ||P||^2))."""
    if ens.mode != "thawed":
        raise ValueError("spectral parameter is defined for thawed ensembles")
    nq = np.linalg.norm(ens.traj.Q, ord=2, axis=(-2, -1))
    np_ = np.linalg.norm(ens.traj.P, ord=2, axis=(-2, -1))
    floor = float(np.min(0.5 / (nq**2 + np_**2)))
    if floor < warn_below:
        warnings.warn(f"spectral parameter floor {floor:.3e} is small; thawed accuracy not guaranteed", RuntimeWarning)
    return floor


def ensemble_norm_estimate(ens: Ensemble, xs, cell_volume: float) -> float:
    """Grid norm of the reconstruction (drift is reported, never asserted)."""
    vals = reconstruct(ens, xs)
    return float(np.sqrt(np.sum(np.abs(vals) ** 2) * cell_volume))


SNAPSHOT_HEADER = "# semiclassical ensemble snapshot v1"


def save_snapshot(ens: Ensemble, path) -> None:
    """One particle per row: z0, q(t), p(t), S, weight (re, im), then Re/Im a_nat or flattened C."""
    d = ens.dim
    cols = [f"z0_{i}" for i in range(2 * d)] + [f"q_{i}" for i in range(d)] + [f"p_{i}" for i in range(d)]
    cols += ["S", "w_re", "w_im"]
    if ens.mode == "frozen":
        cols += ["a_re", "a_im"]
        extra = np.stack([ens.prefactor.real, ens.prefactor.imag], axis=1)
    else:
        C = ens.width().reshape(len(ens), -1)
        cols += [f"C{i}_{part}" for i in range(d * d) for part in ("re", "im")]
        extra = np.stack([C.real, C.imag], axis=2).reshape(len(ens), -1)
    data = np.column_stack([ens.z0, ens.traj.q, ens.traj.p, ens.traj.S, ens.weights.real, ens.weights.imag, extra])
    meta = f"{SNAPSHOT_HEADER} mode={ens.mode} d={d} eps={ens.eps!r} t={ens.t!r}"
    np.savetxt(path, data, header=meta + "\n" + " ".join(cols), comments="", fmt="%.17g")


def load_snapshot_table(path) -> tuple:
    """Returns (metadata dict, column names, data array)."""
    with open(path) as fh:
        meta_line = fh.readline().strip()
        names = fh.readline().split()
    if not meta_line.startswith(SNAPSHOT_HEADER):
        raise ValueError("not an ensemble snapshot")
    meta = dict(item.split("=") for item in meta_line[len(SNAPSHOT_HEADER):].split())
    data = np.loadtxt(path, skiprows=2, ndmin=2)
    return meta, names, data
