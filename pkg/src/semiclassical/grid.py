"""Periodic-grid reference solver: split-step Fourier (Strang), symmetric
Zassenhaus splitting, and the exact propagator of the discretised Hamiltonian.

Generators: X = -iV/eps (multiplication) and Y = (i eps/2) Laplacian, whose
exponential is the Fourier multiplier exp(-i t eps |k|^2 / 2).
"""
from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .krylov import hermitian_exp_action
from .potentials import PotentialModel

_MAGIC = b"SCGRID01"


@dataclass(frozen=True)
class GridState:
    values: np.ndarray  # shape (K,) or (K, K)
    domain: tuple  # ((a, b), ...) one pair per dimension
    eps: float

    def __post_init__(self):
        d = len(self.domain)
        if d not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if self.values.ndim != d:
            raise ValueError("values do not match the domain dimension")
        for K in self.values.shape:
            if K < 4 or K & (K - 1):
                raise ValueError("K must be a power of two and at least 4")

    @property
    def dim(self) -> int:
        return len(self.domain)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / K for (a, b), K in zip(self.domain, self.values.shape)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        return [a + (b - a) / K * np.arange(K) for (a, b), K in zip(self.domain, self.values.shape)]

    def points(self) -> np.ndarray:
        """Grid points as an array (K^d, d) in C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell_volume))

    def inner(self, other: "GridState") -> complex:
        _check_same_grid(self, other)
        return complex(np.sum(self.values.conj() * other.values) * self.cell_volume)

    def with_values(self, values) -> "GridState":
        return replace(self, values=np.asarray(values, dtype=complex).reshape(self.values.shape))


def make_grid(K: int, domain: Sequence, eps: float, func: Optional[Callable] = None) -> GridState:
    """Grid state with K points per dimension on ``domain``; ``func`` maps (N, d) points to values."""
    domain = tuple((float(a), float(b)) for a, b in (domain if np.ndim(domain) == 2 else [domain]))
    shape = (K,) * len(domain)
    state = GridState(np.zeros(shape, dtype=complex), domain, float(eps))
    if func is not None:
        state = state.with_values(np.asarray(func(state.points()), dtype=complex))
    return state


def _check_same_grid(a: GridState, b: GridState):
    if a.values.shape != b.values.shape or a.domain != b.domain:
        raise ValueError("grid mismatch")


def wavenumbers(state: GridState) -> list:
    return [2 * np.pi * np.fft.fftfreq(K, (b - a) / K) for (a, b), K in zip(state.domain, state.values.shape)]


def _k_mesh(state: GridState):
    return np.meshgrid(*wavenumbers(state), indexing="ij")


@dataclass
class SpectralPlan:
    """Cached multipliers for repeated steps of fixed size."""

    k: list
    k2: np.ndarray
    potential: np.ndarray
    grad_potential: np.ndarray
    eps: float
    tau: float

    def kinetic_phase(self, t: float) -> np.ndarray:
        return np.exp(-0.5j * t * self.eps * self.k2)

    def potential_phase(self, t: float) -> np.ndarray:
        return np.exp(-1j * t * self.potential / self.eps)


def make_plan(model: PotentialModel, state: GridState, tau: float) -> SpectralPlan:
    if model.dim != state.dim:
        raise ValueError("potential and grid dimensions differ")
    k = _k_mesh(state)
    k2 = sum(kj**2 for kj in k)
    pts = state.points()
    V = model.value(pts).reshape(state.values.shape)
    G = np.moveaxis(model.gradient(pts).reshape(state.values.shape + (state.dim,)), -1, 0)
    return SpectralPlan(k, k2, V, G, state.eps, tau)


def _fourier_multiply(values, mult):
    return np.fft.ifftn(np.fft.fftn(values) * mult)


def strang_step(model: PotentialModel, psi: GridState, tau: float, plan: Optional[SpectralPlan] = None) -> GridState:
    """exp(tau X/2) exp(tau Y) exp(tau X/2)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    plan = plan or make_plan(model, psi, tau)
    half_v = plan.potential_phase(0.5 * tau)
    v = half_v * psi.values
    v = _fourier_multiply(v, plan.kinetic_phase(tau))
    return psi.with_values(half_v * v)


def _gradient(values, plan: SpectralPlan):
    hat = np.fft.fftn(values)
    return [np.fft.ifftn(1j * kj * hat) for kj in plan.k]


def _divergence(fields, plan: SpectralPlan):
    return sum(np.fft.ifftn(1j * kj * np.fft.fftn(f)) for kj, f in zip(plan.k, fields))


def commutator_XY(values, plan: SpectralPlan):
    """[X, Y] phi = -1/2 (grad V . D phi + D . (grad V phi)) with spectral D (skew-Hermitian)."""
    grad = _gradient(values, plan)
    first = sum(g * d for g, d in zip(plan.grad_potential, grad))
    second = _divergence([g * values for g in plan.grad_potential], plan)
    return -0.5 * (first + second)


def _apply_X(values, plan):
    return -1j / plan.eps * plan.potential * values


def _apply_Y(values, plan):
    return _fourier_multiply(values, -0.5j * plan.eps * plan.k2)


def apply_C3(values, plan: SpectralPlan):
    """C3 = [X,[X,Y]]/48 + [Y,[X,Y]]/24 by composition of X, Y and [X,Y]."""
    B = lambda v: commutator_XY(v, plan)
    xb = _apply_X(B(values), plan) - B(_apply_X(values, plan))
    yb = _apply_Y(B(values), plan) - B(_apply_Y(values, plan))
    return xb / 48.0 + yb / 24.0


def zassenhaus_step(model: PotentialModel, psi: GridState, tau: float, plan: Optional[SpectralPlan] = None,
                    tol: float = 1e-12) -> GridState:
    """exp(tau X/2) exp(tau Y/2) exp(2 tau^3 C3) exp(tau Y/2) exp(tau X/2)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    plan = plan or make_plan(model, psi, tau)
    shape = psi.values.shape
    half_v = plan.potential_phase(0.5 * tau)
    quarter_k = plan.kinetic_phase(0.5 * tau)
    v = _fourier_multiply(half_v * psi.values, quarter_k)
    # exp(2 tau^3 C3) = exp(-i theta A) with A = i C3 Hermitian
    hermitian = lambda w: (1j * apply_C3(w.reshape(shape), plan)).ravel()
    v = hermitian_exp_action(hermitian, v.ravel(), 2.0 * tau**3, tol=tol, check_hermitian=False).reshape(shape)
    v = _fourier_multiply(v, quarter_k)
    return psi.with_values(half_v * v)


def propagate_grid(model: PotentialModel, psi0: GridState, tau: float, n: int, method: str = "strang",
                   snapshot_every: int = 0):
    """n steps; returns the final state, or (final, snapshots) when ``snapshot_every > 0``."""
    step = {"strang": strang_step, "zassenhaus": zassenhaus_step}.get(method)
    if step is None:
        raise ValueError("method must be 'strang' or 'zassenhaus'")
    plan = make_plan(model, psi0, tau)
    psi, snaps = psi0, [psi0]
    for i in range(n):
        psi = step(model, psi, tau, plan)
        if snapshot_every and (i + 1) % snapshot_every == 0:
            snaps.append(psi)
    return (psi, snaps) if snapshot_every else psi


class ExactPropagator:
    """exp(-i t H / eps) for the discretised H = diag(V) + spectral kinetic energy (d = 1).

    The kinetic matrix is a real symmetric circulant, so H is diagonalised once
    with a real symmetric eigensolver and reused for any t.
    """

    def __init__(self, model: PotentialModel, template: GridState):
        if template.dim != 1:
            raise ValueError("exact propagator is limited to d = 1")
        K = template.K
        (k,) = wavenumbers(template)
        symbol = 0.5 * template.eps**2 * k**2
        col = np.fft.ifft(symbol).real
        idx = (np.arange(K)[:, None] - np.arange(K)[None, :]) % K
        H = col[idx] + np.diag(model.value(template.points()))
        self.evals, self.evecs = np.linalg.eigh(0.5 * (H + H.T))
        self.template = template

    def __call__(self, psi0: GridState, t: float) -> GridState:
        _check_same_grid(psi0, self.template)
        coef = self.evecs.T @ psi0.values
        phase = np.exp(-1j * t * self.evals / psi0.eps)
        return psi0.with_values(self.evecs @ (phase * coef))


def h_m_eps_norm(psi: GridState, m: int) -> float:
    """sqrt(sum_{|alpha| <= m} ||(eps d)^alpha psi||^2) via Parseval."""
    if not 0 <= m <= 4:
        raise ValueError("m must lie in [0, 4]")
    k = _k_mesh(psi)
    hat = np.fft.fftn(psi.values)
    power = np.abs(hat) ** 2 * psi.cell_volume / psi.values.size
    weight = np.zeros(psi.values.shape)
    for alpha in itertools.product(range(m + 1), repeat=psi.dim):
        if sum(alpha) <= m:
            term = np.ones(psi.values.shape)
            for kj, a in zip(k, alpha):
                term = term * (psi.eps * kj) ** (2 * a)
            weight += term
    return float(np.sqrt(np.sum(weight * power)))


def l2_error(psi: GridState, phi: GridState, phase_aligned: bool = False) -> float:
    """||psi - phi||, or min over theta of ||psi - e^{i theta} phi||."""
    _check_same_grid(psi, phi)
    if phase_aligned:
        overlap = phi.inner(psi)
        theta = np.angle(overlap) if abs(overlap) > 0 else 0.0
        diff = psi.values - np.exp(1j * theta) * phi.values
    else:
        diff = psi.values - phi.values
    return float(np.sqrt(np.sum(np.abs(diff) ** 2) * psi.cell_volume))


def outside_mass(psi: GridState, margin: float) -> float:
    """Squared norm within ``margin`` of the domain boundary (periodisation check)."""
    mask = np.zeros(psi.values.shape, dtype=bool)
    for axis, ((a, b), x) in enumerate(zip(psi.domain, psi.axes())):
        edge = (x < a + margin) | (x > b - margin)
        shape = [1] * psi.dim
        shape[axis] = -1
        mask |= edge.reshape(shape)
    return float(np.sum(np.abs(psi.values[mask]) ** 2) * psi.cell_volume)


def save_grid(psi: GridState, path) -> None:
    """Binary container: magic, header (d, K, eps, domain) and interleaved re/im float64."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<iid", psi.dim, psi.K, psi.eps))
        for a, b in psi.domain:
            fh.write(struct.pack("<dd", a, b))
        inter = np.empty(psi.values.size * 2)
        flat = psi.values.ravel()
        inter[0::2], inter[1::2] = flat.real, flat.imag
        fh.write(inter.astype("<f8").tobytes())


def load_grid(path) -> GridState:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a grid container")
        d, K, eps = struct.unpack("<iid", fh.read(16))
        domain = tuple(struct.unpack("<dd", fh.read(16)) for _ in range(d))
        inter = np.frombuffer(fh.read(), dtype="<f8")
    values = (inter[0::2] + 1j * inter[1::2]).reshape((K,) * d)
    return GridState(values, domain, eps)


def grid_to_csv(psi: GridState, path) -> None:
    if psi.dim != 1:
        raise ValueError("CSV export is for d = 1")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "re", "im"])
        for x, v in zip(psi.axes()[0], psi.values):
            writer.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
