"""Variational Gaussian wave packets in Hagedorn's parametrisation.

A packet is u(x) = exp((i/eps) (1/2 (x-q)^T P Q^{-1} (x-q) + p^T (x-q) + zeta)).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .classical import hagedorn_residuals
from .potentials import PotentialModel
from .quadrature import QuadratureRule, gaussian_change_of_vars, gauss_hermite_tensor

DEFAULT_NODES_PER_DIM = 8


class FrameError(ValueError):
    """Frame is singular or violates the Hagedorn relations."""


class BranchError(ArithmeticError):
    """Matrix logarithm would cross the branch cut; reduce the step size."""


@dataclass(frozen=True)
class GaussianParams:
    q: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    zeta: complex
    eps: float
    sqrt_det: Optional[complex] = None  # continuous branch of det(Q)^{1/2}

    @property
    def dim(self) -> int:
        return len(self.q)


def make_params(q, p, Q=None, P=None, eps: float = 1.0, zeta: Optional[complex] = None) -> GaussianParams:
    """Build a packet; with ``zeta=None`` it is chosen so that the packet has unit norm
    and coincides with the normalised form (principal branch of det Q^{1/2})."""
    q = np.atleast_1d(np.asarray(q, dtype=float)).copy()
    p = np.atleast_1d(np.asarray(p, dtype=float)).copy()
    d = len(q)
    Q = np.eye(d, dtype=complex) if Q is None else np.atleast_2d(np.asarray(Q, dtype=complex)).copy()
    P = 1j * np.eye(d, dtype=complex) if P is None else np.atleast_2d(np.asarray(P, dtype=complex)).copy()
    sqrt_det = np.sqrt(np.linalg.det(Q) + 0j)
    if zeta is None:
        zeta = 1j * eps * (d / 4.0 * np.log(np.pi * eps) + np.log(sqrt_det))
    return GaussianParams(q, p, Q, P, complex(zeta), float(eps), complex(sqrt_det))


def check_frame(Q, P, tol: float = 1e-9) -> None:
    Q = np.atleast_2d(Q)
    if np.linalg.cond(Q) > 1e14:
        raise FrameError("Q is singular")
    r1, r2 = hagedorn_residuals(Q, P)
    scale = max(1.0, np.linalg.norm(Q, 2) * np.linalg.norm(P, 2))
    if max(r1, r2) > tol * scale:
        raise FrameError(f"Hagedorn relations violated (residuals {r1:.2e}, {r2:.2e})")


@dataclass(frozen=True)
class WidthMatrix:
    C: np.ndarray
    imc_inverse: np.ndarray
    residual: float  # discarded imaginary part of Q Q^*

    def __iter__(self):
        return iter((self.C, self.imc_inverse))


def width_matrix(params: GaussianParams, check: bool = True) -> WidthMatrix:
    """C = P Q^{-1} (symmetrised) and (Im C)^{-1} = Re(Q Q^*); unpacks as a pair."""
    if check:
        check_frame(params.Q, params.P)
    C = params.P @ np.linalg.inv(params.Q)
    C = 0.5 * (C + C.T)
    QQ = params.Q @ params.Q.conj().T
    return WidthMatrix(C, QQ.real, float(np.max(np.abs(QQ.imag))))


def evaluate(params: GaussianParams, x, normalized: bool = False) -> np.ndarray:
    """Evaluate the packet at points ``x`` of shape (..., d).

    ``normalized=True`` gives the unit-norm form
    (pi eps)^{-d/4} det(Q)^{-1/2} exp(i/(2 eps) (x-q)^T C (x-q) + i/eps p.(x-q)),
    using the stored continuous branch of det(Q)^{1/2} when available.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and params.dim == 1:
        x = x[:, None]
    Q_inv = np.linalg.inv(params.Q)
    C = params.P @ Q_inv
    C = 0.5 * (C + C.T)
    y = x - params.q
    eps = params.eps
    quad = 0.5 * np.einsum("...i,ij,...j->...", y, C, y) + y @ params.p
    if normalized:
        d = params.dim
        sd = params.sqrt_det if params.sqrt_det is not None else np.sqrt(np.linalg.det(params.Q) + 0j)
        return (np.pi * eps) ** (-d / 4) / sd * np.exp(1j / eps * quad)
    return np.exp(1j / eps * (quad + params.zeta))


def norm(params: GaussianParams) -> float:
    """L2 norm (pi eps)^{d/4} det(Im C)^{-1/4} exp(-Im zeta / eps)."""
    C = params.P @ np.linalg.inv(params.Q)
    im_c = 0.5 * (C.imag + C.imag.T)
    evals = np.linalg.eigvalsh(im_c)
    if evals.min() <= 0:
        raise FrameError("Im C is not positive definite")
    d = params.dim
    log_n = d / 4 * np.log(np.pi * params.eps) - 0.25 * np.sum(np.log(evals)) - params.zeta.imag / params.eps
    return float(np.exp(log_n))


def _check_rule(quad: QuadratureRule, d: int):
    if quad.dim != d:
        raise ValueError(f"quadrature rule has dimension {quad.dim}, packet has dimension {d}")


def gaussian_nodes(params: GaussianParams, quad: QuadratureRule):
    """Nodes x_i and weights for averages against |u|^2 / ||u||^2."""
    _check_rule(quad, params.dim)
    cov = gaussian_change_of_vars(params.Q, params.q, params.eps)
    x = cov(quad.nodes)
    w = quad.weights * np.pi ** (-params.dim / 2)
    return x, w


def potential_averages(model: PotentialModel, params: GaussianParams, quad: Optional[QuadratureRule] = None, check_norm: bool = True):
    """Gaussian averages (<V>, <grad V>, <Hess V>) over the normalised |u|^2."""
    if quad is None:
        quad = gauss_hermite_tensor(DEFAULT_NODES_PER_DIM, params.dim)
    if check_norm and abs(norm(params) - 1.0) > 1e-8:
        raise ValueError("packet is not normalised")
    x, w = gaussian_nodes(params, quad)
    v = w @ model.value(x)
    g = w @ model.gradient(x)
    h = np.einsum("i,ijk->jk", w, model.hessian(x))
    return float(v), g, 0.5 * (h + h.T)


def zeta_width_term(params: GaussianParams, hess_avg: np.ndarray, form: str = "Q") -> float:
    """(eps/4) tr((Im C)^{-1} <Hess V>) written in the Q-form tr(Q^* H Q) or the Im C form."""
    if form == "Q":
        val = np.trace(params.Q.conj().T @ hess_avg @ params.Q)
    elif form == "ImC":
        C = params.P @ np.linalg.inv(params.Q)
        val = np.trace(np.linalg.inv(C.imag) @ hess_avg)
    else:
        raise ValueError("form must be 'Q' or 'ImC'")
    return float(0.25 * params.eps * val.real)


@dataclass
class VariationalRHS:
    dq: np.ndarray
    dp: np.ndarray
    dQ: np.ndarray
    dP: np.ndarray
    dzeta: complex


def variational_rhs(model: PotentialModel, params: GaussianParams, quad: Optional[QuadratureRule] = None) -> VariationalRHS:
    v, g, h = potential_averages(model, params, quad)
    C = params.P @ np.linalg.inv(params.Q)
    dzeta = (
        0.5 * params.p @ params.p
        - v
        + 0.5j * params.eps * np.trace(C)
        + zeta_width_term(params, h, "Q")
    )
    return VariationalRHS(params.p.copy(), -g, params.P.copy(), -h @ params.Q, complex(dzeta))


def _potential_kick(model, params, tau, quad):
    v, g, h = potential_averages(model, params, quad, check_norm=False)
    p = params.p - 0.5 * tau * g
    P = params.P - 0.5 * tau * h @ params.Q
    zeta = params.zeta - 0.5 * tau * v + 0.125 * tau * params.eps * np.trace(params.Q.conj().T @ h @ params.Q).real
    return replace(params, p=p, P=P, zeta=complex(zeta))


def _log_det_increment(M: np.ndarray) -> complex:
    """tr log M with the principal matrix logarithm; raises if an eigenvalue is on (-inf, 0]."""
    lam = np.linalg.eigvals(M)
    on_cut = (np.abs(lam.imag) <= 1e-14 * np.maximum(1.0, np.abs(lam))) & (lam.real <= 0)
    if np.any(on_cut):
        raise BranchError("branch failure: Id + tau P Q^{-1} has an eigenvalue on the closed negative real axis; use a smaller step")
    return complex(np.sum(np.log(lam)))


def _free_drift(params: GaussianParams, tau: float) -> GaussianParams:
    Q_inv = np.linalg.inv(params.Q)
    M = np.eye(params.dim) + tau * params.P @ Q_inv
    log_inc = _log_det_increment(M)
    q = params.q + tau * params.p
    Q = params.Q + tau * params.P
    zeta = params.zeta + 0.5 * tau * params.p @ params.p + 0.5j * params.eps * log_inc
    sqrt_det = None if params.sqrt_det is None else params.sqrt_det * np.exp(0.5 * log_inc)
    return replace(params, q=q, Q=Q, zeta=complex(zeta), sqrt_det=sqrt_det)


def variational_split_step(model: PotentialModel, params: GaussianParams, tau: float, quad: Optional[QuadratureRule] = None) -> GaussianParams:
    """One step of the norm-conserving variational splitting: kick, drift, kick."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if quad is None:
        quad = gauss_hermite_tensor(DEFAULT_NODES_PER_DIM, params.dim)
    out = _potential_kick(model, params, tau, quad)
    out = _free_drift(out, tau)
    out = _potential_kick(model, out, tau, quad)
    rho = 1.0 / np.linalg.norm(out.Q, 2) ** 2
    if rho < 1e-8 / out.eps:
        warnings.warn(f"width matrix nearly degenerate (rho={rho:.2e}); beyond the Ehrenfest time scale", RuntimeWarning)
    return out


def variational_propagate(model, params, tau: float, n_steps: int, quad=None, every: int = 0):
    """Repeated split steps; returns final params or (final, snapshots) when ``every > 0``."""
    if quad is None:
        quad = gauss_hermite_tensor(DEFAULT_NODES_PER_DIM, params.dim)
    snaps = [params]
    for n in range(n_steps):
        params = variational_split_step(model, params, tau, quad)
        if every and (n + 1) % every == 0:
            snaps.append(params)
    return (params, snaps) if every else params


@dataclass
class ObservableAverage:
    mean_q: np.ndarray
    mean_p: np.ndarray
    energy: Optional[float]
    norm: float
    angular_momentum: Optional[np.ndarray]
    kinetic: float


_LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_a, _b, _c] = 1.0
    _LEVI_CIVITA[_a, _c, _b] = -1.0


def angular_momentum(params: GaussianParams) -> np.ndarray:
    """Total angular momentum per 3D block: q x p plus the width contribution.

    With y = x - q and covariance (eps/2) Q Q^*, the width part is
    epsilon_abc Re(C Sigma)_cb, where C = P Q^{-1}.
    """
    d = params.dim
    if d % 3:
        raise ValueError("angular momentum needs d = 3N")
    C = params.P @ np.linalg.inv(params.Q)
    CS = (C @ (0.5 * params.eps * params.Q @ params.Q.conj().T)).real
    out = []
    for k in range(d // 3):
        s = slice(3 * k, 3 * k + 3)
        centre = np.cross(params.q[s], params.p[s])
        width = np.einsum("abc,cb->a", _LEVI_CIVITA, CS[s, s])
        out.append(centre + width)
    return np.array(out)


def packet_observables(params: GaussianParams, model: Optional[PotentialModel] = None, quad: Optional[QuadratureRule] = None) -> ObservableAverage:
    """Position/momentum means, energy (if a model is given), norm and angular momentum."""
    nrm = norm(params)
    kinetic = 0.5 * params.p @ params.p + 0.25 * params.eps * np.trace(params.P @ params.P.conj().T).real
    energy = None
    if model is not None:
        unit = replace(params, zeta=params.zeta + 1j * params.eps * np.log(nrm))
        energy = float(kinetic + potential_averages(model, unit, quad)[0])
    ang = angular_momentum(params) if params.dim % 3 == 0 else None
    return ObservableAverage(params.q.copy(), params.p.copy(), energy, nrm, ang, float(kinetic))


def continuous_log_det(Q_path) -> np.ndarray:
    """log det Q along a finely sampled path with the imaginary part unwrapped."""
    dets = np.array([np.linalg.det(Q) for Q in Q_path])
    return np.log(np.abs(dets)) + 1j * np.unwrap(np.angle(dets))


def exact_quadratic_solution(model: PotentialModel, params: GaussianParams, t: float, samples_per_unit: int = 200) -> GaussianParams:
    """Exact Gaussian solution for a harmonic or free potential (analytic flow required)."""
    if model.analytic_flow is None or model.name not in ("harmonic", "free"):
        raise ValueError("exact solution needs a harmonic or free potential")
    flow = model.analytic_flow

    def frame_at(s):
        q, p = flow(params.q, params.p, s)
        Qr, Pr = flow(params.Q.real.T, params.P.real.T, s)
        Qi, Pi = flow(params.Q.imag.T, params.P.imag.T, s)
        return q, p, (Qr + 1j * Qi).T, (Pr + 1j * Pi).T

    n = max(2, int(np.ceil(abs(t) * samples_per_unit)) + 1)
    path = [frame_at(s)[2] for s in np.linspace(0.0, t, n)]
    logs = continuous_log_det(path)
    q, p, Q, P = frame_at(t)
    action = 0.5 * (q @ p - params.q @ params.p)
    zeta = params.zeta + action + 0.5j * params.eps * (logs[-1] - logs[0])
    sqrt_det = None
    if params.sqrt_det is not None:
        sqrt_det = params.sqrt_det * np.exp(0.5 * (logs[-1] - logs[0]))
    return GaussianParams(q, p, Q, P, complex(zeta), params.eps, sqrt_det)
