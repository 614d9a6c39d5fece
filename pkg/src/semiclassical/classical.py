"""Stormer-Verlet propagation of trajectories, their linearisation and the action.

States may carry a leading batch axis: ``q`` and ``p`` of shape ``(..., d)``,
``Q`` and ``P`` of shape ``(..., d, d)``, ``S`` of shape ``(...)``. All step
functions operate on the whole batch at once.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List

import numpy as np

from .potentials import PotentialModel

TRIPLE_JUMP_OUTER = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
TRIPLE_JUMP_INNER = 1.0 - 2.0 * TRIPLE_JUMP_OUTER


class DegenerateFrameError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryState:
    q: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    S: np.ndarray
    t: float = 0.0

    @property
    def dim(self) -> int:
        return self.q.shape[-1]


def canonical_state(q, p, P_sign: complex = 1j) -> TrajectoryState:
    """Fresh trajectory with Q = Id, P = P_sign * Id and zero action."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    d = q.shape[-1]
    eye = np.broadcast_to(np.eye(d, dtype=complex), q.shape[:-1] + (d, d))
    return TrajectoryState(q.copy(), p.copy(), eye.copy(), P_sign * eye, np.zeros(q.shape[:-1]), 0.0)


def _matmul(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def _verlet(model: PotentialModel, state: TrajectoryState, tau: float) -> TrajectoryState:
    q, p, Q, P = state.q, state.p, state.Q, state.P
    v0 = model.value(q)
    p_half = p - 0.5 * tau * model.gradient(q)
    P_half = P - 0.5 * tau * _matmul(model.hessian(q), Q)
    q_new = q + tau * p_half
    Q_new = Q + tau * P_half
    v1 = model.value(q_new)
    p_new = p_half - 0.5 * tau * model.gradient(q_new)
    P_new = P_half - 0.5 * tau * _matmul(model.hessian(q_new), Q_new)
    S_new = state.S + tau * (0.5 * np.sum(p_half**2, axis=-1) - 0.5 * (v0 + v1))
    return TrajectoryState(q_new, p_new, Q_new, P_new, S_new, state.t + tau)


def verlet_step(model: PotentialModel, state: TrajectoryState, tau: float, order: int = 2) -> TrajectoryState:
    """Advance (q, p), the linearised frame (Q, P) and the action by one step.

    ``order=4`` composes three Verlet steps with the triple-jump coefficients.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if order == 2:
        return _verlet(model, state, tau)
    if order == 4:
        s = _verlet(model, state, TRIPLE_JUMP_OUTER * tau)
        s = _verlet(model, s, TRIPLE_JUMP_INNER * tau)
        s = _verlet(model, s, TRIPLE_JUMP_OUTER * tau)
        return replace(s, t=state.t + tau)
    raise ValueError("order must be 2 or 4")


def propagate(model: PotentialModel, state: TrajectoryState, tau: float, n_steps: int, order: int = 2) -> List[TrajectoryState]:
    """Return [state, step(state), ...] with ``n_steps + 1`` entries."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    out = [state]
    for _ in range(n_steps):
        state = verlet_step(model, state, tau, order)
        out.append(state)
    return out


def symplectic_matrix(Q, P) -> np.ndarray:
    Q = np.asarray(Q, dtype=complex)
    P = np.asarray(P, dtype=complex)
    top = np.concatenate([Q.real, Q.imag], axis=-1)
    bottom = np.concatenate([P.real, P.imag], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def symplectic_form(d: int) -> np.ndarray:
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = -np.eye(d)
    J[d:, :d] = np.eye(d)
    return J


def symplectic_defect(Q, P) -> float:
    """max |Y^T J Y - J| for Y = [[Re Q, Im Q], [Re P, Im P]] (max over a batch)."""
    Y = symplectic_matrix(Q, P)
    d = Y.shape[-1] // 2
    J = symplectic_form(d)
    defect = np.einsum("...ji,jk,...kl->...il", Y, J, Y) - J
    return float(np.max(np.abs(defect)))


def hagedorn_residuals(Q, P) -> tuple:
    """Residuals of Q^T P - P^T Q = 0 and Q^* P - P^* Q = 2i Id."""
    Q = np.asarray(Q, dtype=complex)
    P = np.asarray(P, dtype=complex)
    QT = np.swapaxes(Q, -1, -2)
    PT = np.swapaxes(P, -1, -2)
    d = Q.shape[-1]
    r1 = _matmul(QT, P) - _matmul(PT, Q)
    r2 = _matmul(QT.conj(), P) - _matmul(PT.conj(), Q) - 2j * np.eye(d)
    return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


def ehrenfest_diagnostics(Q, P) -> tuple:
    """(||Q||_2, 1/||Q||_2^2, 1/(2(||Q||_2^2 + ||P||_2^2)))."""
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    svals = np.linalg.svd(Q, compute_uv=False)
    if svals.min() <= 1e-14 * max(1.0, svals.max()):
        raise DegenerateFrameError("degenerate frame")
    norm_q = float(svals.max())
    norm_p = float(np.linalg.norm(P, 2))
    return norm_q, 1.0 / norm_q**2, 0.5 / (norm_q**2 + norm_p**2)


def energy(model: PotentialModel, q, p) -> np.ndarray:
    return 0.5 * np.sum(np.asarray(p) ** 2, axis=-1) + model.value(np.asarray(q))
