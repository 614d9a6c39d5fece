"""Hagedorn wave packets: index sets, basis recurrence, ladder actions, Galerkin
matrices and the time integrator with exponential midpoint coefficients."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .classical import TrajectoryState, verlet_step
from .gaussian import GaussianParams, check_frame, make_params
from .krylov import hermitian_exp_action
from .potentials import PotentialModel, taylor_remainder
from .quadrature import QuadratureRule, gauss_hermite_tensor, gaussian_change_of_vars

KRYLOV_TOL = 1e-12
KRYLOV_MAX_DIM = 30


@dataclass(frozen=True)
class MultiIndexSet:
    dim: int
    kind: str
    K: int
    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "_offsets", {k: i for i, k in enumerate(self.indices)})

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, k) -> bool:
        return tuple(k) in self._offsets

    def offset(self, k) -> int:
        return self._offsets[tuple(k)]

    def max_degree(self) -> int:
        return max(sum(k) for k in self.indices)

    def is_downward_closed(self) -> bool:
        for k in self.indices:
            for j in range(self.dim):
                if k[j] > 0 and _shift(k, j, -1) not in self._offsets:
                    return False
        return True


def _shift(k, j, s):
    k = list(k)
    k[j] += s
    return tuple(k)


def _graded_lex_key(k):
    return (sum(k), tuple(-v for v in k))


def build_index_set(dim: int, kind: str, K: int) -> MultiIndexSet:
    """Cube {k_j <= K}, simplex {|k| <= K} or hyperbolic {prod (1 + k_j) <= K}."""
    if K < 0:
        raise ValueError("K must be non-negative")
    if kind == "cube":
        members = itertools.product(range(K + 1), repeat=dim)
    elif kind == "simplex":
        members = (k for k in itertools.product(range(K + 1), repeat=dim) if sum(k) <= K)
    elif kind == "hyperbolic":
        members = (k for k in itertools.product(range(max(K, 1)), repeat=dim) if np.prod([1 + v for v in k]) <= K)
    else:
        raise ValueError(f"unknown index set kind {kind!r}")
    indices = tuple(sorted(members, key=_graded_lex_key))
    return MultiIndexSet(dim, kind, K, indices)


def custom_index_set(indices: Sequence[Sequence[int]]) -> MultiIndexSet:
    indices = [tuple(int(v) for v in k) for k in indices]
    return MultiIndexSet(len(indices[0]), "custom", -1, tuple(sorted(set(indices), key=_graded_lex_key)))


@dataclass(frozen=True)
class HagedornState:
    """e^{iS/eps} sum_k c_k phi_k[q, p, Q, P]; the frame's ``zeta`` field holds S."""

    frame: GaussianParams
    index_set: MultiIndexSet
    coeffs: np.ndarray
    truncation_mass: float = 0.0
    t: float = 0.0

    @property
    def S(self) -> float:
        return float(np.real(self.frame.zeta))


def hagedorn_frame(q, p, Q=None, P=None, eps: float = 1.0, S: float = 0.0) -> GaussianParams:
    frame = make_params(q, p, Q, P, eps=eps, zeta=S)
    check_frame(frame.Q, frame.P)
    return frame


def hagedorn_state(frame: GaussianParams, index_set: MultiIndexSet, coeffs=None, k0=None) -> HagedornState:
    """State with the given coefficient vector, or c = delta_{k0} (default k0 = 0)."""
    if coeffs is None:
        coeffs = np.zeros(len(index_set), dtype=complex)
        coeffs[index_set.offset(k0 if k0 is not None else (0,) * index_set.dim)] = 1.0
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (len(index_set),):
        raise ValueError("coefficient vector does not match the index set")
    return HagedornState(frame, index_set, coeffs)


def _sqrt_det(frame: GaussianParams) -> complex:
    return frame.sqrt_det if frame.sqrt_det is not None else np.sqrt(np.linalg.det(frame.Q) + 0j)


def evaluate_basis(frame: GaussianParams, index_set: MultiIndexSet, x, parent: str = "first") -> np.ndarray:
    """phi_k(x) for all k in the set, shape (len(set), n_points).

    Each phi_k is obtained from a parent k - <j> through
    Q (sqrt(k_j+1) phi_{k+<j>})_j = sqrt(2/eps) (x-q) phi_k - conj(Q) (sqrt(k_j) phi_{k-<j>})_j.
    ``parent`` picks the first or last direction j with k_j > 0.
    """
    if not index_set.is_downward_closed():
        raise ValueError("index set is not downward closed")
    d = frame.dim
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    eps = frame.eps
    Q_inv = np.linalg.inv(frame.Q)
    C = frame.P @ Q_inv
    C = 0.5 * (C + C.T)
    y = x - frame.q
    phase = 0.5 * np.einsum("ni,ij,nj->n", y, C, y) + y @ frame.p
    out = np.zeros((len(index_set), len(x)), dtype=complex)
    zero = (0,) * d
    out[index_set.offset(zero)] = (np.pi * eps) ** (-d / 4) / _sqrt_det(frame) * np.exp(1j / eps * phase)
    mixed = Q_inv @ frame.Q.conj()
    scaled = np.sqrt(2.0 / eps) * (y @ Q_inv.T)  # (n, d)
    for k in index_set.indices:
        if k == zero:
            continue
        dirs = [j for j in range(d) if k[j] > 0]
        j = dirs[0] if parent == "first" else dirs[-1]
        par = _shift(k, j, -1)
        acc = scaled[:, j] * out[index_set.offset(par)]
        for i in range(d):
            if par[i] > 0:
                acc = acc - mixed[j, i] * np.sqrt(par[i]) * out[index_set.offset(_shift(par, i, -1))]
        out[index_set.offset(k)] = acc / np.sqrt(k[j])
    return out


def ladder_on_coeffs(index_set: MultiIndexSet, coeffs, j: int, direction: str):
    """Raise: c'_{k+<j>} += sqrt(k_j+1) c_k. Lower: c'_{k-<j>} += sqrt(k_j) c_k.

    Returns (new coefficients, mass dropped by leaving the set).
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    out = np.zeros_like(coeffs)
    dropped = 0.0
    for k, c in zip(index_set.indices, coeffs):
        if direction == "raise":
            target, amp = _shift(k, j, 1), np.sqrt(k[j] + 1)
        elif direction == "lower":
            if k[j] == 0:
                continue
            target, amp = _shift(k, j, -1), np.sqrt(k[j])
        else:
            raise ValueError("direction must be 'raise' or 'lower'")
        if target in index_set:
            out[index_set.offset(target)] += amp * c
        else:
            dropped += abs(amp * c) ** 2
    return out, dropped


def _nodes_per_dim(quad: QuadratureRule) -> Optional[int]:
    prov = quad.provenance
    if prov.get("kind") == "gh":
        return prov.get("m")
    return None


def _galerkin_nodes(frame: GaussianParams, index_set: MultiIndexSet, quad: QuadratureRule):
    d = frame.dim
    if quad.dim != d:
        raise ValueError(f"quadrature rule has dimension {quad.dim}, frame has dimension {d}")
    m = _nodes_per_dim(quad)
    need = index_set.max_degree() + 2
    if m is not None and m < need:
        raise ValueError(f"quadrature under-resolved: need at least {need} nodes per dimension, got {m}")
    cov = gaussian_change_of_vars(frame.Q, frame.q, frame.eps)
    x = cov(quad.nodes)
    w = quad.plain_weights * cov.jacobian
    return x, w


def default_rule(index_set: MultiIndexSet, extra: int = 16) -> QuadratureRule:
    return gauss_hermite_tensor(index_set.max_degree() + extra, index_set.dim)


def gram_matrix(frame: GaussianParams, index_set: MultiIndexSet, quad: Optional[QuadratureRule] = None) -> np.ndarray:
    """<phi_l | phi_k> by quadrature (orthonormality oracle)."""
    quad = quad or default_rule(index_set)
    x, w = _galerkin_nodes(frame, index_set, quad)
    phi = evaluate_basis(frame, index_set, x)
    return (phi.conj() * w) @ phi.T


def galerkin_matrix(model: PotentialModel, frame: GaussianParams, index_set: MultiIndexSet,
                    quad: Optional[QuadratureRule] = None) -> np.ndarray:
    """Hermitian matrix <phi_l | W_q phi_k> of the non-quadratic remainder at q."""
    quad = quad or default_rule(index_set)
    x, w = _galerkin_nodes(frame, index_set, quad)
    phi = evaluate_basis(frame, index_set, x)
    W = taylor_remainder(model, frame.q, x)
    G = (phi.conj() * (w * W)) @ phi.T
    return 0.5 * (G + G.conj().T)


def _advance_frame(model: PotentialModel, frame: GaussianParams, tau: float, order: int) -> GaussianParams:
    traj = TrajectoryState(frame.q, frame.p, frame.Q, frame.P, np.asarray(frame.zeta.real))
    new = verlet_step(model, traj, tau, order)
    ratio = np.linalg.det(np.linalg.solve(frame.Q.T, new.Q.T).T)
    sqrt_det = _sqrt_det(frame) * np.sqrt(ratio + 0j)
    return replace(frame, q=new.q, p=new.p, Q=new.Q, P=new.P, zeta=complex(float(new.S)), sqrt_det=complex(sqrt_det))


def hagedorn_step_pair(model: PotentialModel, state: HagedornState, tau: float, order_r: int = 2,
                       quad: Optional[QuadratureRule] = None) -> HagedornState:
    """Two classical steps of size tau with one exponential midpoint coefficient step of size 2 tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    quad = quad or default_rule(state.index_set)
    mid = _advance_frame(model, state.frame, tau, order_r)
    G = galerkin_matrix(model, mid, state.index_set, quad)
    theta = 2.0 * tau / mid.eps
    coeffs = hermitian_exp_action(lambda v: G @ v, state.coeffs, theta, KRYLOV_TOL, KRYLOV_MAX_DIM, check_hermitian=False)
    end = _advance_frame(model, mid, tau, order_r)
    return HagedornState(end, state.index_set, coeffs, state.truncation_mass, state.t + 2 * tau)


def hagedorn_propagate(model, state: HagedornState, tau: float, n_pairs: int, order_r: int = 2, quad=None) -> HagedornState:
    quad = quad or default_rule(state.index_set)
    for _ in range(n_pairs):
        state = hagedorn_step_pair(model, state, tau, order_r, quad)
    return state


def synthesize(state: HagedornState, xs) -> np.ndarray:
    """psi(x) = e^{iS/eps} sum_k c_k phi_k(x)."""
    phi = evaluate_basis(state.frame, state.index_set, xs)
    return np.exp(1j * state.S / state.frame.eps) * (state.coeffs @ phi)
