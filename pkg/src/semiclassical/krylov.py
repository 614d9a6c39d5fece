"""Lanczos approximation of exp(-i theta A) v for Hermitian A."""
from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg


class KrylovError(ArithmeticError):
    pass


def _lanczos_exp(apply_A, v, theta, tol, max_dim):
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    m = min(max_dim, n)
    basis = np.zeros((m + 1, n), dtype=complex)
    basis[0] = v / beta0
    alphas, betas = [], []
    for j in range(m):
        w = np.asarray(apply_A(basis[j]), dtype=complex)
        a = np.vdot(basis[j], w).real
        w = w - a * basis[j]
        if j > 0:
            w = w - betas[-1] * basis[j - 1]
        # full reorthogonalisation, applied twice
        for _ in range(2):
            w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        alphas.append(a)
        if j == 0:
            evals, evecs = np.array(alphas), np.ones((1, 1))
        else:
            evals, evecs = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        y = evecs @ (np.exp(-1j * theta * evals) * evecs[0].conj())
        estimate = b * abs(y[-1])
        if b <= 1e-14 * max(1.0, abs(a)) or estimate <= tol or j + 1 == n:
            return beta0 * (basis[: j + 1].T @ y), True
        betas.append(b)
        basis[j + 1] = w / b
    return beta0 * (basis[:m].T @ y), False


def hermitian_exp_action(apply_A: Callable[[np.ndarray], np.ndarray], v, theta: float, tol: float = 1e-12,
                         max_dim: int = 30, check_hermitian: bool = True, max_splits: int = 12) -> np.ndarray:
    """Approximate exp(-i theta A) v by Lanczos with full reorthogonalisation.

    Iteration stops when b_j |(exp(-i theta T_j) e_1)_j| <= tol, on lucky
    breakdown, or at ``max_dim``; in the last case theta is halved and the
    action applied twice, up to ``max_splits`` times.
    """
    v = np.asarray(v, dtype=complex)
    if theta == 0 or not np.any(v):
        return v.copy()
    if check_hermitian:
        rng = np.random.default_rng(0)
        a = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
        b = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
        Aa, Ab = apply_A(a), apply_A(b)
        gap = abs(np.vdot(a, Ab) - np.vdot(Aa, b))
        if gap > 1e-8 * max(1.0, np.linalg.norm(Aa) * np.linalg.norm(b)):
            raise ValueError("operator is not Hermitian")

    def run(vec, th, depth):
        out, ok = _lanczos_exp(apply_A, vec, th, tol, max_dim)
        if ok:
            return out
        if depth >= max_splits:
            raise KrylovError("Krylov iteration did not converge")
        half = run(vec, 0.5 * th, depth + 1)
        return run(half, 0.5 * th, depth + 1)

    return run(v, float(theta), 0)
