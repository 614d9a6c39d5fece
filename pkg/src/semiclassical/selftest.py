"""Fast invariant checks run by ``semiclassical selftest``."""
from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np
import scipy.linalg
import scipy.special

from .classical import canonical_state, hagedorn_residuals, symplectic_defect, verlet_step
from .gaussian import make_params, norm, variational_propagate
from .grid import make_grid, propagate_grid
from .hagedorn import build_index_set, gram_matrix, hagedorn_frame
from .krylov import hermitian_exp_action
from .phasespace import covariance_checks, wigner_gaussian
from .potentials import henon_heiles, torsional
from .quadrature import gauss_hermite, qmc_points, smolyak_gh


def _gh_exactness() -> Tuple[bool, str]:
    worst = 0.0
    for m in (1, 2, 5, 16):
        rule = gauss_hermite(m)
        for k in range(0, 2 * m, 2):
            exact = scipy.special.gamma((k + 1) / 2)
            got = rule.integrate(lambda x: x[:, 0] ** k)
            worst = max(worst, abs(got - exact) / exact)
    return worst < 1e-12, f"max relative error {worst:.1e}"


def _smolyak_nodes() -> Tuple[bool, str]:
    rule = smolyak_gh(2, 1)
    return len(rule) == 5, f"{len(rule)} nodes at d=2, L=1"


def _halton_prefix() -> Tuple[bool, str]:
    pts = qmc_points(1, 3)[:, 0]
    return bool(np.array_equal(pts, [0.5, 0.25, 0.75])), f"prefix {pts.tolist()}"


def _verlet_symplectic() -> Tuple[bool, str]:
    model = henon_heiles()
    state = canonical_state(np.array([0.3, -0.2]), np.array([0.1, 0.4]))
    for _ in range(1000):
        state = verlet_step(model, state, 0.01)
    defect = symplectic_defect(state.Q, state.P)
    r1, r2 = hagedorn_residuals(state.Q, state.P)
    worst = max(defect, r1, r2)
    return worst < 1e-12, f"defect {worst:.1e} after 1000 steps"


def _variational_norm() -> Tuple[bool, str]:
    params = make_params([0.8], [0.2], eps=0.05)
    out = variational_propagate(torsional(1), params, 0.01, 200)
    drift = abs(norm(out) - 1.0)
    return drift < 1e-10, f"norm drift {drift:.1e}"


def _grid_norm() -> Tuple[bool, str]:
    psi = make_grid(256, (-np.pi, np.pi), 0.05, lambda x: np.exp(-((x[:, 0] - 1) ** 2) / 0.1))
    out = propagate_grid(torsional(1), psi, 0.01, 100, "zassenhaus")
    drift = abs(out.norm() - psi.norm())
    return drift < 1e-12, f"norm drift {drift:.1e}"


def _hagedorn_orthonormal() -> Tuple[bool, str]:
    A = np.array([[1.2, 0.3], [0.0, 0.8]])
    S = np.array([[0.5, 0.1], [0.1, -0.2]])
    Q = A.astype(complex)
    P = S @ A + 1j * np.linalg.inv(A).T
    frame = hagedorn_frame([0.1, 0.2], [0.3, -0.1], Q, P, 0.1)
    G = gram_matrix(frame, build_index_set(2, "simplex", 5))
    err = float(np.max(np.abs(G - np.eye(len(G)))))
    return err < 1e-10, f"Gram deviation {err:.1e}"


def _wigner_covariance() -> Tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        A = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        S = rng.standard_normal((2, 2))
        S = 0.5 * (S + S.T)
        P = S @ A + 1j * np.linalg.inv(A).T
        checks = covariance_checks(wigner_gaussian(make_params([0, 0], [0, 0], A, P, eps=0.1)).G)
        worst = max(worst, checks["symmetry"], checks["symplectic"])
    return worst < 1e-10, f"worst residual {worst:.1e}"


def _krylov() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    H = rng.standard_normal((60, 60)) + 1j * rng.standard_normal((60, 60))
    H = 0.5 * (H + H.conj().T)
    v = rng.standard_normal(60) + 0j
    exact = scipy.linalg.expm(-0.7j * H) @ v
    got = hermitian_exp_action(lambda x: H @ x, v, 0.7)
    err = float(np.linalg.norm(got - exact))
    return err < 1e-10, f"error {err:.1e}"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("gauss-hermite exactness", _gh_exactness),
    ("smolyak node count", _smolyak_nodes),
    ("halton prefix", _halton_prefix),
    ("verlet symplecticity", _verlet_symplectic),
    ("variational norm conservation", _variational_norm),
    ("grid norm conservation", _grid_norm),
    ("hagedorn orthonormality", _hagedorn_orthonormal),
    ("wigner covariance", _wigner_covariance),
    ("krylov exponential", _krylov),
]


def run_selftest() -> List[Tuple[str, bool, str]]:
    results = []
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # report, do not abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
