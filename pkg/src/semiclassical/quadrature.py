"""Quadrature rules: Gauss-Hermite, Smolyak sparse grids, Monte Carlo and Halton points.

Gauss-Hermite rules integrate against the weight exp(-|x|^2). Each rule also
carries the weight-absorbed form w_i = omega_i * exp(|x_i|^2), which integrates
plain functions f via sum_i w_i f(x_i).
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import ndtri

SMOLYAK_MERGE_TOL = 1e-12


@dataclass
class QuadratureRule:
    nodes: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,)
    provenance: dict = field(default_factory=dict)
    absorbed_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.nodes) != len(self.weights):
            raise ValueError("nodes and weights differ in length")

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def plain_weights(self) -> np.ndarray:
        """Weights for integrating f(x) dx directly (weight-absorbed form)."""
        if self.absorbed_weights is not None:
            return self.absorbed_weights
        return self.weights * np.exp(np.sum(self.nodes**2, axis=1))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> complex:
        """sum_i w_i f(x_i) for the exp(-|x|^2)-weighted integral."""
        return np.sum(self.weights * f(self.nodes))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j}" for j in range(self.dim)] + ["weight"])
            for x, w in zip(self.nodes, self.weights):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])


def hermite_functions(x: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal Hermite functions psi_0..psi_{n-1} at x, shape (n, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n,) + x.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if n > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, n - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def gauss_hermite(m: int) -> QuadratureRule:
    """m-point Gauss-Hermite rule for the weight exp(-x^2).

    Nodes are eigenvalues of the symmetric tridiagonal Jacobi matrix of the
    Hermite recurrence (Golub-Welsch). Weights come from the Christoffel
    function evaluated with Hermite functions, which keeps the absorbed weights
    accurate at the outermost nodes where eigenvector components underflow.
    """
    if not 1 <= m <= 128:
        raise ValueError("m must lie in [1, 128]")
    off = np.sqrt(np.arange(1, m) / 2.0)
    try:
        nodes = scipy.linalg.eigh_tridiagonal(np.zeros(m), off, eigvals_only=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError("eigen-solve failure") from exc
    nodes = 0.5 * (nodes - nodes[::-1])  # exact symmetry
    psi = hermite_functions(nodes, m)
    absorbed = 1.0 / np.sum(psi**2, axis=0)
    weights = absorbed * np.exp(-nodes**2)
    return QuadratureRule(nodes[:, None], weights, {"kind": "gh", "m": m, "dim": 1}, absorbed)


def tensor_rule(rules: Sequence[QuadratureRule]) -> QuadratureRule:
    """Tensor product of rules (first factor varies slowest)."""
    nodes = np.array([np.concatenate(c) for c in itertools.product(*[r.nodes for r in rules])])
    weights = np.array([np.prod(c) for c in itertools.product(*[r.weights for r in rules])])
    absorbed = np.array([np.prod(c) for c in itertools.product(*[r.plain_weights for r in rules])])
    prov = {"kind": "tensor", "factors": [r.provenance for r in rules], "dim": int(nodes.shape[1])}
    return QuadratureRule(nodes, weights, prov, absorbed)


def gauss_hermite_tensor(m: int, dim: int) -> QuadratureRule:
    """Full tensor Gauss-Hermite rule with m points per axis."""
    rule = tensor_rule([gauss_hermite(m)] * dim)
    rule.provenance = {"kind": "gh", "m": m, "dim": dim}
    return rule


def _level_rule(level: int) -> QuadratureRule:
    return gauss_hermite(2**level)


def combination_coefficients(levels: Sequence[tuple]) -> dict:
    """Coefficients of tensor rules Q_l in the sum of difference tensors over ``levels``.

    ``levels`` must be downward closed. The coefficient of Q_l is
    sum over e in {0,1}^d with l+e in the set of (-1)^{|e|}.
    """
    level_set = set(tuple(l) for l in levels)
    coeffs = {}
    for l in level_set:
        c = 0
        for e in itertools.product((0, 1), repeat=len(l)):
            if tuple(a + b for a, b in zip(l, e)) in level_set:
                c += (-1) ** sum(e)
        if c:
            coeffs[l] = c
    return coeffs


def _merge(nodes: np.ndarray, weights: np.ndarray, tol: float):
    keys = {}
    out_nodes, out_w = [], []
    scale = 1.0 / tol
    for x, w in zip(nodes, weights):
        key = tuple(np.round(x * scale).astype(np.int64))
        if key in keys:
            out_w[keys[key]] += w
        else:
            keys[key] = len(out_nodes)
            out_nodes.append(x)
            out_w.append(w)
    return np.array(out_nodes), np.array(out_w)


def smolyak_gh(dim: int, L: int, index_set: str = "simplex") -> QuadratureRule:
    """Sparse-grid Gauss-Hermite rule by the combination technique.

    Level l uses the 2^l-point rule. ``index_set='simplex'`` keeps difference
    terms with l_1 + ... + l_d <= L (Smolyak); ``'full'`` keeps max_j l_j <= L,
    which telescopes to the dense tensor rule.
    """
    if dim < 1 or L < 0:
        raise ValueError("need dim >= 1 and L >= 0")
    if index_set == "simplex":
        levels = [l for l in itertools.product(range(L + 1), repeat=dim) if sum(l) <= L]
    elif index_set == "full":
        levels = list(itertools.product(range(L + 1), repeat=dim))
    else:
        raise ValueError("index_set must be 'simplex' or 'full'")
    coeffs = combination_coefficients(levels)
    base = [_level_rule(l) for l in range(L + 1)]
    all_nodes, all_w, all_abs = [], [], []
    for l in sorted(coeffs):
        t = tensor_rule([base[j] for j in l])
        all_nodes.append(t.nodes)
        all_w.append(coeffs[l] * t.weights)
        all_abs.append(coeffs[l] * t.plain_weights)
    nodes = np.concatenate(all_nodes)
    weights = np.concatenate(all_w)
    absorbed = np.concatenate(all_abs)
    merged_nodes, merged_w = _merge(nodes, weights, SMOLYAK_MERGE_TOL)
    _, merged_abs = _merge(nodes, absorbed, SMOLYAK_MERGE_TOL)
    prov = {"kind": "smolyak", "L": L, "dim": dim, "index_set": index_set}
    return QuadratureRule(merged_nodes, merged_w, prov, merged_abs)


@dataclass
class GaussianChangeOfVariables:
    """x(y) = q + sqrt(eps) R^{-1} y, with R^T R = (Q Q^*)^{-1}.

    Under this map the density |u|^2 of a Gaussian with frame Q becomes
    proportional to exp(-|y|^2).
    """

    q: np.ndarray
    R: np.ndarray
    R_inv: np.ndarray
    eps: float

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.q + np.sqrt(self.eps) * y @ self.R_inv.T

    @property
    def jacobian(self) -> float:
        return float(self.eps ** (len(self.q) / 2) * abs(np.linalg.det(self.R_inv)))


def gaussian_change_of_vars(Q, q, eps: float) -> GaussianChangeOfVariables:
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    try:
        Q_inv = np.linalg.inv(Q)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Q is singular") from exc
    if np.linalg.cond(Q) > 1e14:
        raise ValueError("Q is singular")
    if np.all(Q.imag == 0):
        R = Q_inv.real
    else:
        stacked = np.vstack([Q_inv.real, Q_inv.imag])
        R = np.linalg.qr(stacked, mode="r")
    return GaussianChangeOfVariables(q, R, np.linalg.inv(R), float(eps))


# ---------------------------------------------------------------- Monte Carlo


def _uniform_open(rng: np.random.Generator, shape) -> np.ndarray:
    # 53-bit uniforms strictly inside (0, 1)
    k = rng.integers(0, 2**53, size=shape, dtype=np.int64)
    return (k + 0.5) / 2.0**53


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def map_to_gaussian(points, mean, cov) -> np.ndarray:
    """Map points of (0,1)^n to N(mean, cov) by the inverse normal CDF and a Cholesky factor."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    chol = np.linalg.cholesky(cov)
    return mean + ndtri(points) @ chol.T


def sample_gaussian(mean, cov, N: int, seed: int, stream: int = 0) -> np.ndarray:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    u = _uniform_open(make_rng(seed, stream), (N, len(mean)))
    return map_to_gaussian(u, mean, cov)


@dataclass
class MCResult:
    mean: complex
    rms_error_estimate: float
    replica_rms: Optional[float] = None
    replica_means: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)


def mc_estimate(f, mean, cov, N: int, seed: int, replicas: int = 1, exact: Optional[complex] = None) -> MCResult:
    """Plain Monte Carlo estimate of E f(X) for X ~ N(mean, cov).

    With ``replicas > 1`` independent streams are drawn; the empirical RMS
    error is reported against ``exact`` if given, else against the replica mean.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    means, rms = [], []
    for r in range(replicas):
        x = sample_gaussian(mean, cov, N, seed, r)
        fx = np.asarray(f(x))
        means.append(fx.mean())
        var = np.mean(np.abs(fx - fx.mean()) ** 2)
        rms.append(np.sqrt(var / N))
    means = np.array(means)
    prov = {"kind": "mc", "N": N, "seed": seed, "replicas": replicas}
    replica_rms = None
    if replicas > 1:
        centre = means.mean() if exact is None else exact
        replica_rms = float(np.sqrt(np.mean(np.abs(means - centre) ** 2)))
    return MCResult(means[0], float(rms[0]), replica_rms, means, prov)


# ------------------------------------------------------------ quasi-Monte Carlo


def first_primes(n: int) -> list:
    primes = []
    k = 2
    while len(primes) < n:
        if all(k % p for p in primes if p * p <= k):
            primes.append(k)
        k += 1
    return primes


def radical_inverse(n: np.ndarray, base: int) -> np.ndarray:
    n = np.asarray(n, dtype=np.int64).copy()
    out = np.zeros(n.shape)
    scale = 1.0 / base
    while np.any(n > 0):
        out += (n % base) * scale
        n //= base
        scale /= base
    return out


def qmc_points(dim: int, N: int, kind: str = "halton", start: int = 1) -> np.ndarray:
    """Halton points in [0,1)^dim; coordinate j uses the j-th prime, indices from ``start``."""
    if kind != "halton":
        raise ValueError("only kind='halton' is available")
    if not 1 <= dim <= 16:
        raise ValueError("dim must lie in [1, 16]")
    idx = np.arange(start, start + N)
    return np.stack([radical_inverse(idx, b) for b in first_primes(dim)], axis=1)


def star_discrepancy_1d(points) -> float:
    """Exact star discrepancy of a point set in [0,1)."""
    x = np.sort(np.asarray(points, dtype=float).ravel())
    n = len(x)
    i = np.arange(1, n + 1)
    return float(1.0 / (2 * n) + np.max(np.abs(x - (2 * i - 1) / (2.0 * n))))

