import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from semiclassical.quadrature import (
    combination_coefficients, gauss_hermite, gauss_hermite_tensor, gaussian_change_of_vars, map_to_gaussian,
    mc_estimate, qmc_points, smolyak_gh, star_discrepancy_1d, tensor_rule,
)


def test_gauss_hermite_one_point():
    rule = gauss_hermite(1)
    assert rule.nodes[0, 0] == 0.0
    assert rule.weights[0] == pytest.approx(np.sqrt(np.pi))


def test_gauss_hermite_two_points():
    rule = gauss_hermite(2)
    assert np.allclose(np.sort(rule.nodes[:, 0]), [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert np.allclose(rule.weights, np.sqrt(np.pi) / 2)
    assert rule.integrate(lambda x: x[:, 0] ** 2) == pytest.approx(np.sqrt(np.pi) / 2)


@pytest.mark.parametrize("m", [1, 3, 8, 20, 40])
def test_gauss_hermite_degree_exactness(m):
    rule = gauss_hermite(m)
    for k in range(0, 2 * m, 2):
        exact = scipy.special.gamma((k + 1) / 2)
        assert abs(rule.integrate(lambda x: x[:, 0] ** k) - exact) <= 1e-12 * exact
    assert abs(rule.integrate(lambda x: x[:, 0] ** 3)) < 1e-12


def test_absorbed_weights_integrate_plain_gaussian():
    rule = gauss_hermite(60)
    got = np.sum(rule.plain_weights * np.exp(-0.5 * rule.nodes[:, 0] ** 2))
    assert got == pytest.approx(np.sqrt(2 * np.pi), rel=1e-12)


@pytest.mark.parametrize("m", [0, 129])
def test_gauss_hermite_bounds(m):
    with pytest.raises(ValueError):
        gauss_hermite(m)


def test_smolyak_small_levels():
    assert len(smolyak_gh(2, 0)) == 1
    rule = smolyak_gh(2, 1)
    expected = {(0.0, 0.0), (1 / np.sqrt(2), 0.0), (-1 / np.sqrt(2), 0.0), (0.0, 1 / np.sqrt(2)), (0.0, -1 / np.sqrt(2))}
    got = {tuple(np.round(x, 12)) for x in rule.nodes}
    assert got == {tuple(np.round(x, 12)) for x in expected}


def test_smolyak_full_index_set_telescopes_to_tensor():
    f = lambda x: np.cos(x[:, 0] - 0.3 * x[:, 1]) * (1 + x[:, 1] ** 2)
    sparse_full = smolyak_gh(2, 2, index_set="full").integrate(f)
    dense = gauss_hermite_tensor(4, 2).integrate(f)
    assert abs(sparse_full - dense) <= 1e-12


def test_smolyak_matches_explicit_combination():
    f = lambda x: np.exp(0.2 * x[:, 0]) * np.cos(x[:, 1])
    levels = [l for l in np.ndindex(3, 3) if sum(l) <= 2]
    coeffs = combination_coefficients(levels)
    explicit = sum(c * tensor_rule([gauss_hermite(2**a), gauss_hermite(2**b)]).integrate(f) for (a, b), c in coeffs.items())
    assert abs(smolyak_gh(2, 2).integrate(f) - explicit) <= 1e-12


def test_smolyak_convergence_in_level():
    a = np.array([0.7, -0.4, 0.5])
    exact = np.pi**1.5 * np.exp(-a @ a / 4)
    f = lambda x: np.cos(x @ a)
    errs = [abs(smolyak_gh(3, L).integrate(f) - exact) for L in range(5)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios >= 1.5)


def test_change_of_vars_real_frame():
    Q = np.array([[1.5, 0.2], [0.0, 0.7]])
    cov = gaussian_change_of_vars(Q, [0.0, 0.0], 0.1)
    assert np.allclose(cov.R, np.linalg.inv(Q))


def test_change_of_vars_identity():
    cov = gaussian_change_of_vars(np.eye(2), [1.0, -1.0], 0.04)
    assert np.allclose(cov(np.array([[1.0, 2.0]])), [[1.2, -0.6]])


def test_change_of_vars_complex_frame():
    rng = np.random.default_rng(4)
    A = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
    U = np.diag(np.exp(1j * rng.uniform(0, np.pi, 2)))
    Q = A @ U
    R = gaussian_change_of_vars(Q, [0, 0], 0.1).R
    R_inv = np.linalg.inv(R)
    assert np.max(np.abs(R_inv @ R_inv.T - (Q @ Q.conj().T).real)) <= 1e-12


def test_change_of_vars_singular():
    with pytest.raises(ValueError):
        gaussian_change_of_vars(np.zeros((2, 2)), [0, 0], 0.1)


def test_mc_constant_function():
    res = mc_estimate(lambda x: np.full(len(x), 3.0), [0.0], [[1.0]], 50, seed=1)
    assert res.mean == pytest.approx(3.0)
    assert res.rms_error_estimate == 0.0


def test_mc_rms_law():
    f = lambda x: x[:, 0]
    rms = {}
    for N in (400, 1600):
        rms[N] = mc_estimate(f, [0.0], [[1.0]], N, seed=11, replicas=100, exact=0.0).replica_rms
        assert 0.5 <= rms[N] / np.sqrt(1.0 / N) <= 2.0
    assert rms[400] / rms[1600] == pytest.approx(2.0, rel=0.3)


def test_mc_reproducible_by_seed():
    f = lambda x: np.sin(x[:, 0])
    a = mc_estimate(f, [0.0], [[1.0]], 100, seed=5).mean
    b = mc_estimate(f, [0.0], [[1.0]], 100, seed=5).mean
    assert a == b


def test_halton_prefixes():
    pts = qmc_points(2, 3)
    assert np.array_equal(pts[:, 0], [0.5, 0.25, 0.75])
    assert np.allclose(pts[:, 1], [1 / 3, 2 / 3, 1 / 9])


def test_halton_discrepancy_decay():
    Ns = [64, 256, 1024, 4096]
    D = [star_discrepancy_1d(qmc_points(1, N)) for N in Ns]
    bound = [np.log(N) / N for N in Ns]
    assert np.all(np.array(D) <= 2 * np.array(bound))
    assert D[-1] < D[0] / 30


def test_map_to_gaussian_median():
    assert np.allclose(map_to_gaussian([[0.5, 0.5]], [1.0, 2.0], np.eye(2)), [[1.0, 2.0]])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30))
def test_gh_weights_positive_and_sum(m):
    rule = gauss_hermite(m)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    assert np.allclose(np.sort(rule.nodes[:, 0]), -np.sort(rule.nodes[:, 0])[::-1])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3))
def test_smolyak_weights_sum_to_mass(dim, L):
    rule = smolyak_gh(dim, L)
    assert rule.weights.sum() == pytest.approx(np.pi ** (dim / 2), rel=1e-10)
