import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from semiclassical.gaussian import evaluate, exact_quadratic_solution, make_params
from semiclassical.grid import ExactPropagator, l2_error, make_grid
from semiclassical.hagedorn import (
    build_index_set, custom_index_set, evaluate_basis, galerkin_matrix, gram_matrix, hagedorn_frame,
    hagedorn_propagate, hagedorn_state, hagedorn_step_pair, ladder_on_coeffs, synthesize,
)
from semiclassical.potentials import harmonic, quartic, torsional
from semiclassical.quadrature import gauss_hermite


def random_frame(rng, d):
    A = np.eye(d) + 0.3 * rng.standard_normal((d, d))
    S = rng.standard_normal((d, d))
    S = 0.5 * (S + S.T)
    U = np.diag(np.exp(1j * rng.uniform(-1, 1, d)))
    return A @ U, (S @ A + 1j * np.linalg.inv(A).T) @ U


def test_index_sets():
    assert build_index_set(2, "simplex", 1).indices == ((0, 0), (1, 0), (0, 1))
    assert build_index_set(1, "cube", 3).indices == ((0,), (1,), (2,), (3,))
    assert set(build_index_set(2, "hyperbolic", 2).indices) == {(0, 0), (1, 0), (0, 1)}
    assert len(build_index_set(3, "simplex", 4)) == scipy.special.comb(7, 3, exact=True)


def test_ground_state_at_centre():
    rng = np.random.default_rng(0)
    Q, P = random_frame(rng, 2)
    eps = 0.05
    frame = hagedorn_frame([0.2, -0.1], [0.3, 0.0], Q, P, eps)
    phi = evaluate_basis(frame, build_index_set(2, "simplex", 2), frame.q[None])
    assert phi[0, 0] == pytest.approx((np.pi * eps) ** -0.5 / np.sqrt(np.linalg.det(Q)))
    assert np.allclose(phi[1:3, 0], 0.0)


def test_standard_frame_gives_hermite_functions():
    eps = 0.1
    frame = hagedorn_frame([0.5], [0.0], eps=eps)
    x = np.linspace(-1, 2, 31)
    phi = evaluate_basis(frame, build_index_set(1, "cube", 3), x)
    y = (x - 0.5) / np.sqrt(eps)
    base = (np.pi * eps) ** -0.25 * np.exp(-0.5 * y**2)
    assert np.allclose(phi[1], base * 2 * y / np.sqrt(2))
    assert np.allclose(phi[2], base * (4 * y**2 - 2) / np.sqrt(8))
    assert np.allclose(phi[3], base * (8 * y**3 - 12 * y) / np.sqrt(48))


def test_parent_choice_is_irrelevant():
    rng = np.random.default_rng(5)
    Q, P = random_frame(rng, 2)
    frame = hagedorn_frame([0, 0], [0, 0], Q, P, 0.1)
    I = build_index_set(2, "simplex", 5)
    x = rng.uniform(-0.5, 0.5, (10, 2))
    assert np.allclose(evaluate_basis(frame, I, x, "first"), evaluate_basis(frame, I, x, "last"), atol=1e-10)


def test_ladder_on_coefficients():
    I = build_index_set(2, "simplex", 3)
    delta0 = np.zeros(len(I), complex)
    delta0[0] = 1
    once, _ = ladder_on_coeffs(I, delta0, 1, "raise")
    assert once[I.offset((0, 1))] == 1 and np.count_nonzero(once) == 1
    twice, _ = ladder_on_coeffs(I, once, 1, "raise")
    assert twice[I.offset((0, 2))] == pytest.approx(np.sqrt(2))
    back, _ = ladder_on_coeffs(I, ladder_on_coeffs(I, once, 1, "lower")[0], 1, "raise")
    assert np.allclose(back, once)


def test_ladder_commutator():
    I = build_index_set(1, "cube", 10)
    rng = np.random.default_rng(1)
    c = np.zeros(len(I), complex)
    c[:6] = rng.standard_normal(6)
    lower = lambda v: ladder_on_coeffs(I, v, 0, "lower")[0]
    raise_ = lambda v: ladder_on_coeffs(I, v, 0, "raise")[0]
    assert np.allclose(lower(raise_(c)) - raise_(lower(c)), c)


def test_ladder_reports_dropped_mass():
    I = build_index_set(1, "cube", 2)
    _, dropped = ladder_on_coeffs(I, np.array([0, 0, 1.0]), 0, "raise")
    assert dropped == pytest.approx(3.0)


def test_gram_identity():
    frame = hagedorn_frame([0.3], [-0.2], [[1.4 * np.exp(0.4j)]], [[1j / 1.4 * np.exp(0.4j)]], 0.05)
    G = gram_matrix(frame, build_index_set(1, "simplex", 6), gauss_hermite(16))
    assert np.max(np.abs(G - np.eye(7))) <= 1e-10
    G2 = gram_matrix(hagedorn_frame([0, 0], [0, 0], eps=0.1), build_index_set(2, "simplex", 4))
    assert np.max(np.abs(G2 - np.eye(len(G2)))) <= 1e-10


def test_non_downward_closed_rejected():
    with pytest.raises(ValueError):
        gram_matrix(hagedorn_frame([0.0], [0.0], eps=0.1), custom_index_set([(0,), (2,)]))


def test_underresolved_quadrature_rejected():
    with pytest.raises(ValueError):
        gram_matrix(hagedorn_frame([0.0], [0.0], eps=0.1), build_index_set(1, "cube", 8), gauss_hermite(4))


def test_galerkin_quadratic_is_zero():
    frame = hagedorn_frame([0.4], [0.1], eps=0.1)
    assert np.allclose(galerkin_matrix(harmonic([2.0]), frame, build_index_set(1, "cube", 4)), 0, atol=1e-13)


def test_galerkin_quartic_ground_entry():
    eps = 0.1
    G = galerkin_matrix(quartic(1), hagedorn_frame([0.0], [0.0], eps=eps), build_index_set(1, "cube", 2))
    assert G[0, 0] == pytest.approx(3 * eps**2 / 16)
    assert np.allclose(G, G.conj().T)


def test_galerkin_entry_scaling():
    eps_values = np.array([1e-1, 3e-2, 1e-2, 3e-3])
    I = build_index_set(1, "cube", 3)
    sizes = [np.max(np.abs(galerkin_matrix(torsional(1), hagedorn_frame([1.0], [0.0], eps=e), I))) for e in eps_values]
    assert np.polyfit(np.log(eps_values), np.log(sizes), 1)[0] >= 1.4


def test_quadratic_potential_keeps_coefficients_and_is_exact():
    eps = 0.02
    rng = np.random.default_rng(2)
    I = build_index_set(1, "cube", 4)
    c = rng.standard_normal(len(I)) + 1j * rng.standard_normal(len(I))
    c /= np.linalg.norm(c)
    state = hagedorn_state(hagedorn_frame([0.5], [0.2], eps=eps), I, c)
    out = hagedorn_propagate(harmonic([1.0]), state, 1e-3, 500, order_r=4)
    assert np.allclose(out.coeffs, c, atol=1e-12)
    g = make_params([0.5], [0.2], eps=eps)
    exact = exact_quadratic_solution(harmonic([1.0]), g, 1.0)
    assert np.allclose([out.frame.q[0], out.frame.p[0]], [exact.q[0], exact.p[0]], atol=1e-10)
    assert np.allclose(out.frame.Q, exact.Q, atol=1e-10)


def test_coefficient_norm_conserved():
    rng = np.random.default_rng(3)
    I = build_index_set(2, "simplex", 5)
    c = rng.standard_normal(len(I)) + 1j * rng.standard_normal(len(I))
    c /= np.linalg.norm(c)
    state = hagedorn_state(hagedorn_frame([0.5, 0.1], [0.0, 0.3], eps=0.05), I, c)
    out = hagedorn_propagate(torsional(2), state, 0.01, 50)
    assert abs(np.linalg.norm(out.coeffs) - 1.0) <= 1e-12


def test_ground_state_matches_grid_on_torsional():
    eps, T = 0.1, 1.0
    psi0 = make_grid(512, (-np.pi, np.pi), eps, lambda x: evaluate(make_params([1.0], [0.0], eps=eps), x))
    ref = ExactPropagator(torsional(1), psi0)(psi0, T)
    state = hagedorn_state(hagedorn_frame([1.0], [0.0], eps=eps), build_index_set(1, "cube", 8))
    out = hagedorn_propagate(torsional(1), state, 5e-3, 100, order_r=4)
    assert l2_error(psi0.with_values(synthesize(out, psi0.axes()[0])), ref) < 5e-3


def test_synthesize_ground_state():
    frame = hagedorn_frame([0.1], [0.4], eps=0.05, S=0.3)
    I = build_index_set(1, "cube", 2)
    x = np.linspace(-1, 1, 9)
    vals = synthesize(hagedorn_state(frame, I), x)
    assert np.allclose(vals, np.exp(0.3j / 0.05) * evaluate_basis(frame, I, x)[0])


def test_synthesize_odd_terms_vanish_at_centre():
    frame = hagedorn_frame([0.1], [0.4], eps=0.05, S=0.3)
    I = build_index_set(1, "cube", 1)
    vals = synthesize(hagedorn_state(frame, I, [0.6, 0.8j]), frame.q[None])
    assert vals[0] == pytest.approx(np.exp(0.3j / 0.05) * 0.6 * evaluate_basis(frame, I, frame.q[None])[0, 0])


def test_conjugate_symmetric_state_has_even_modulus():
    frame = hagedorn_frame([0.2], [0.0], [[1.3]], [[1j / 1.3]], eps=0.05)
    I = build_index_set(1, "cube", 4)
    c = np.array([0.5, 0.0, 0.4 - 0.2j, 0.0, 0.3j])
    y = np.linspace(0.05, 1, 20)
    left = synthesize(hagedorn_state(frame, I, c), 0.2 - y)
    right = synthesize(hagedorn_state(frame, I, c), 0.2 + y)
    assert np.allclose(np.abs(left), np.abs(right))


def test_step_pair_rejects_bad_tau():
    state = hagedorn_state(hagedorn_frame([0.0], [0.0], eps=0.1), build_index_set(1, "cube", 2))
    with pytest.raises(ValueError):
        hagedorn_step_pair(torsional(1), state, -0.1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["simplex", "cube", "hyperbolic"]))
def test_random_frames_are_orthonormal(seed, kind):
    rng = np.random.default_rng(seed)
    Q, P = random_frame(rng, 2)
    frame = hagedorn_frame(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), Q, P, 0.1)
    I = build_index_set(2, kind, 4)
    G = gram_matrix(frame, I)
    assert np.max(np.abs(G - np.eye(len(I)))) < 1e-10
