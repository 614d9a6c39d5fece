import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiclassical.gaussian import FrameError, evaluate, make_params
from semiclassical.grid import make_grid
from semiclassical.hagedorn import build_index_set, evaluate_basis, hagedorn_frame, hagedorn_state
from semiclassical.phasespace import (
    coordinate_observable, covariance_checks, egorov_expectation, export_slice_csv, husimi, husimi_correction,
    husimi_average, husimi_correction_fd, laguerre, polynomial_observable, spectrogram, weyl_polynomial_expectation, wigner_gaussian,
    wigner_hagedorn, wigner_numeric,
)
from semiclassical.potentials import harmonic, torsional


def sheared_packet(eps, q=0.3, p=0.2):
    U = np.exp(0.3j)
    return make_params([q], [p], [[1.3 * U]], [[(0.4 * 1.3 + 1j / 1.3) * U]], eps=eps)


def phase_grid(center, half_width, n):
    qs = np.linspace(center[0] - half_width, center[0] + half_width, n)
    ps = np.linspace(center[1] - half_width, center[1] + half_width, n)
    Z = np.stack(np.meshgrid(qs, ps, indexing="ij"), -1).reshape(-1, 2)
    return Z, (qs[1] - qs[0]) * (ps[1] - ps[0])


def test_standard_wigner():
    eps = 0.1
    W = wigner_gaussian(make_params([0.2, 0.0], [0.1, -0.3], eps=eps))
    assert np.allclose(W.G, np.eye(4))
    assert W(W.center) == pytest.approx((np.pi * eps) ** -2)


def test_wigner_gaussian_normalised_and_marginal():
    eps = 0.05
    g = sheared_packet(eps)
    W = wigner_gaussian(g)
    assert np.linalg.det(W.G) == pytest.approx(1.0)
    ps = np.linspace(-2, 2.4, 2001)
    for q in (0.1, 0.3, 0.5):
        marginal = np.sum(W(np.stack([np.full_like(ps, q), ps], -1))) * (ps[1] - ps[0])
        assert marginal == pytest.approx(abs(evaluate(g, np.array([q]))[0]) ** 2, rel=1e-8)


def test_wigner_gaussian_rejects_broken_frame():
    with pytest.raises(FrameError):
        wigner_gaussian(make_params([0.0], [0.0], [[2.0]], [[1j]], eps=0.1))


def test_laguerre_values():
    x = np.linspace(0, 3, 7)
    assert np.allclose(laguerre(0, x), 1)
    assert np.allclose(laguerre(2, x), 1 - 2 * x + x**2 / 2)
    assert np.allclose(laguerre(3, x), (-(x**3) + 9 * x**2 - 18 * x + 6) / 6)


def test_hagedorn_wigner_ground_state_and_first_excited():
    eps = 0.05
    g = sheared_packet(eps)
    frame = hagedorn_frame(g.q, g.p, g.Q, g.P, eps)
    z = np.random.default_rng(0).uniform(-0.3, 0.6, (10, 2))
    assert np.allclose(wigner_hagedorn(frame, (0,), z), wigner_gaussian(g)(z))
    standard = hagedorn_frame([0.1], [0.2], eps=eps)
    assert wigner_hagedorn(standard, (1,), np.array([0.1, 0.2])) == pytest.approx(-1 / (np.pi * eps))


def test_hagedorn_wigner_matches_numeric():
    eps = 0.05
    g = sheared_packet(eps)
    frame = hagedorn_frame(g.q, g.p, g.Q, g.P, eps)
    psi = make_grid(2048, (-3, 3), eps)
    phi = evaluate_basis(frame, build_index_set(1, "cube", 2), psi.axes()[0])
    Wn = wigner_numeric(psi.with_values(phi[2]), rows=np.arange(0, 2048, 32))
    zeta = np.stack(np.meshgrid(Wn.q, Wn.p, indexing="ij"), -1)
    assert np.max(np.abs(Wn.values - wigner_hagedorn(frame, (2,), zeta))) <= 1e-6


def test_numeric_wigner_of_gaussian():
    eps = 0.05
    g = sheared_packet(eps)
    psi = make_grid(1024, (-3, 3), eps, lambda x: evaluate(g, x))
    Wn = wigner_numeric(psi)
    zeta = np.stack(np.meshgrid(Wn.q, Wn.p, indexing="ij"), -1)
    assert np.max(np.abs(Wn.values - wigner_gaussian(g)(zeta))) <= 1e-6
    area = (Wn.q[1] - Wn.q[0]) * (Wn.p[1] - Wn.p[0])
    assert np.sum(Wn.values) * area == pytest.approx(psi.norm() ** 2, rel=1e-8)


def test_numeric_wigner_of_odd_function():
    eps = 0.05
    psi = make_grid(1024, (-3, 3), eps, lambda x: x[:, 0] * np.exp(-x[:, 0] ** 2 / eps))
    Wn = wigner_numeric(psi, rows=np.array([512]))
    assert Wn.q[0] == 0.0
    assert Wn.values[0, np.argmin(np.abs(Wn.p))] == pytest.approx(-psi.norm() ** 2 / (np.pi * eps))


def test_numeric_wigner_resolution_check(tmp_path):
    with pytest.raises(ValueError):
        wigner_numeric(make_grid(64, (-3, 3), 0.05))
    Wn = wigner_numeric(make_grid(512, (-3, 3), 0.05, lambda x: np.exp(-x[:, 0] ** 2 / 0.1)), rows=np.array([256]))
    Wn.to_csv(tmp_path / "w.csv")
    assert (tmp_path / "w.csv").read_text().startswith("q,p,value")


def test_husimi_of_window_centre():
    eps = 0.05
    g = make_params([0.4], [-0.1], eps=eps)
    assert husimi(g, np.array([[0.4, -0.1]]))[0] == pytest.approx(1 / (2 * np.pi * eps))


def test_husimi_and_correction_integrate_to_one():
    eps = 0.05
    g = sheared_packet(eps)
    Z, dA = phase_grid([0.3, 0.2], 2.2, 181)
    H = husimi(g, Z)
    assert np.all(H >= 0)
    assert np.sum(H) * dA == pytest.approx(1.0, abs=1e-6)
    assert np.sum(husimi_correction(g, Z)) * dA == pytest.approx(1.0, abs=1e-6)


def test_correction_routes_agree():
    eps = 0.05
    g = sheared_packet(eps)
    z = np.array([[0.3, 0.2], [0.5, 0.1], [0.0, 0.4], [0.35, 0.35]])
    assert np.max(np.abs(husimi_correction(g, z) - husimi_correction_fd(g, z))) <= 1e-6


def test_grid_and_closed_form_windows_agree():
    eps = 0.05
    g = sheared_packet(eps)
    psi = make_grid(1024, (-3, 3), eps, lambda x: evaluate(g, x))
    z = np.array([[0.3, 0.2], [0.5, 0.1]])
    assert np.allclose(spectrogram(psi, z, "hermite"), spectrogram(g, z, "hermite"), atol=1e-9)
    assert np.allclose(husimi_correction(psi, z), husimi_correction(g, z), atol=1e-9)
    with pytest.raises(ValueError):
        spectrogram(g, z, "boxcar")


def test_husimi_routes_agree():
    g = sheared_packet(0.05)
    quad = polynomial_observable(1, 0.3, [1.0, -0.5], [[1.0, 0.2], [0.2, 2.0]])
    a = husimi_average(g, quad, "corrected_density", level=8)
    b = husimi_average(g, quad, "corrected_symbol", level=8)
    assert a == pytest.approx(b, abs=1e-12)
    smooth = lambda z: np.cos(z[..., 0]) * np.exp(-0.5 * z[..., 1] ** 2)
    a = husimi_average(g, smooth, "corrected_density", level=16)
    b = husimi_average(g, smooth, "corrected_symbol", level=16)
    assert a == pytest.approx(b, abs=1e-8)
    with pytest.raises(ValueError):
        husimi_average(g, smooth, "other")


def test_husimi_routes_match_weyl_to_second_order():
    errs = []
    eps_values = np.array([0.1, 0.05, 0.025])
    smooth = lambda z: np.cos(z[..., 0])
    for eps in eps_values:
        g = sheared_packet(eps)
        exact = float(np.real(np.exp(1j * 0.3) * np.exp(-eps * (g.Q @ g.Q.conj().T).real[0, 0] / 4)))
        errs.append(abs(husimi_average(g, smooth, "corrected_symbol") - exact))
    assert np.polyfit(np.log(eps_values), np.log(errs), 1)[0] == pytest.approx(2.0, abs=0.3)


def test_egorov_harmonic_position():
    g = make_params([0.5], [0.3], eps=0.01)
    res = egorov_expectation(harmonic([1.0]), g, coordinate_observable(1, 0), 1.0, 1e-2)
    assert res.value == pytest.approx(0.5 * np.cos(1) + 0.3 * np.sin(1), abs=1e-10)


@pytest.mark.parametrize("density,sampler", [("wigner", "gh"), ("husimi_corrected", "gh"), ("wigner", "mc"), ("wigner", "qmc")])
def test_egorov_constant_observable(density, sampler):
    g = sheared_packet(0.05)
    res = egorov_expectation(torsional(1), g, polynomial_observable(1, 1.0), 1.0, 1e-2, sampler, density, level=8, N=500)
    assert res.value == pytest.approx(1.0, abs=1e-12)


def test_egorov_signed_weights_unbiased_for_random_samplers():
    # the signed kernel weights average to one only in expectation
    g = sheared_packet(0.05)
    a = polynomial_observable(1, 1.0)
    res = egorov_expectation(torsional(1), g, a, 0.5, 1e-2, "mc", "husimi_corrected", N=20_000, seed=4)
    assert res.value == pytest.approx(1.0, abs=0.05)


def test_egorov_hagedorn_energy_is_consistent():
    eps = 0.05
    frame = hagedorn_frame([0.3], [0.1], eps=eps)
    state = hagedorn_state(frame, build_index_set(1, "cube", 2), k0=(1,))
    a = coordinate_observable(1, 0, 2)
    psi = make_grid(1024, (-3, 3), eps)
    psi = psi.with_values(evaluate_basis(frame, build_index_set(1, "cube", 2), psi.axes()[0])[1])
    assert egorov_expectation(harmonic([1.0]), state, a, 0.0, 0.1).value == pytest.approx(weyl_polynomial_expectation(psi, a))
    with pytest.raises(ValueError):
        egorov_expectation(harmonic([1.0]), state, a, 0.0, 0.1, density="husimi_corrected")


def test_weyl_expectations():
    eps = 0.05
    g = make_params([0.4], [-0.3], eps=eps)
    psi = make_grid(1024, (-3, 3), eps, lambda x: evaluate(g, x))
    assert weyl_polynomial_expectation(psi, coordinate_observable(1, 0)) == pytest.approx(0.4)
    g0 = make_grid(1024, (-3, 3), eps, lambda x: evaluate(make_params([0.0], [0.0], eps=eps), x))
    assert weyl_polynomial_expectation(g0, coordinate_observable(1, 1, 2)) == pytest.approx(eps / 2)
    qp = polynomial_observable(1, quadratic=[[0.0, 0.5], [0.5, 0.0]])
    assert weyl_polynomial_expectation(psi, qp) == pytest.approx(0.4 * -0.3)
    with pytest.raises(ValueError):
        weyl_polynomial_expectation(psi, coordinate_observable(1, 0).__class__(lambda z: z[..., 0] ** 3))


def test_export_slice(tmp_path):
    export_slice_csv(tmp_path / "s.csv", [0.0, 1.0], [2.0], np.array([[3.0], [4.0]]))
    assert (tmp_path / "s.csv").read_text().splitlines()[1:] == ["0.0,2.0,3.0", "1.0,2.0,4.0"]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_wigner_covariance_is_symplectic(seed, d):
    rng = np.random.default_rng(seed)
    A = np.eye(d) + 0.3 * rng.standard_normal((d, d))
    S = rng.standard_normal((d, d))
    S = 0.5 * (S + S.T)
    U = np.diag(np.exp(1j * rng.uniform(-np.pi, np.pi, d)))
    g = make_params(np.zeros(d), np.zeros(d), A @ U, (S @ A + 1j * np.linalg.inv(A).T) @ U, eps=0.1)
    checks = covariance_checks(wigner_gaussian(g).G)
    assert checks["symmetry"] < 1e-10
    assert checks["symplectic"] < 1e-10
    assert checks["min_eigenvalue"] > 0
