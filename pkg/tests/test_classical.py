import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semiclassical.classical import (
    DegenerateFrameError, TrajectoryState, canonical_state, ehrenfest_diagnostics, energy, hagedorn_residuals,
    propagate, symplectic_defect, verlet_step,
)
from semiclassical.potentials import free, harmonic, henon_heiles, torsional


def test_verlet_harmonic_hand_step():
    s = verlet_step(harmonic([1.0]), canonical_state([1.0], [0.0]), 0.1)
    assert s.q[0] == pytest.approx(0.995)
    assert s.p[0] == pytest.approx(-0.09975)


def test_verlet_linearised_frame_hand_step():
    s = verlet_step(harmonic([1.0]), canonical_state([1.0], [0.0]), 0.1)
    P_half = 1j - 0.05
    Q1 = 1 + 0.1 * P_half
    assert s.Q[0, 0] == pytest.approx(Q1)
    assert s.P[0, 0] == pytest.approx(P_half - 0.05 * Q1)


@pytest.mark.parametrize("tau", [0.01, 0.3, 2.0])
def test_free_flight(tau):
    s = verlet_step(free(1), canonical_state([0.0], [1.0]), tau)
    assert s.q[0] == pytest.approx(tau)
    assert s.p[0] == pytest.approx(1.0)
    assert s.S == pytest.approx(tau / 2)


def test_propagate_zero_steps_is_identity():
    s0 = canonical_state([0.3], [0.1])
    out = propagate(torsional(1), s0, 0.1, 0)
    assert len(out) == 1 and out[0] is s0


def test_harmonic_period():
    n = int(round(2 * np.pi / 1e-3))
    s = canonical_state([1.0], [0.0])
    tau = 2 * np.pi / n
    for _ in range(n):
        s = verlet_step(harmonic([1.0]), s, tau)
    assert abs(s.q[0] - 1.0) < 1e-5 and abs(s.p[0]) < 1e-5


def test_torsional_energy_drift():
    # the O(tau^2) oscillation is bounded; the secular drift between windows is tiny
    model = torsional(1)
    s = canonical_state([1.0], [0.5])
    e0 = energy(model, s.q, s.p)
    trace = []
    for _ in range(10_000):
        s = verlet_step(model, s, 1e-2)
        trace.append(float(energy(model, s.q, s.p)))
    trace = np.array(trace)
    assert np.max(np.abs(trace - e0)) <= 5e-5
    assert abs(trace[:1000].mean() - trace[-1000:].mean()) <= 1e-6


def test_symplectic_defect_examples():
    assert symplectic_defect(np.eye(2), 1j * np.eye(2)) == 0.0
    assert symplectic_defect(2 * np.eye(1), 1j * np.eye(1)) > 0


def test_defect_after_many_steps():
    s = canonical_state([0.2, -0.3], [0.4, 0.1])
    for _ in range(10_000):
        s = verlet_step(henon_heiles(), s, 1e-2)
    assert symplectic_defect(s.Q, s.P) <= 1e-12
    assert max(hagedorn_residuals(s.Q, s.P)) <= 1e-10


def test_ehrenfest_examples():
    assert ehrenfest_diagnostics(np.eye(2), 1j * np.eye(2)) == pytest.approx((1.0, 1.0, 0.25))
    assert ehrenfest_diagnostics([[2.0]], [[1j]]) == pytest.approx((2.0, 0.25, 0.1))
    with pytest.raises(DegenerateFrameError):
        ehrenfest_diagnostics(np.zeros((1, 1)), [[1j]])


def test_harmonic_frame_stays_bounded():
    s = canonical_state([1.0], [0.0])
    norms = []
    for _ in range(2000):
        s = verlet_step(harmonic([4.0]), s, 0.01)
        norms.append(ehrenfest_diagnostics(s.Q, s.P)[0])
    assert max(norms) < 1.01


def test_fourth_order_composition():
    model = harmonic([1.0])
    errs = []
    for n in (20, 40):
        s = canonical_state([1.0], [0.0])
        for _ in range(n):
            s = verlet_step(model, s, 1.0 / n, order=4)
        errs.append(abs(s.q[0] - np.cos(1.0)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.3)


def test_nonpositive_tau_rejected():
    with pytest.raises(ValueError):
        verlet_step(free(1), canonical_state([0.0], [0.0]), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.001, 0.2), st.integers(1, 50))
def test_verlet_preserves_hagedorn_relations(q, p, tau, n):
    s = canonical_state([q, -q], [p, 0.5 * p])
    for _ in range(n):
        s = verlet_step(henon_heiles(), s, tau)
    r1, r2 = hagedorn_residuals(s.Q, s.P)
    assert max(r1, r2) < 1e-10
    assert isinstance(s, TrajectoryState)
