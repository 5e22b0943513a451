import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from subdyn_ske.errors import NonUniformShiftError, UnreachableDurationError, ValidationError
from subdyn_ske.gates import (
    corrected_swap,
    delta_t_correction,
    entangling_phase,
    ideal_swap,
    sqrt_swap,
    swap_duration,
    xor_gate,
)
from subdyn_ske.linalg import dag, is_unitary
from subdyn_ske.model import SIGMA_Z, I2, JProfile, ModelConfig, Mode, build_hamiltonians, spin_exchange, system_basis
from subdyn_ske.subdyn import run_pipeline

from conftest import small_config

KET = {b: np.eye(4)[i] for i, b in enumerate(("00", "01", "10", "11"))}


def uniform_shifts(config, de):
    """dE for every label with the singlet shift fixed at -3 dE."""
    labels = run_pipeline(config.with_(lam=0.0)).basis.labels
    return {nu: (de if nu.j < 4 else -3 * de) for nu in labels}


def test_swap_matches_matrix_exponential():
    u = ideal_swap()
    np.testing.assert_allclose(u, expm(-1j * math.pi * spin_exchange()), atol=1e-12)
    assert is_unitary(u)


def test_swap_exchanges_qubits():
    u = ideal_swap()
    np.testing.assert_allclose(u @ KET["01"], np.exp(-1j * math.pi / 4) * KET["10"], atol=1e-12)
    np.testing.assert_allclose(u @ KET["10"], np.exp(-1j * math.pi / 4) * KET["01"], atol=1e-12)


def test_swap_phases_in_system_basis():
    d = dag(system_basis()) @ ideal_swap() @ system_basis()
    np.testing.assert_allclose(np.diag(d), np.exp(1j * np.array([-1, -1, -1, 3]) * math.pi / 4), atol=1e-12)


def test_composite_swap_attaches_bath_phase():
    cfg = small_config(0.0, n_max=2)
    u = ideal_swap(cfg, composite=True)
    h = build_hamiltonians(cfg)
    np.testing.assert_allclose(u, expm(-1j * math.pi * (h.H_S + h.H_B)), atol=1e-12)
    with pytest.raises(ValidationError):
        ideal_swap(composite=True)


def test_sqrt_swap_squares_to_swap():
    assert np.abs(sqrt_swap() @ sqrt_swap() - ideal_swap()).max() < 1e-12


def test_basis_covariance():
    # building in the phi basis and transforming equals building from S1.S2 directly
    u = system_basis()
    direct = expm(-0.5j * math.pi * spin_exchange())
    assert np.abs(direct - sqrt_swap()).max() < 1e-12
    assert np.abs(dag(u) @ sqrt_swap() @ u - np.diag(np.diag(dag(u) @ sqrt_swap() @ u))).max() < 1e-12


def _rz(angle, qubit):
    sz = SIGMA_Z / 2
    op = np.kron(sz, I2) if qubit == 1 else np.kron(I2, sz)
    return expm(1j * angle * op)


def test_xor_sequence_against_direct_product():
    h = expm(-0.5j * math.pi * spin_exchange())
    expected = _rz(math.pi / 2, 1) @ _rz(-math.pi / 2, 2) @ h @ _rz(math.pi, 1) @ h
    x = xor_gate()
    assert np.abs(x - expected).max() < 1e-12
    assert is_unitary(x)


def test_xor_is_a_conditional_phase():
    x = xor_gate()
    pattern = np.abs(x) ** 2
    np.testing.assert_allclose(pattern, np.eye(4), atol=1e-12)
    assert entangling_phase(x) == pytest.approx(-1, abs=1e-12)


def test_xor_negative_control_loses_the_condition():
    x = xor_gate(half_swap=np.eye(4))
    assert is_unitary(x)
    assert entangling_phase(x) == pytest.approx(1, abs=1e-12)


def test_swap_duration_branches():
    assert swap_duration(1.0) == pytest.approx(math.pi)
    assert swap_duration(2.0) == pytest.approx(math.pi / 2)
    assert swap_duration(-1.0) == pytest.approx(math.pi)
    assert swap_duration(1.0, branch=1) == pytest.approx(3 * math.pi)
    p = JProfile([(1.0, 0.0), (2.0, 1.0), (math.inf, 2.0)])
    # integral reaches 2 at t = 3, then grows at rate 2
    assert swap_duration(p) == pytest.approx(3 + (math.pi - 2) / 2)
    assert p.integral(swap_duration(p)) == pytest.approx(math.pi)


def test_swap_duration_unreachable():
    with pytest.raises(UnreachableDurationError):
        swap_duration(JProfile([(1.0, 1.0), (math.inf, 0.0)]))
    with pytest.raises(UnreachableDurationError):
        swap_duration(0.0)


def test_delta_t_vanishing_shift():
    cfg = small_config(0.0)
    r = delta_t_correction(cfg, uniform_shifts(cfg, 0.0))
    assert r.uniform_delta_t == 0 and all(v == 0 for v in r.delta_t.values())


def test_delta_t_closed_form_example():
    cfg = small_config(0.0, J=4.0)
    r = delta_t_correction(cfg, uniform_shifts(cfg, 1.0))
    assert r.uniform_delta_t == pytest.approx(-r.tau_s / 2, abs=1e-14)
    t_end = r.tau_s + r.uniform_delta_t
    lhs, _ = quad(lambda t: 0.25 * 4.0 + 1.0, 0, t_end)
    assert lhs == pytest.approx(math.pi / 4, abs=1e-12)
    assert r.lhs[(1, (0,))] == pytest.approx(math.pi / 4, abs=1e-12)


def test_delta_t_satisfies_integral_equation():
    for J, de in [(1.0, 0.01), (2.0, -0.05), (0.5, 0.002)]:
        cfg = small_config(0.0, J=J)
        r = delta_t_correction(cfg, uniform_shifts(cfg, de))
        for nu, dt in r.delta_t.items():
            e_s = 0.25 if nu.j < 4 else -0.75
            shift = de if nu.j < 4 else -3 * de
            lhs, _ = quad(lambda t: e_s * J + shift, 0, r.tau_s + dt)
            assert lhs == pytest.approx(e_s * math.pi, abs=1e-10)


def test_non_uniform_shifts():
    cfg = small_config(0.0)
    shifts = uniform_shifts(cfg, 0.01)
    shifts[(4, (0,))] = 0.02
    r = delta_t_correction(cfg, shifts)
    assert r.uniform_delta_t is None and len(r.delta_t) == 12
    with pytest.raises(NonUniformShiftError) as info:
        delta_t_correction(cfg, shifts, strict=True)
    assert info.value.spread > 0


def test_delta_t_needs_constant_j():
    cfg = ModelConfig(JProfile([(1.0, 1.0), (math.inf, 2.0)]), 0.0, (Mode(1.0, 0.5),), 1)
    with pytest.raises(ValidationError):
        delta_t_correction(cfg, {})


def test_corrected_swap_trivial():
    cfg = small_config(0.0)
    r = corrected_swap(cfg, run_pipeline(cfg).sets, 0.0)
    assert r.residual == 0 and r.bath_phase_mismatch == 0
    np.testing.assert_allclose(r.corrected, ideal_swap(cfg, composite=True), atol=1e-12)


def test_corrected_swap_uniform_instance():
    cfg = small_config(0.0, J=1.0, n_max=2)
    shifts = uniform_shifts(cfg, 0.02)
    dt = delta_t_correction(cfg, shifts).uniform_delta_t
    r = corrected_swap(cfg, shifts, dt)
    assert r.residual <= 1e-9
    assert r.bath_phase_mismatch == pytest.approx(abs(2 * dt), rel=1e-12)
    assert all(abs(abs(p) - 1) < 1e-12 for p in r.phases.values())


def test_corrected_swap_generic_couplings_leave_residual():
    cfg = small_config(0.1, n_max=2)
    p = run_pipeline(cfg)
    r = delta_t_correction(cfg, p.sets)
    assert r.uniform_delta_t is None
    mean = float(np.mean(list(r.delta_t.values())))
    out = corrected_swap(cfg, p.sets, mean)
    assert out.residual > 0
    assert set(out.phase_error) == set(p.basis.labels)
