import math

import numpy as np
import pytest

from qetsim.dynamics import (
    DriveProfile,
    PulseSchedule,
    SquareCurrent,
    basis_state,
    drive_profile,
    evolve,
    fidelity,
    hamiltonian_pair,
    hamiltonian_single,
    idle_splitting,
    iswap_target,
    optimize_gate_time,
    phase_fidelity,
    run_iswap,
    run_z_gate,
    wrap_phase,
    z_gate_time,
)
from qetsim.errors import NumericalError, ParameterError, RegimeError
from qetsim.transmon import TransmonParams, detuning

I_WORK = 13.58935e-6
G = 2 * math.pi * 5e6
PLUS = np.array([1, 1, 0]) / math.sqrt(2)


def test_hamiltonian_single_diagonal(qubit):
    h = hamiltonian_single(qubit, -1.0e9)
    np.testing.assert_allclose(np.diag(h).real, [0.0, -1.0e9, -2.0e9 - qubit.e_c])
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0


def test_hamiltonian_pair_hermitian(qubit_pair):
    p1, p2 = qubit_pair
    for t in (0.0, 1.3e-9, 7.7e-9):
        h = hamiltonian_pair(p1, p2, G, -1e9, t)
        np.testing.assert_allclose(h, h.conj().T, atol=0)


def test_hamiltonian_pair_uncoupled_is_sum(qubit_pair):
    p1, p2 = qubit_pair
    h = hamiltonian_pair(p1, p2, 0.0, 0.3e9, 1e-9)
    expect = np.kron(hamiltonian_single(p1, 0.3e9), np.eye(3)) + np.kron(np.eye(3), hamiltonian_single(p2, 0.0))
    np.testing.assert_allclose(h, expect)


def test_exchange_block_splitting():
    p = TransmonParams.symmetric(1e10, 1e8, levels=2)
    h = hamiltonian_pair(p, p, G, 0.0, 0.0)
    block = h[np.ix_([1, 2], [1, 2])]
    np.testing.assert_allclose(np.linalg.eigvalsh(block), [-G, G])


def test_evolve_zero_generator():
    psi = np.array([0.6, 0.8j, 0.0])
    traj = evolve(lambda t: np.zeros((3, 3)), psi, np.linspace(0, 1e-9, 5))
    for state in traj.states:
        np.testing.assert_array_equal(state, psi)


def test_evolve_diagonal_phase_exact(qubit):
    dw = -1.3e9
    t = 2.7e-9
    traj = evolve(lambda _: hamiltonian_single(qubit, dw), PLUS, [0.0, t])
    end = traj.states[-1]
    assert np.angle(end[1] / end[0]) == pytest.approx(wrap_phase(-dw * t), abs=1e-12)


def test_evolve_resonant_swap():
    p = TransmonParams.symmetric(1e10, 1e8)
    psi0 = basis_state(9, 1)
    g = 10 * G
    t = math.pi / (2 * g)
    traj = evolve(lambda s: hamiltonian_pair(p, p, g, 0.0, s), psi0, [0.0, t])
    end = traj.states[-1]
    assert abs(end[1]) < 1e-6
    assert abs(end[3]) == pytest.approx(1.0, abs=1e-6)


def test_evolve_rejects_unnormalised():
    with pytest.raises(ParameterError):
        evolve(lambda t: np.zeros((2, 2)), np.array([1.0, 1.0]), [0.0, 1.0])


def test_evolve_rejects_non_hermitian():
    bad = np.array([[0.0, 1e12], [0.0, 0.0]])
    with pytest.raises(ParameterError, match="Hermitian"):
        evolve(lambda t: bad, np.array([0.0, 1.0]), [0.0, 1e-9])


def test_evolve_norm_drift_detected(monkeypatch):
    from qetsim import dynamics

    monkeypatch.setattr(dynamics, "_expm_herm", lambda h, dt: 1.001 * np.eye(h.shape[0]))
    h = np.array([[0.0, 1e9], [1e9, 0.0]])
    with pytest.raises(NumericalError, match="drift"):
        evolve(lambda t: h, np.array([0.0, 1.0]), [0.0, 1e-9], tol=1.0)


def test_z_gate_time_reference(qubit):
    assert z_gate_time(qubit, I_WORK, 0.0) == pytest.approx(2.261e-9, abs=2e-12)
    assert z_gate_time(qubit, I_WORK, 0.0, 0.0) == 0.0
    assert z_gate_time(qubit, I_WORK, 0.0, 2 * math.pi) == pytest.approx(2 * z_gate_time(qubit, I_WORK, 0.0))


def test_z_gate_time_conjugate_phase(qubit):
    # negative target with a negative detuning needs the conjugate phase
    t = z_gate_time(qubit, I_WORK, 0.0, -math.pi / 2)
    dw = detuning(qubit, I_WORK, 0.0)
    assert t > 0
    assert wrap_phase(-dw * t) == pytest.approx(-math.pi / 2)


def test_z_gate_time_zero_detuning(qubit):
    with pytest.raises(NumericalError):
        z_gate_time(qubit, 0.0, 0.0)


def test_run_z_gate_ideal(qubit):
    t_z = z_gate_time(qubit, I_WORK, 0.0)
    profile = drive_profile(qubit, SquareCurrent(0.0, I_WORK, 0.5e-9, 0.5e-9 + t_z, 0.5e-9 + t_z))
    res = run_z_gate(qubit, profile, PLUS)
    assert res.fidelity >= 0.9999
    assert res.phase == pytest.approx(math.pi, abs=1e-9)
    assert res.gate_time == pytest.approx(t_z)
    assert res.leakage == 0.0


def test_run_z_gate_ground_invariant(qubit):
    profile = DriveProfile(np.linspace(0, 3e-9, 31), np.linspace(0, -1e9, 31), "transient-waveform")
    assert run_z_gate(qubit, profile, basis_state(3, 0)).fidelity == pytest.approx(1.0)


def test_transient_profile_integral_exact(qubit):
    t = np.linspace(0, 2e-9, 21)
    values = -1e9 * np.sin(np.pi * t / 2e-9)
    profile = DriveProfile(t, values, "transient-waveform")
    res = run_z_gate(qubit, profile, PLUS, phi_target=0.0)
    expect = wrap_phase(-profile.integral())
    assert res.phase == pytest.approx(expect, abs=1e-12)


def test_printed_z_end_state_fidelity():
    printed = np.array([0.70943, -0.70476 - 0.0049432j])
    ideal = np.array([1, -1]) / math.sqrt(2)
    assert fidelity(ideal, printed) == pytest.approx(0.99999, abs=1e-5)


def test_printed_iswap_end_state_fidelity():
    printed = np.array([0, -0.012969 + 0.032406j, 0.00057846 - 0.99939j, 0])
    ideal = np.array([0, 0, 1, 0])
    assert fidelity(ideal, printed) == pytest.approx(0.99939, abs=5e-6)


def test_fidelity_dimension_mismatch():
    with pytest.raises(ParameterError):
        fidelity(np.ones(2), np.ones(3))


def test_phase_fidelity_sign():
    psi = np.array([0, 1j])
    assert phase_fidelity(np.array([0, 1j]), psi) == pytest.approx(1.0)
    assert phase_fidelity(np.array([0, -1j]), psi) == 0.0


def test_drive_profile_regime_error():
    weak = TransmonParams.symmetric(1.0, 1.0, m=0.02e-9)
    with pytest.raises(RegimeError):
        drive_profile(weak, SquareCurrent(0.0, I_WORK, 0.0, 1e-9, 2e-9))


def test_pulse_schedule_window():
    s = PulseSchedule((("A", 0.5e-9), ("B", 2.76e-9)))
    assert s.t_z == pytest.approx(2.26e-9)
    with pytest.raises(ParameterError):
        PulseSchedule((("A", 1e-9),))


def test_iswap_target_ordering():
    psi = basis_state(9, 1)  # |01>
    np.testing.assert_array_equal(iswap_target(TransmonParams.reference(), TransmonParams.reference(), psi, True),
                                  -1j * basis_state(9, 3))


def test_resonant_swap_time():
    p = TransmonParams.reference()
    t, f = optimize_gate_time(lambda t: run_iswap(p, p, G, t, basis_state(9, 1)).fidelity, (48e-9, 52e-9), 1e-12)
    assert t == pytest.approx(50e-9, abs=0.1e-9)
    assert f == pytest.approx(1.0, abs=1e-9)


def test_iswap_exact_matches_stepwise(qubit_pair):
    p1, p2 = qubit_pair
    psi0 = basis_state(9, 1)
    a = run_iswap(p1, p2, G, 3e-9, psi0, t_s=0.5e-9, method="exact")
    b = run_iswap(p1, p2, G, 3e-9, psi0, t_s=0.5e-9, method="stepwise", dt_max=0.25e-12)
    np.testing.assert_allclose(a.state, b.state, atol=1e-6)


def test_iswap_detuned_qubits(qubit_pair):
    p1, p2 = qubit_pair
    assert idle_splitting(p1, p2) / (2 * math.pi) == pytest.approx(0.2211e9, rel=1e-3)
    res = run_iswap(p1, p2, G, 49.25e-9, basis_state(9, 1), t_s=0.5e-9, phase_corrected=True)
    assert res.fidelity > 0.999
    assert res.leakage < 1e-9


def test_optimize_constant_objective():
    t, f = optimize_gate_time(lambda t: 0.5, (1.0, 3.0), 1e-6)
    assert t == pytest.approx(2.0, abs=1e-6)
    assert f == 0.5


def test_optimize_parabola():
    t, _ = optimize_gate_time(lambda t: -(t - 0.3) ** 2, (0.0, 1.0), 1e-9)
    assert t == pytest.approx(0.3, abs=1e-8)


def test_optimize_errors():
    with pytest.raises(ParameterError):
        optimize_gate_time(lambda t: t, (1.0, 1.0))
    with pytest.raises(NumericalError):
        optimize_gate_time(lambda t: math.nan, (0.0, 1.0))


def test_iswap_reference_time(qubit_pair):
    p1, p2 = qubit_pair
    res = run_iswap(p1, p2, G, 49.16e-9, basis_state(9, 1), t_s=0.5e-9)
    assert res.fidelity >= 0.999


def test_iswap_vacuum_invariant(qubit_pair):
    p1, p2 = qubit_pair
    assert run_iswap(p1, p2, G, 49.16e-9, basis_state(9, 0)).fidelity == pytest.approx(1.0)
