import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qetsim import PHI0
from qetsim.dynamics import basis_state, evolve, hamiltonian_pair
from qetsim.errors import ParameterError
from qetsim.magnetics import (
    QetParams,
    build_inductance_matrix,
    flux_units,
    invert_via_cofactors,
    loop_current_analytical,
)
from qetsim.transmon import TransmonParams, effective_josephson_energy

nH = 1e-9
inductance = st.floats(math.log(0.1), math.log(100.0)).map(lambda x: math.exp(x) * nH)
coupling = st.floats(-0.9, 0.9)


@st.composite
def qet_params(draw, paired=False):
    L = [draw(inductance) for _ in range(4)]
    Ln = [draw(inductance) for _ in range(6)]
    if paired:
        L[1], L[3] = L[0], L[2]
        Ln[2], Ln[4] = Ln[1], Ln[3]
    k = [draw(coupling) for _ in range(6)]
    M = [k[i] * math.sqrt(L[i] * Ln[i + 1]) for i in range(4)]
    if paired:
        M[1], M[3] = M[0], M[2]
    return QetParams(*L, *Ln, *M, M12=k[4] * math.sqrt(L[0] * L[1]), M34=k[5] * math.sqrt(L[2] * L[3]),
                     M=0.02 * nH)


@settings(max_examples=200, deadline=None)
@given(qet_params())
def test_cofactor_inverse_equivalence(p):
    L = build_inductance_matrix(p)
    if np.linalg.cond(L) > 1e8:
        return
    F, A = invert_via_cofactors(p)
    ref = np.linalg.inv(L)
    assert np.max(np.abs(A / F - ref)) <= 1e-9 * np.max(np.abs(ref))


@settings(max_examples=100, deadline=None)
@given(qet_params(paired=True), st.floats(0.25, 4.0))
def test_flux_unit_scales_inversely_with_inductance(p, s):
    if np.linalg.cond(build_inductance_matrix(p)) > 1e8:
        return
    scaled = QetParams(**{k: v * s for k, v in p.__dict__.items()})
    assert flux_units(scaled).delta_ipc == pytest.approx(flux_units(p).delta_ipc / s, rel=1e-9)


@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50))
def test_superposition_and_antisymmetry(a, b, c, d):
    p = QetParams.reference()
    x, y = loop_current_analytical(p, (a, b)), loop_current_analytical(p, (c, d))
    lhs = loop_current_analytical(p, (a + c, b + d))
    # equal up to the rounding of the individual terms
    assert abs(lhs - (x + y)) <= 4 * np.spacing(max(abs(x), abs(y), abs(lhs), 1e-300))
    assert loop_current_analytical(p, (-a, -b)) == -loop_current_analytical(p, (a, b))


@given(st.floats(-1e-3, 1e-3), st.floats(0.0, 1.0), st.integers(-3, 3))
def test_squid_energy_periodic_and_even(i_z, asym, n):
    p = TransmonParams(e_j1=1e10 * (1 - asym) + 1, e_j2=1e10 * (1 + asym), e_c=1e8, m=0.02e-9)
    period = PHI0 / p.m
    e = effective_josephson_energy(p, i_z)
    assert effective_josephson_energy(p, -i_z) == pytest.approx(e, rel=1e-12)
    shifted = effective_josephson_energy(p, i_z + n * period)
    assert shifted == pytest.approx(e, rel=1e-9, abs=1e-12 * p.e_jsum)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2e9, 2e9), st.floats(1e6, 1e8), st.integers(0, 8))
def test_pair_evolution_unitary_and_conserves_excitations(dw, g, start):
    p1 = TransmonParams.reference()
    p2 = p1.replace(i_idle=13.58935e-6)
    psi0 = basis_state(9, start)
    traj = evolve(lambda t: hamiltonian_pair(p1, p2, g, dw, t), psi0, np.linspace(0, 0.2e-9, 5), tol=1e-10)
    n_total = np.add.outer(np.arange(3), np.arange(3)).ravel()
    n0 = n_total[start]
    for state in traj.states:
        assert abs(np.linalg.norm(state) - 1) < 1e-9
        assert abs(np.sum(n_total * np.abs(state) ** 2) - n0) < 1e-9


@given(st.floats(-10.0, 10.0))
def test_rejects_strong_coupling(k):
    if abs(k) < 1:
        return
    with pytest.raises(ParameterError):
        QetParams.paired(10 * nH, 10 * nH, k * 10 * nH, 0.8 * nH, 7 * nH, 7 * nH, 0.02 * nH, nH, 2 * nH)
