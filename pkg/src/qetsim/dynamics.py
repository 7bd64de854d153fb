"""Gate dynamics of flux-driven transmons in the rotating frame.

Conventions: hbar = 1, so generators are in rad/s.  Every qubit is viewed in
the frame rotating at its own idle frequency.  Two-qubit states use the
ordering ``|n1 n2>`` with index ``n1 * levels2 + n2``; ``|01>`` therefore has
qubit 1 in its ground state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import NumericalError, ParameterError, RegimeError
from .magnetics import QetParams
from .transient import (PORTS, JunctionParams, ParasiticParams, SourceEvent, TransientConfig, Waveform,
                        build_transient_system, extract_plateaus, integrate)
from .transmon import TransmonParams, anharmonicity, detuning, qubit_frequency, regime_check

log = logging.getLogger(__name__)

__all__ = [
    "DriveProfile",
    "PulseSchedule",
    "SquareCurrent",
    "Trajectory",
    "GateResult",
    "drive_profile",
    "hamiltonian_single",
    "hamiltonian_pair",
    "idle_splitting",
    "iswap_target",
    "evolve",
    "z_gate_time",
    "run_z_gate",
    "transient_z_drive",
    "run_iswap",
    "optimize_gate_time",
    "fidelity",
    "phase_fidelity",
    "basis_state",
    "wrap_phase",
]

DEFAULT_DT = 1e-12
NORM_DRIFT_LIMIT = 1e-6


def wrap_phase(phi: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.remainder(phi, 2 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class SquareCurrent:
    """Ideal square bias: ``i_work`` on ``[t_s, t_e]``, ``i_idle`` elsewhere, up to ``t_end``."""

    i_idle: float
    i_work: float
    t_s: float
    t_e: float
    t_end: float

    def __post_init__(self):
        if not 0 <= self.t_s <= self.t_e <= self.t_end:
            raise ParameterError("t_s", "require 0 <= t_s <= t_e <= t_end")


@dataclass(frozen=True)
class PulseSchedule:
    """Timed SFQ events ``(port, time)``; the gate window spans first to last event."""

    events: tuple

    def __post_init__(self):
        if len(self.events) < 2:
            raise ParameterError("events", "a gate window needs at least two SFQ events")
        for port, t in self.events:
            if port not in PORTS:
                raise ParameterError("port", f"unknown port {port!r}")
        if not self.t_e > self.t_s >= 0:
            raise ParameterError("events", "require t_e > t_s >= 0")

    @property
    def t_s(self) -> float:
        return min(t for _, t in self.events)

    @property
    def t_e(self) -> float:
        return max(t for _, t in self.events)

    @property
    def t_z(self) -> float:
        return self.t_e - self.t_s


@dataclass(frozen=True)
class DriveProfile:
    """Detuning ``dw(t)`` of one qubit from its idle frequency on ``[0, t_end]``.

    ``kind == "ideal-square"``: ``values[k]`` holds on ``[knots[k], knots[k+1])``.
    ``kind == "transient-waveform"``: ``values`` are samples at ``knots``,
    linearly interpolated.
    """

    knots: np.ndarray
    values: np.ndarray
    kind: str

    @property
    def t_end(self) -> float:
        return float(self.knots[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "ideal-square":
            idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.values.size - 1)
            return self.values[idx]
        return np.interp(t, self.knots, self.values)

    def integral(self, t0: float = 0.0, t1: float | None = None) -> float:
        """Exact integral of the profile between ``t0`` and ``t1``."""
        t1 = self.t_end if t1 is None else t1
        grid = np.unique(np.concatenate([[t0, t1], self.knots[(self.knots > t0) & (self.knots < t1)]]))
        mid = 0.5 * (grid[1:] + grid[:-1])
        return float(np.sum(self(mid) * np.diff(grid)))

    @classmethod
    def ideal_square(cls, dw: float, t_s: float, t_e: float, t_end: float) -> "DriveProfile":
        knots = np.array([0.0, t_s, t_e, t_end])
        return cls(knots=knots, values=np.array([0.0, dw, 0.0]), kind="ideal-square")


def drive_profile(p: TransmonParams, current, i_idle: float | None = None) -> DriveProfile:
    """Map a loop-current waveform onto the qubit detuning ``omega(i(t)) - omega(i_idle)``.

    ``current`` is a :class:`~qetsim.transient.Waveform` (sampled ``i_p``) or a
    :class:`SquareCurrent`.  ``i_idle`` defaults to the pre-window level: the
    first waveform sample, or ``SquareCurrent.i_idle``.  ``p.i_idle`` adds a
    static bias to every sample.

    Raises:
        RegimeError: if any bias point has E_JS/E_C below the transmon floor.
    """
    if isinstance(current, SquareCurrent):
        i_i = current.i_idle if i_idle is None else i_idle
        for level in (current.i_idle, current.i_work):
            _require_regime(p, p.i_idle + level)
        dw = float(detuning(p, p.i_idle + current.i_work, p.i_idle + i_i))
        return DriveProfile(
            knots=np.array([0.0, current.t_s, current.t_e, current.t_end]),
            values=np.array([
                float(detuning(p, p.i_idle + current.i_idle, p.i_idle + i_i)),
                dw,
                float(detuning(p, p.i_idle + current.i_idle, p.i_idle + i_i)),
            ]),
            kind="ideal-square",
        )
    if isinstance(current, Waveform):
        t, i = current.time, current.i_p
    else:
        t, i = (np.asarray(a, dtype=float) for a in current)
    i_i = float(i[0]) if i_idle is None else i_idle
    _require_regime(p, p.i_idle + np.array([i.min(), i.max()]))
    omega = qubit_frequency(p, p.i_idle + i)
    return DriveProfile(knots=np.array(t, dtype=float), values=omega - qubit_frequency(p, p.i_idle + i_i),
                        kind="transient-waveform")


def _require_regime(p, currents):
    for i_z in np.atleast_1d(currents):
        report = regime_check(p, float(i_z))
        if report.classification == "invalid":
            raise RegimeError(
                f"E_JS/E_C = {report.ratio:.3g} at i_z = {float(i_z):.6e} A is outside the transmon regime"
            )
        if report.classification == "warning":
            log.warning("E_JS/E_C = %.3g at i_z = %.6e A is marginal for a transmon", report.ratio, i_z)


def _number_diag(levels: int, dw: float, alpha: float) -> np.ndarray:
    k = np.arange(levels, dtype=float)
    return k * dw + 0.5 * alpha * k * (k - 1)


def hamiltonian_single(p: TransmonParams, dw: float) -> np.ndarray:
    """Rotating-frame generator ``dw n + (alpha/2) n (n - 1)`` (rad/s)."""
    return np.diag(_number_diag(p.levels, dw, anharmonicity(p))).astype(complex)


def _ladder(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1)


def _pair_operators(p1: TransmonParams, p2: TransmonParams):
    a1 = np.kron(_ladder(p1.levels), np.eye(p2.levels))
    a2 = np.kron(np.eye(p1.levels), _ladder(p2.levels))
    return a1, a2


def idle_splitting(p1: TransmonParams, p2: TransmonParams) -> float:
    """``omega_idle1 - omega_idle2``; the two frames rotate at these frequencies."""
    return float(qubit_frequency(p1, p1.i_idle) - qubit_frequency(p2, p2.i_idle))


def hamiltonian_pair(p1: TransmonParams, p2: TransmonParams, g: float, dw1: float, t: float,
                     dw2: float = 0.0) -> np.ndarray:
    """Two-qubit generator with exchange coupling ``g`` at time ``t``.

    The exchange term carries ``exp(+-i Delta t)`` with ``Delta`` the idle
    splitting, since each qubit is referred to its own idle frequency.
    """
    d1 = _number_diag(p1.levels, dw1, anharmonicity(p1))
    d2 = _number_diag(p2.levels, dw2, anharmonicity(p2))
    h = np.diag(np.add.outer(d1, d2).ravel()).astype(complex)
    a1, a2 = _pair_operators(p1, p2)
    x = a1.T @ a2 * np.exp(1j * idle_splitting(p1, p2) * t)
    return h + g * (x + x.conj().T)


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray
    norm_drift: float


def _expm_herm(h: np.ndarray, dt: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def _is_diagonal(h: np.ndarray) -> bool:
    return not np.any(h - np.diag(np.diagonal(h)))


def evolve(generator: Callable[[float], np.ndarray], psi0, t_grid: Sequence[float],
           tol: float = 1e-10, dt_max: float = DEFAULT_DT) -> Trajectory:
    """Time-ordered propagation of ``psi0`` under ``H(t) = generator(t)``.

    Each interval of ``t_grid`` is split into substeps no longer than
    ``dt_max`` and propagated with the exponential midpoint rule.  Diagonal
    generators are exponentiated elementwise.  For a generator that is
    constant (or linear) between grid points the midpoint rule is exact, so
    callers include every breakpoint of their drive in ``t_grid``.
    ``psi0`` may be a single state or a matrix of column states.

    Raises:
        ParameterError: for a non-Hermitian generator.
        NumericalError: on norm drift above 1e-6 or if a step collapses.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) < 0):
        raise ParameterError("t_grid", "time grid must be a non-decreasing 1-D sequence")
    psi = np.array(psi0, dtype=complex)
    norm0 = np.linalg.norm(psi, axis=0)
    if np.any(np.abs(norm0 - 1) > 1e-9):
        raise ParameterError("psi0", f"initial state must be normalised (|psi| = {norm0})")

    states = np.empty((t_grid.size,) + psi.shape, dtype=complex)
    states[0] = psi
    drift = 0.0
    for n in range(1, t_grid.size):
        t0, t1 = t_grid[n - 1], t_grid[n]
        span = t1 - t0
        if span > 0:
            m = max(1, int(math.ceil(span / dt_max - 1e-9)))
            dt = span / m
            if dt < 1e-21:
                raise NumericalError(f"evolution step underflow at t = {t0:.6e} s")
            for s in range(m):
                h = generator(t0 + (s + 0.5) * dt)
                if np.max(np.abs(h - h.conj().T)) > 1e-12 * max(np.max(np.abs(h)), 1e-300):
                    raise ParameterError("generator", f"generator is not Hermitian at t = {t0 + (s + 0.5) * dt:.6e} s")
                if _is_diagonal(h):
                    psi = (np.exp(-1j * np.real(np.diagonal(h)) * dt) * psi.T).T
                else:
                    u = _expm_herm(h, dt)
                    if tol < 1e-6:
                        err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
                        if err > tol:
                            raise NumericalError(f"step propagator not unitary to {tol:g} (error {err:.2e})")
                    psi = u @ psi
        states[n] = psi
        drift = max(drift, float(np.max(np.abs(np.linalg.norm(psi, axis=0) - 1))))
        if drift > NORM_DRIFT_LIMIT:
            raise NumericalError(f"norm drift {drift:.2e} exceeds {NORM_DRIFT_LIMIT:g} at t = {t1:.6e} s")
    return Trajectory(t_grid, states, drift)


class GateResult(NamedTuple):
    state: np.ndarray
    phase: float
    fidelity: float
    gate_time: float
    norm_drift: float = 0.0
    leakage: float = 0.0


def z_gate_time(p: TransmonParams, i_w: float, i_i: float, phi_target: float = math.pi) -> float:
    """Gate time ``t_z = phi / (-dw)`` realising phase ``phi_target``.

    If the sign of the detuning would need a negative time, the equivalent
    phase ``phi_target -+ 2 pi`` is used instead.

    Raises:
        NumericalError: for zero detuning.
    """
    dw = float(detuning(p, p.i_idle + i_w, p.i_idle + i_i))
    if dw == 0.0:
        raise NumericalError("zero detuning: no gate time realises the target phase")
    if phi_target == 0:
        return 0.0
    t = phi_target / -dw
    if t < 0:
        phi = phi_target - math.copysign(2 * math.pi, phi_target)
        log.info("target phase %.6g needs t < 0; solving for the conjugate phase %.6g", phi_target, phi)
        t = phi / -dw
    return t


def basis_state(dim: int, index: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def fidelity(psi_ideal, psi_end) -> float:
    """State fidelity ``|<psi_ideal|psi_end>|`` (modulus, not squared)."""
    a = np.asarray(psi_ideal, dtype=complex)
    b = np.asarray(psi_end, dtype=complex)
    if a.shape != b.shape:
        raise ParameterError("psi", f"dimension mismatch {a.shape} vs {b.shape}")
    return float(min(1.0, abs(np.vdot(a, b))))


def phase_fidelity(psi_ideal, psi_end) -> float:
    """Phase-sensitive overlap ``max(0, Re<psi_ideal|psi_end>)``."""
    a = np.asarray(psi_ideal, dtype=complex)
    b = np.asarray(psi_end, dtype=complex)
    if a.shape != b.shape:
        raise ParameterError("psi", f"dimension mismatch {a.shape} vs {b.shape}")
    return float(min(1.0, max(0.0, np.vdot(a, b).real)))


def run_z_gate(p: TransmonParams, profile: DriveProfile, psi0, phi_target: float = math.pi,
               dt_max: float = DEFAULT_DT) -> GateResult:
    """Evolve one qubit under ``profile`` and compare with ``diag(1, e^{i phi_target})``.

    The propagator is built column by column so the reported phase
    ``arg(U11 / U00)`` is defined for any initial state.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (p.levels,):
        raise ParameterError("psi0", f"state must have dimension {p.levels}")
    alpha = anharmonicity(p)

    def generator(t):
        return np.diag(_number_diag(p.levels, float(profile(t)), alpha)).astype(complex)

    grid = profile.knots
    traj = evolve(generator, np.eye(p.levels, dtype=complex), grid, dt_max=max(dt_max, float(np.max(np.diff(grid)))))
    u = traj.states[-1]
    psi = u @ psi0
    phase = wrap_phase(float(np.angle(u[1, 1] / u[0, 0])))
    target = np.ones(p.levels, dtype=complex)
    target[1] = np.exp(1j * phi_target)
    ideal = target * psi0
    window = _window_time(profile)
    leakage = float(np.sum(np.abs(psi[2:]) ** 2))
    return GateResult(psi, phase, fidelity(ideal, psi), window, traj.norm_drift, leakage)


def transient_z_drive(qet: QetParams, p: TransmonParams, phi_target: float = math.pi, t_s: float = 0.5e-9,
                      junction: JunctionParams | None = None, parasitics: ParasiticParams | None = None,
                      sigma: float = 1e-12, source_resistance: float = 0.0, tail: float = 0.5e-9,
                      cfg: TransientConfig | None = None) -> tuple[DriveProfile, float, float]:
    """Z-gate drive generated by the QET transient: pulse A at ``t_s``, pulse B at ``t_s + t_z``.

    ``t_z`` is solved from the plateau the circuit actually settles to after
    one A pulse, so the gate compensates the deviation of the transient
    level from the analytical flux unit.  Returns ``(profile, t_z, i_work)``.
    """
    par = ParasiticParams.reference() if parasitics is None else parasitics
    base = cfg or TransientConfig(t_end=t_s + 1e-9)

    def run(events, t_end):
        system = build_transient_system(qet, junction, par, events, source_resistance)
        return integrate(system, replace(base, t_end=t_end))

    probe = run([SourceEvent("A", t_s, sigma)], t_s + 1e-9)
    i_work = float(extract_plateaus(probe).levels[-1])
    t_z = z_gate_time(p, i_work, 0.0, phi_target)
    events = [SourceEvent("A", t_s, sigma), SourceEvent("B", t_s + t_z, sigma)]
    w = run(events, t_s + t_z + tail)
    return drive_profile(p, w, i_idle=0.0), t_z, i_work


def _window_time(profile: DriveProfile) -> float:
    active = np.nonzero(np.abs(profile.values) > 1e-9 * max(np.max(np.abs(profile.values)), 1e-300))[0]
    if active.size == 0:
        return 0.0
    if profile.kind == "ideal-square":
        return float(profile.knots[active[-1] + 1] - profile.knots[active[0]])
    return float(profile.knots[active[-1]] - profile.knots[active[0]])


def iswap_target(p1: TransmonParams, p2: TransmonParams, psi0, with_phase: bool = False) -> np.ndarray:
    """Ideal end state: excitation swapped between the qubits.

    With ``with_phase`` the swapped components carry the ``-i`` of resonant
    exchange, ``exp(-i g t (a1+ a2 + a1 a2+))`` at ``g t = pi/2``.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    l1, l2 = p1.levels, p2.levels
    out = np.zeros_like(psi0)
    for n1 in range(min(l1, 2)):
        for n2 in range(min(l2, 2)):
            amp = psi0[n1 * l2 + n2]
            if n1 == n2:
                out[n1 * l2 + n2] += amp
            else:
                out[n2 * l2 + n1] += (-1j if with_phase else 1.0) * amp
    return out


def _pair_exact(p1, p2, g, profile: DriveProfile, psi0, t_stop: float) -> np.ndarray:
    """Exact propagation for a piecewise-constant qubit-1 detuning.

    In the frame ``R(t) = exp(i Delta t n1)`` the generator is time
    independent on each constant segment.
    """
    delta = idle_splitting(p1, p2)
    a1, a2 = _pair_operators(p1, p2)
    n1 = np.real(np.diagonal(a1.T @ a1))
    d2 = _number_diag(p2.levels, 0.0, anharmonicity(p2))
    exchange = g * (a1.T @ a2 + a2.T @ a1)
    psi = np.asarray(psi0, dtype=complex)
    knots = np.concatenate([profile.knots[profile.knots < t_stop], [t_stop]])
    for k in range(knots.size - 1):
        t0, t1 = knots[k], knots[k + 1]
        if t1 <= t0:
            continue
        dw = float(profile(0.5 * (t0 + t1)))
        d1 = _number_diag(p1.levels, dw, anharmonicity(p1))
        h = np.diag(np.add.outer(d1, d2).ravel() + delta * n1) + exchange
        psi = np.exp(-1j * delta * t0 * n1) * psi
        psi = _expm_herm(h, t1 - t0) @ psi
        psi = np.exp(1j * delta * t1 * n1) * psi
    return psi


def run_iswap(p1: TransmonParams, p2: TransmonParams, g: float, t_z: float, psi0,
              profile: DriveProfile | None = None, t_s: float = 0.0, phase_corrected: bool = False,
              dt_max: float = DEFAULT_DT, method: str = "auto") -> GateResult:
    """Exchange gate: qubit 1 is detuned into resonance with qubit 2 for ``t_z``.

    Without ``profile`` an ideal square detuning ``-Delta`` (qubit 1 working
    frequency equal to qubit 2 idle frequency) is applied on
    ``[t_s, t_s + t_z]``.  The state is read out at the end of the window.
    ``phase_corrected`` scores with :func:`phase_fidelity` against the
    ``-i``-phased swap; otherwise with the modulus :func:`fidelity`.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (p1.levels * p2.levels,):
        raise ParameterError("psi0", "state dimension must be levels1 * levels2")
    t_e = t_s + t_z
    if profile is None:
        profile = DriveProfile.ideal_square(-idle_splitting(p1, p2), t_s, t_e, t_e)
    if method == "auto":
        method = "exact" if profile.kind == "ideal-square" else "stepwise"
    if method == "exact":
        psi = _pair_exact(p1, p2, g, profile, psi0, t_e)
        drift = abs(np.linalg.norm(psi) - 1)
    elif method == "stepwise":
        grid = np.concatenate([profile.knots[profile.knots < t_e], [t_e]])
        traj = evolve(lambda t: hamiltonian_pair(p1, p2, g, float(profile(t)), t), psi0, grid, dt_max=dt_max)
        psi, drift = traj.states[-1], traj.norm_drift
    else:
        raise ParameterError("method", f"unknown propagation method {method!r}")
    target = iswap_target(p1, p2, psi0, with_phase=phase_corrected)
    score = phase_fidelity(target, psi) if phase_corrected else fidelity(target, psi)
    l2 = p2.levels
    phase = wrap_phase(float(np.angle(psi[1 * l2 + 0]))) if abs(psi[1 * l2 + 0]) > 1e-12 else 0.0
    qubit_space = [0, 1, l2, l2 + 1]
    leakage = float(1 - np.sum(np.abs(psi[qubit_space]) ** 2))
    return GateResult(psi, phase, score, t_z, float(drift), max(leakage, 0.0))


INV_PHI = (math.sqrt(5) - 1) / 2


def optimize_gate_time(objective: Callable[[float], float], bracket: Sequence[float],
                       tol_t: float = 1e-12, max_iter: int = 200) -> tuple[float, float]:
    """Golden-section maximisation of ``objective`` on ``bracket``.

    Returns ``(t_best, objective(t_best))``.  Ties keep the interior point
    nearest the centre, so a constant objective yields the midpoint.

    Raises:
        NumericalError: if the objective returns a non-finite value.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ParameterError("bracket", "require t_lo < t_hi")

    def f(t):
        v = float(objective(t))
        if not math.isfinite(v):
            raise NumericalError(f"objective is not finite at t = {t:.6e} s")
        return v

    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo <= tol_t:
            break
        if f1 > f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        elif f2 > f1:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
        else:
            lo, hi = x1, x2
            x1 = hi - INV_PHI * (hi - lo)
            x2 = lo + INV_PHI * (hi - lo)
            f1, f2 = f(x1), f(x2)
    t_best = 0.5 * (lo + hi)
    return t_best, f(t_best)
