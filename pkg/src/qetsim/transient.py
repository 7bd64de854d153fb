"""Time-domain simulation of the QET circuit driven by SFQ pulses.

Circuit model
-------------
Each input port (A..D) carries a flux-bias unit: an RCSJ junction from the
port node to ground in parallel with the storage inductor ``L_k`` (which is
mutually coupled to the loop).  The loop node E is grounded.  Every port is
fed by an SFQ source, a Gaussian voltage pulse of area ``Phi0`` per event in
series with an optional source resistance:

* ``source_resistance == 0`` (default) -- an ideal voltage source; the port
  node voltage equals the source voltage, so the node flux is quantized
  exactly and the junction current is supplied by the source.
* ``source_resistance > 0`` -- a Thevenin source; the node voltage follows
  from KCL at the port and the junction must switch on its own.

The parasitic series triple of each unit sits in series with ``L_k`` inside
the storage branch, i.e. it adds to the diagonal of the inductance matrix.

The state vector is ``(delta1..delta4, i1..i4, ip)``, extended by the four
phase rates ``d delta / dt`` when the junction capacitance is non-zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import PHI0
from .errors import NumericalError, ParameterError, SingularityError
from .magnetics import FluxUnitReport, QetParams, build_inductance_matrix, invert_via_cofactors

__all__ = [
    "PORTS",
    "JunctionParams",
    "SourceEvent",
    "ParasiticParams",
    "TransientConfig",
    "TransientSystem",
    "Waveform",
    "Plateau",
    "StepReport",
    "ideal_sfq_source",
    "build_transient_system",
    "integrate",
    "extract_plateaus",
    "deviation_report",
    "counts_per_plateau",
    "reference_pattern",
    "WAVEFORM_HEADER",
]

PORTS = ("A", "B", "C", "D")
PHASE_PER_FLUX = 2 * math.pi / PHI0
MIN_STEP = 1e-18
# Gaussian tails beyond this many sigma are treated as zero.
PULSE_SPAN = 8.0

WAVEFORM_HEADER = (
    "time_s,i_p_A,i1_A,i2_A,i3_A,i4_A,V_A_V,V_B_V,V_C_V,V_D_V,"
    "delta1_rad,delta2_rad,delta3_rad,delta4_rad"
).split(",")


@dataclass(frozen=True)
class JunctionParams:
    i_c: float = 160e-6
    r_shunt: float = 0.766
    c: float = 0.0

    def __post_init__(self):
        if not self.i_c > 0:
            raise ParameterError("i_c", f"critical current must be > 0, got {self.i_c!r}")
        if not self.r_shunt > 0:
            raise ParameterError("r_shunt", f"shunt resistance must be > 0, got {self.r_shunt!r}")
        if self.c < 0:
            raise ParameterError("c", f"capacitance must be >= 0, got {self.c!r}")


@dataclass(frozen=True)
class SourceEvent:
    """One SFQ pulse: a Gaussian voltage of area Phi0 centred at ``t0``."""

    port: str
    t0: float
    sigma: float = 1e-12
    polarity: int = 1

    def __post_init__(self):
        if self.port not in PORTS:
            raise ParameterError("port", f"port must be one of {PORTS}, got {self.port!r}")
        if not self.sigma > 0:
            raise ParameterError("sigma", f"pulse width must be > 0, got {self.sigma!r}")
        if self.polarity != 1:
            raise ParameterError("polarity", "only +1 is supported; choose the opposite port instead")

    @property
    def peak(self) -> float:
        return PHI0 / (self.sigma * math.sqrt(2 * math.pi))

    def voltage(self, t):
        z = (np.asarray(t, dtype=float) - self.t0) / self.sigma
        return self.peak * np.exp(-0.5 * z * z)

    def flux(self, t):
        """Time integral of the voltage from -inf to ``t``."""
        z = (np.asarray(t, dtype=float) - self.t0) / (self.sigma * math.sqrt(2))
        from scipy.special import erfc

        return 0.5 * PHI0 * erfc(-z)


def ideal_sfq_source(port: str, t0: float, sigma: float = 1e-12) -> SourceEvent:
    return SourceEvent(port=port, t0=t0, sigma=sigma)


@dataclass(frozen=True)
class ParasiticParams:
    """Series parasitic inductances of one bias unit (source, junction, inductor side)."""

    l_a: float = 0.0
    l_b: float = 0.0
    l_c: float = 0.0

    def __post_init__(self):
        for name in ("l_a", "l_b", "l_c"):
            if getattr(self, name) < 0:
                raise ParameterError(name, "parasitic inductance must be >= 0")

    @classmethod
    def reference(cls) -> "ParasiticParams":
        return cls(l_a=0.05e-12, l_b=0.955e-12, l_c=0.096e-12)

    @property
    def total(self) -> float:
        return self.l_a + self.l_b + self.l_c


@dataclass(frozen=True)
class TransientConfig:
    t_end: float
    dt_max: float = 0.5e-12
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    sample_dt: float = 1e-12

    def __post_init__(self):
        if not self.t_end > 0:
            raise ParameterError("t_end", "must be > 0")
        if not 0 < self.dt_max <= self.sample_dt:
            raise ParameterError("dt_max", "require 0 < dt_max <= sample_dt")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ParameterError("rel_tol", "tolerances must be > 0")


class TransientSystem:
    """State equations of one QET circuit; single use, not thread-safe."""

    def __init__(self, p: QetParams, junctions: Sequence[JunctionParams], parasitics: Sequence[ParasiticParams],
                 sources: Sequence[SourceEvent], source_resistance: float = 0.0):
        if len(junctions) != 4 or len(parasitics) != 4:
            raise ParameterError("junctions", "exactly four junctions and four parasitic triples are required")
        if source_resistance < 0:
            raise ParameterError("source_resistance", "must be >= 0")
        self.params = p
        self.junctions = tuple(junctions)
        self.parasitics = tuple(parasitics)
        self.sources = tuple(sorted(sources, key=lambda e: (e.t0, e.port)))
        self.source_resistance = float(source_resistance)

        L = build_inductance_matrix(p)
        L[range(4), range(4)] += [par.total for par in self.parasitics]
        self.inductance = L
        if not any(par.total for par in self.parasitics):
            F, A = invert_via_cofactors(p)
            self.inverse = A / F
        else:
            scale = np.prod(np.diag(L))
            if abs(np.linalg.det(L)) < 1e-12 * scale:
                raise SingularityError("inductance matrix with parasitics is singular")
            self.inverse = np.linalg.inv(L)
        # only the port columns matter: Phi_E is pinned to zero
        self._kv = np.ascontiguousarray(self.inverse[:, :4])

        self.i_c = np.array([j.i_c for j in self.junctions])
        self.r = np.array([j.r_shunt for j in self.junctions])
        self.c = np.array([j.c for j in self.junctions])
        self.has_capacitance = bool(np.any(self.c > 0))
        if self.has_capacitance and not np.all(self.c > 0):
            raise ParameterError("c", "junction capacitances must be all zero or all positive")
        self.dim = 13 if self.has_capacitance else 9

        self._t0 = np.array([e.t0 for e in self.sources])
        self._inv2s2 = np.array([0.5 / e.sigma**2 for e in self.sources])
        self._amp = np.array([e.peak for e in self.sources])
        self._sig2 = np.array([e.sigma**2 for e in self.sources])
        self._port = np.array([PORTS.index(e.port) for e in self.sources], dtype=int)

    @property
    def event_times(self) -> np.ndarray:
        return self._t0.copy()

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.dim)

    def tolerance_scale(self) -> np.ndarray:
        """Per-component factor turning the absolute tolerance (amperes) into state units.

        A phase error ``d`` perturbs the junction current by about ``i_c d``,
        so phases get ``1 / i_c``; phase rates additionally get the plasma
        frequency.
        """
        scale = np.ones(self.dim)
        scale[0:4] = 1.0 / self.i_c
        if self.has_capacitance:
            omega_p = np.sqrt(PHASE_PER_FLUX * self.i_c / self.c)
            scale[9:13] = omega_p / self.i_c
        return scale

    def source_voltage(self, t: float) -> np.ndarray:
        if not self.sources:
            return np.zeros(4)
        z = t - self._t0
        g = self._amp * np.exp(-z * z * self._inv2s2)
        return np.bincount(self._port, weights=g, minlength=4)

    def _source_slope(self, t: float) -> np.ndarray:
        if not self.sources:
            return np.zeros(4)
        z = t - self._t0
        g = -self._amp * z / self._sig2 * np.exp(-z * z * self._inv2s2)
        return np.bincount(self._port, weights=g, minlength=4)

    def node_voltages(self, t: float, y: np.ndarray) -> np.ndarray:
        """Port node voltages V_A..V_D for state ``y`` at time ``t``."""
        if self.has_capacitance:
            return y[9:13] / PHASE_PER_FLUX
        vs = self.source_voltage(t)
        rs = self.source_resistance
        if rs == 0.0:
            return vs
        i_j = self.i_c * np.sin(y[0:4])
        r_par = 1.0 / (1.0 / self.r + 1.0 / rs)
        return r_par * (vs / rs - i_j - y[4:8])

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        dy = np.empty(self.dim)
        if self.has_capacitance:
            v = y[9:13] / PHASE_PER_FLUX
            dy[0:4] = y[9:13]
            rs = self.source_resistance
            if rs == 0.0:
                dy[9:13] = PHASE_PER_FLUX * self._source_slope(t)
            else:
                i_net = (self.source_voltage(t) - v) / rs - self.i_c * np.sin(y[0:4]) - v / self.r - y[4:8]
                dy[9:13] = PHASE_PER_FLUX * i_net / self.c
        else:
            v = self.node_voltages(t, y)
            dy[0:4] = PHASE_PER_FLUX * v
        dy[4:9] = self._kv @ v
        return dy

    def junction_currents(self, t: float, y: np.ndarray) -> np.ndarray:
        v = self.node_voltages(t, y)
        i_j = self.i_c * np.sin(y[0:4]) + v / self.r
        if self.has_capacitance:
            i_j = i_j + self.c * self.rhs(t, y)[9:13] / PHASE_PER_FLUX
        return i_j

    def energy(self, y: np.ndarray) -> float:
        """Josephson + magnetic + capacitive energy (J); a Lyapunov function when sources are off."""
        josephson = np.sum(PHI0 * self.i_c / (2 * math.pi) * (1 - np.cos(y[0:4])))
        i = y[4:9]
        magnetic = 0.5 * i @ self.inductance @ i
        kinetic = 0.0
        if self.has_capacitance:
            kinetic = 0.5 * np.sum(self.c * (y[9:13] / PHASE_PER_FLUX) ** 2)
        return float(josephson + magnetic + kinetic)


def build_transient_system(p: QetParams, j=None, par=None, sources: Sequence[SourceEvent] = (),
                           source_resistance: float = 0.0) -> TransientSystem:
    """Assemble the QET state equations.

    ``j`` and ``par`` may be a single instance (shared by all four units) or a
    sequence of four.  Defaults: reference junctions, no parasitics.
    """
    j = JunctionParams() if j is None else j
    par = ParasiticParams() if par is None else par
    junctions = (j,) * 4 if isinstance(j, JunctionParams) else tuple(j)
    parasitics = (par,) * 4 if isinstance(par, ParasiticParams) else tuple(par)
    return TransientSystem(p, junctions, parasitics, sources, source_resistance)


@dataclass
class Waveform:
    time: np.ndarray
    i_p: np.ndarray
    i_units: np.ndarray   # (N, 4)
    v_nodes: np.ndarray   # (N, 4)
    delta: np.ndarray     # (N, 4)
    events: tuple = ()
    steps: int = 0
    rejected: int = 0

    def __len__(self):
        return self.time.size

    def columns(self) -> np.ndarray:
        return np.column_stack([self.time, self.i_p, self.i_units, self.v_nodes, self.delta])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(WAVEFORM_HEADER)
            for row in self.columns():
                writer.writerow([format(float(x), ".17g") for x in row])


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def integrate(system: TransientSystem, cfg: TransientConfig, y0: np.ndarray | None = None) -> Waveform:
    """Integrate ``system`` on ``[0, cfg.t_end]`` and resample onto the output grid.

    Dormand-Prince 5(4) with local error control: every component of the
    embedded error estimate must stay below ``max(rel_tol*|y|, atol)``, where
    ``atol`` is ``abs_tol`` (amperes) mapped to each component's units by
    :meth:`TransientSystem.tolerance_scale`.
    Output samples come from cubic Hermite interpolation inside each
    accepted step.

    Raises:
        NumericalError: if the step size drops below 1e-18 s.
    """
    n_samples = int(math.floor(cfg.t_end / cfg.sample_dt + 1e-9)) + 1
    t_out = np.arange(n_samples) * cfg.sample_dt
    y_out = np.empty((n_samples, system.dim))

    t = 0.0
    y = system.initial_state() if y0 is None else np.array(y0, dtype=float)
    f = system.rhs(t, y)
    y_out[0] = y
    next_idx = 1
    h = min(cfg.dt_max, cfg.t_end)
    k = np.empty((7, system.dim))
    atol = cfg.abs_tol * system.tolerance_scale()
    steps = rejected = 0

    while t < cfg.t_end and next_idx < n_samples:
        h = min(h, cfg.t_end - t)
        if h < MIN_STEP:
            raise NumericalError(
                f"step size underflow ({h:.3e} s) at t = {t:.6e} s; the system is stiff -- "
                "use a wider SFQ pulse (sigma) or a smaller junction capacitance"
            )
        k[0] = f
        for s in range(1, 7):
            k[s] = system.rhs(t + _C[s] * h, y + h * (np.dot(_A[s], k[:s])))
        y_new = y + h * (_B5 @ k)
        err = h * (_E @ k)
        scale = np.maximum(cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new)), atol)
        ratio = float(np.max(np.abs(err) / scale))
        if ratio <= 1.0:
            t_new = t + h
            f_new = k[6]
            while next_idx < n_samples and t_out[next_idx] <= t_new * (1 + 1e-14):
                y_out[next_idx] = _hermite(t, y, f, t_new, y_new, f_new, t_out[next_idx])
                next_idx += 1
            t, y, f = t_new, y_new, f_new
            steps += 1
            factor = 5.0 if ratio == 0.0 else min(5.0, 0.9 * ratio ** -0.2)
            h = min(h * factor, cfg.dt_max)
        else:
            rejected += 1
            h *= max(0.1, 0.9 * ratio ** -0.2)

    v = np.array([system.node_voltages(ti, yi) for ti, yi in zip(t_out, y_out)])
    return Waveform(
        time=t_out,
        i_p=y_out[:, 8].copy(),
        i_units=y_out[:, 4:8].copy(),
        v_nodes=v,
        delta=y_out[:, 0:4].copy(),
        events=system.sources,
        steps=steps,
        rejected=rejected,
    )


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1)


class Plateau(NamedTuple):
    start: float
    end: float
    mean: float
    std: float
    flagged: bool


@dataclass
class StepReport:
    plateaus: list
    transitions: list = field(default_factory=list)
    rise_times: list = field(default_factory=list)

    @property
    def levels(self) -> np.ndarray:
        return np.array([pl.mean for pl in self.plateaus])


def _transition_times(events, merge: float) -> list:
    times = sorted(e.t0 for e in events)
    clusters: list[list[float]] = []
    for t in times:
        if clusters and t - clusters[-1][-1] <= merge:
            clusters[-1].append(t)
        else:
            clusters.append([t])
    return [0.5 * (c[0] + c[-1]) for c in clusters]


def extract_plateaus(w: Waveform, settle: float = 200e-12, events: Sequence[SourceEvent] | None = None) -> StepReport:
    """Split ``w.i_p`` into flat segments between SFQ events.

    Events closer than ``PULSE_SPAN`` pulse widths merge into one transition.
    Each plateau spans from ``settle`` after the preceding transition to the
    leading edge of the next one.  Plateaus whose inter-event interval is
    shorter than ``2 * settle`` are kept but flagged.  Rise times are the
    10 %-90 % times of each transition (NaN where the level does not change).
    """
    if len(w) == 0:
        raise ParameterError("waveform", "empty waveform")
    events = w.events if events is None else tuple(events)
    sigma = max((e.sigma for e in events), default=0.0)
    edge = PULSE_SPAN * sigma
    transitions = _transition_times(events, edge)
    t, ip = w.time, w.i_p
    bounds = [t[0]] + transitions + [t[-1]]

    plateaus = []
    for k in range(len(bounds) - 1):
        lo, hi = bounds[k], bounds[k + 1]
        start = lo + settle if k > 0 else lo
        end = hi - edge if k < len(bounds) - 2 else hi
        flagged = bool(k > 0 and (hi - lo) < 2 * settle)
        sel = (t >= start) & (t <= end)
        if np.any(sel):
            mean, std = float(np.mean(ip[sel])), float(np.std(ip[sel]))
        else:
            mean, std, flagged = math.nan, math.nan, True
        plateaus.append(Plateau(start, end, mean, std, flagged))

    rise = []
    for k, tt in enumerate(transitions):
        before, after = plateaus[k].mean, plateaus[k + 1].mean
        rise.append(_rise_time(t, ip, tt - settle, tt + settle, before, after))
    return StepReport(plateaus=plateaus, transitions=transitions, rise_times=rise)


def _rise_time(t, y, lo, hi, before, after) -> float:
    step = after - before
    if not np.isfinite(step) or abs(step) <= 1e-9 * max(abs(before), abs(after), 1e-30):
        return math.nan
    sel = (t >= lo) & (t <= hi)
    ts, frac = t[sel], (y[sel] - before) / step

    def crossing(level):
        idx = np.nonzero(frac >= level)[0]
        if idx.size == 0:
            return math.nan
        i = idx[0]
        if i == 0:
            return ts[0]
        f0, f1 = frac[i - 1], frac[i]
        return ts[i - 1] + (level - f0) / (f1 - f0) * (ts[i] - ts[i - 1])

    return crossing(0.9) - crossing(0.1)


def deviation_report(s: StepReport, f: FluxUnitReport, counts: Sequence, zero_atol: float = 1e-9) -> np.ndarray:
    """Relative deviation of each plateau from ``n_c*delta_ipc + n_f*delta_ipf``.

    Plateaus whose analytical value is zero report 0 when the measured level
    is within ``zero_atol`` amperes of zero.

    Raises:
        NumericalError: for a zero analytical value with a non-zero plateau.
    """
    if len(counts) != len(s.plateaus):
        raise ParameterError("counts", f"expected {len(s.plateaus)} count pairs, got {len(counts)}")
    out = []
    for pl, (n_c, n_f) in zip(s.plateaus, counts):
        analytic = n_c * f.delta_ipc + n_f * f.delta_ipf
        if analytic == 0:
            if abs(pl.mean) > zero_atol:
                raise NumericalError(f"undefined relative deviation: analytical level 0 but plateau {pl.mean:.3e} A")
            out.append(0.0)
        else:
            out.append((pl.mean - analytic) / analytic)
    return np.array(out)


def counts_per_plateau(events: Sequence[SourceEvent], sigma_merge: float | None = None) -> list:
    """Net ``(n_c, n_f)`` on each plateau implied by the event list."""
    events = sorted(events, key=lambda e: e.t0)
    sigma = max((e.sigma for e in events), default=0.0)
    merge = PULSE_SPAN * sigma if sigma_merge is None else sigma_merge
    transitions = _transition_times(events, merge)
    counts = [(0, 0)]
    n_c = n_f = 0
    idx = 0
    for tt in transitions:
        while idx < len(events) and events[idx].t0 <= tt + merge:
            port = events[idx].port
            n_c += {"A": 1, "B": -1}.get(port, 0)
            n_f += {"C": 1, "D": -1}.get(port, 0)
            idx += 1
        counts.append((n_c, n_f))
    return counts


def reference_pattern(spacing: float = 2e-9, sigma: float = 1e-12) -> list:
    """Pulse train producing the five reference plateaus (1,0), (0,1), (1,1), (2,0), (0,2).

    Each level is set by pulses at one instant and cleared ``spacing`` later
    by the complementary ports, so the waveform returns to zero between
    levels.  Doubled counts use two coincident pulses on the same port.
    """
    groups = [("A",), ("B",), ("C",), ("D",), ("A", "C"), ("B", "D"),
              ("A", "A"), ("B", "B"), ("C", "C"), ("D", "D")]
    return [SourceEvent(port, (k + 1) * spacing, sigma) for k, ports in enumerate(groups) for port in ports]
