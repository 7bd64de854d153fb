"""Flux-tunable transmon spectrum.

Energies are angular frequencies (E / hbar, rad/s) throughout, so a parameter
quoted as "2pi x 5 GHz" is simply ``2 * pi * 5e9``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, eigvalsh_tridiagonal

from . import PHI0
from .errors import NumericalError, ParameterError

__all__ = [
    "TransmonParams",
    "SpectrumReport",
    "RegimeReport",
    "effective_josephson_energy",
    "eigenenergy_perturbative",
    "qubit_frequency",
    "anharmonicity",
    "detuning",
    "charge_basis_spectrum",
    "spectrum",
    "regime_check",
    "TRANSMON_MIN_RATIO",
    "WARNING_MIN_RATIO",
]

TWO_PI = 2 * math.pi

# Regime thresholds on E_JS/E_C; policy values, not physical constants.
TRANSMON_MIN_RATIO = 20.0
WARNING_MIN_RATIO = 5.0


@dataclass(frozen=True)
class TransmonParams:
    """Parameters of a SQUID-tunable transmon.

    Attributes:
        e_j1, e_j2: junction Josephson energies (rad/s).
        e_c: charging energy (rad/s).
        n_g: offset charge.
        m: mutual inductance between the flux line (QET loop) and the SQUID (H).
        levels: Hilbert-space truncation used by gate simulations.
        i_idle: static bias current setting the idle point (A).
    """

    e_j1: float
    e_j2: float
    e_c: float
    n_g: float = 0.0
    m: float = 0.0
    levels: int = 3
    i_idle: float = field(default=0.0)

    def __post_init__(self):
        if self.e_j1 < 0 or self.e_j2 < 0:
            raise ParameterError("e_j", "junction energies must be >= 0")
        if self.e_j1 + self.e_j2 <= 0:
            raise ParameterError("e_j", "at least one junction energy must be > 0")
        if not self.e_c > 0:
            raise ParameterError("e_c", f"charging energy must be > 0, got {self.e_c!r}")
        if self.m < 0:
            raise ParameterError("m", f"mutual inductance must be >= 0, got {self.m!r}")
        if int(self.levels) != self.levels or self.levels < 2:
            raise ParameterError("levels", f"truncation must be an integer >= 2, got {self.levels!r}")

    @classmethod
    def symmetric(cls, e_j, e_c, **kwargs) -> "TransmonParams":
        """Symmetric SQUID (d = 0) with two junctions of energy ``e_j`` each."""
        return cls(e_j1=e_j, e_j2=e_j, e_c=e_c, **kwargs)

    @classmethod
    def reference(cls, **kwargs) -> "TransmonParams":
        """Reference qubit: 5.0 GHz idle frequency, E_JS/E_C = 150, M = 0.02 nH."""
        kwargs.setdefault("m", 0.02e-9)
        return cls.symmetric(TWO_PI * 11.147e9, TWO_PI * 148.628e6, **kwargs)

    @property
    def e_jsum(self) -> float:
        return self.e_j1 + self.e_j2

    @property
    def d(self) -> float:
        """Junction asymmetry ``(E_J2 - E_J1) / E_JSigma``."""
        return (self.e_j2 - self.e_j1) / self.e_jsum

    def replace(self, **changes) -> "TransmonParams":
        return replace(self, **changes)


class SpectrumReport(NamedTuple):
    e_js: float
    ratio: float
    energies: np.ndarray
    e10: float
    e21: float
    alpha: float


class RegimeReport(NamedTuple):
    ratio: float
    classification: str


def effective_josephson_energy(p: TransmonParams, i_z) -> np.ndarray | float:
    """SQUID Josephson energy at bias current ``i_z`` (scalar or array).

    Uses ``E_JSigma * sqrt(cos^2 x + d^2 sin^2 x)`` with ``x = pi M i_z / Phi0``,
    which equals ``|cos x| sqrt(1 + d^2 tan^2 x)`` without the removable
    singularity at half flux.
    """
    x = math.pi * p.m * np.asarray(i_z, dtype=float) / PHI0
    c, s = np.cos(x), np.sin(x)
    e_js = p.e_jsum * np.sqrt(c * c + p.d**2 * s * s)
    return float(e_js) if e_js.ndim == 0 else e_js


def eigenenergy_perturbative(p: TransmonParams, i_z, k: int):
    """First-order perturbative level ``E_k`` (rad/s)."""
    if not 0 <= k < p.levels:
        raise ParameterError("k", f"level index must be in [0, {p.levels}), got {k}")
    e_js = effective_josephson_energy(p, i_z)
    e_c = p.e_c
    return k * np.sqrt(8 * e_c * e_js) - e_c / 12 * (6 * k * k + 6 * k + 3) - e_js


def qubit_frequency(p: TransmonParams, i_z):
    """Qubit angular frequency ``sqrt(8 E_C E_JS) - E_C`` at bias ``i_z``."""
    return np.sqrt(8 * p.e_c * effective_josephson_energy(p, i_z)) - p.e_c


def anharmonicity(p: TransmonParams) -> float:
    """``E21 - E10`` of the perturbative model, independent of bias."""
    return -p.e_c


def detuning(p: TransmonParams, i_w, i_i):
    """Frequency change ``omega(i_w) - omega(i_i)`` when moving from idle to working bias."""
    e_js_w = effective_josephson_energy(p, i_w)
    e_js_i = effective_josephson_energy(p, i_i)
    return math.sqrt(8 * p.e_c) * (np.sqrt(e_js_w) - np.sqrt(e_js_i))


def charge_basis_spectrum(p: TransmonParams, i_z: float, cutoff: int = 20, count: int | None = None) -> np.ndarray:
    """Lowest eigenvalues of the transmon Hamiltonian in the charge basis.

    The Hamiltonian is tridiagonal on charge states ``n = -cutoff..cutoff``:
    ``4 E_C (n - n_g)^2`` on the diagonal and ``-E_JS/2`` off it.  Returns the
    lowest ``count`` (default ``p.levels``) eigenvalues in ascending order.
    """
    if cutoff < 5:
        raise ParameterError("cutoff", f"charge cutoff must be >= 5, got {cutoff}")
    count = p.levels if count is None else count
    n = np.arange(-cutoff, cutoff + 1, dtype=float)
    diag = 4 * p.e_c * (n - p.n_g) ** 2
    e_js = effective_josephson_energy(p, i_z)
    off = np.full(2 * cutoff, -e_js / 2)
    try:
        return eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    except LinAlgError as exc:
        span = diag.max() / max(abs(e_js), np.finfo(float).tiny)
        raise NumericalError(
            f"charge-basis eigensolver failed (dim {diag.size}, diag/offdiag scale {span:.3e}): {exc}"
        ) from exc


def spectrum(p: TransmonParams, i_z: float, exact: bool = False, cutoff: int = 20) -> SpectrumReport:
    """Spectrum summary at one bias point, perturbative by default."""
    e_js = effective_josephson_energy(p, i_z)
    if exact:
        energies = charge_basis_spectrum(p, i_z, cutoff, count=max(p.levels, 3))
    else:
        energies = np.array([eigenenergy_perturbative(p, i_z, k) for k in range(p.levels)])
        if p.levels < 3:
            energies = np.append(energies, 2 * math.sqrt(8 * p.e_c * e_js) - 3 * p.e_c - p.e_c / 4 - e_js)
    e10 = energies[1] - energies[0]
    e21 = energies[2] - energies[1]
    return SpectrumReport(e_js, e_js / p.e_c, energies[: p.levels], e10, e21, e21 - e10)


def regime_check(p: TransmonParams, i_z) -> RegimeReport:
    ratio = effective_josephson_energy(p, i_z) / p.e_c
    if ratio >= TRANSMON_MIN_RATIO:
        label = "transmon"
    elif ratio >= WARNING_MIN_RATIO:
        label = "warning"
    else:
        label = "invalid"
    return RegimeReport(float(ratio), label)
