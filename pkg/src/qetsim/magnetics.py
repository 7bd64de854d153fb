"""Closed-form model of the QET inductor network.

Row/column order of every 5x5 array here is ``(i1, i2, i3, i4, ip)``: the four
flux-bias-unit inductor currents followed by the inductor-loop current.  All
quantities are SI (henries, amperes, webers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from . import PHI0
from .errors import ParameterError, SingularityError

__all__ = [
    "QetParams",
    "PulseCount",
    "FluxUnitReport",
    "build_inductance_matrix",
    "invert_via_cofactors",
    "flux_units",
    "loop_current_analytical",
    "external_flux",
    "coupling_coefficients",
]

nH = 1e-9

# |F| relative to the product of the diagonal entries of L; see invert_via_cofactors.
_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class QetParams:
    """Inductances of a two-pair QET (coarse pair 1/2, fine pair 3/4).

    ``L1..L4`` are the bias-unit inductors, ``Ln0..Ln5`` the segments of the
    inductor loop, ``M1..M4`` the unit-to-loop mutuals, ``M12``/``M34`` the
    intra-pair mutuals and ``M`` the loop-to-SQUID mutual.  Construction
    validates positivity and coupling magnitudes; the pairing constraints
    (``L1 == L2`` etc.) are only required by :func:`flux_units`.
    """

    L1: float
    L2: float
    L3: float
    L4: float
    Ln0: float
    Ln1: float
    Ln2: float
    Ln3: float
    Ln4: float
    Ln5: float
    M1: float
    M2: float
    M3: float
    M4: float
    M12: float
    M34: float
    M: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ParameterError(f.name, f"must be finite, got {value!r}")
            if f.name.startswith("L") and value <= 0:
                raise ParameterError(f.name, f"self-inductance must be > 0, got {value!r}")
        if self.M < 0:
            raise ParameterError("M", f"loop-to-SQUID mutual must be >= 0, got {self.M!r}")
        for name, k in coupling_coefficients(self).items():
            if not abs(k) < 1:
                raise ParameterError(name, f"coupling coefficient must lie in (-1, 1), got {k:.6g}")

    @classmethod
    def paired(cls, Lc, Lf, Mc, Mf, M12, M34, M, Ln0, Ln5, Ln1=None, Ln2=None, Ln3=None, Ln4=None):
        """Build parameters obeying the pairing constraints.

        Loop segments ``Ln1``/``Ln2`` default to ``Lc`` and ``Ln3``/``Ln4`` to
        ``Lf``, the symmetric layout of the reference design.
        """
        return cls(
            L1=Lc, L2=Lc, L3=Lf, L4=Lf,
            Ln0=Ln0,
            Ln1=Lc if Ln1 is None else Ln1,
            Ln2=Lc if Ln2 is None else Ln2,
            Ln3=Lf if Ln3 is None else Ln3,
            Ln4=Lf if Ln4 is None else Ln4,
            Ln5=Ln5,
            M1=Mc, M2=Mc, M3=Mf, M4=Mf,
            M12=M12, M34=M34, M=M,
        )

    @classmethod
    def reference(cls) -> "QetParams":
        """Reference design: Lc = Lf = 10 nH, K_c = 0.8, K_f = 0.08, r_cf = 10."""
        return cls.paired(
            Lc=10 * nH, Lf=10 * nH, Mc=8 * nH, Mf=0.8 * nH,
            M12=7.023 * nH, M34=7.023 * nH, M=0.02 * nH,
            Ln0=1 * nH, Ln5=2 * nH,
        )

    @property
    def L_sigma(self) -> float:
        return self.Ln0 + self.Ln1 + self.Ln2 + self.Ln3 + self.Ln4 + self.Ln5

    @property
    def Lc(self) -> float:
        return self.L1

    @property
    def Lf(self) -> float:
        return self.L3

    @property
    def Mc(self) -> float:
        return self.M1

    @property
    def Mf(self) -> float:
        return self.M3

    def is_paired(self, rtol: float = 1e-12) -> bool:
        pairs = [(self.L1, self.L2), (self.M1, self.M2), (self.L3, self.L4), (self.M3, self.M4)]
        return all(math.isclose(a, b, rel_tol=rtol, abs_tol=0.0) for a, b in pairs)

    def replace(self, **changes) -> "QetParams":
        return replace(self, **changes)


class PulseCount(NamedTuple):
    """Net SFQ pulse counts: ``n_c`` = #A - #B, ``n_f`` = #C - #D."""

    n_c: int
    n_f: int


@dataclass(frozen=True)
class FluxUnitReport:
    F: float
    delta_ipc: float
    delta_ipf: float
    phi_ec: float
    phi_ef: float
    r_c: float
    r_f: float
    r_cf: float
    K_c: float
    K_f: float
    K_12: float
    K_34: float


def coupling_coefficients(p: QetParams) -> dict:
    """Coupling coefficients ``M / sqrt(L_a L_b)`` of every mutual inductance.

    For paired parameters with ``Ln1 == Lc`` these reduce to ``K_c = Mc/Lc``,
    ``K_f = Mf/Lf``, ``K_12 = M12/Lc`` and ``K_34 = M34/Lf``.
    """
    return {
        "K_1": p.M1 / math.sqrt(p.L1 * p.Ln1),
        "K_2": p.M2 / math.sqrt(p.L2 * p.Ln2),
        "K_3": p.M3 / math.sqrt(p.L3 * p.Ln3),
        "K_4": p.M4 / math.sqrt(p.L4 * p.Ln4),
        "K_12": p.M12 / math.sqrt(p.L1 * p.L2),
        "K_34": p.M34 / math.sqrt(p.L3 * p.L4),
    }


def build_inductance_matrix(p: QetParams) -> np.ndarray:
    """Return L with ``Phi = L @ i`` for node fluxes ``(Phi_A, Phi_B, Phi_C, Phi_D, Phi_E)``.

    Negative bias units (B and D) couple to the loop with reversed dot
    orientation, hence ``-M2`` and ``-M4`` in the last row and column.
    """
    return np.array(
        [
            [p.L1, p.M12, 0.0, 0.0, p.M1],
            [p.M12, p.L2, 0.0, 0.0, -p.M2],
            [0.0, 0.0, p.L3, p.M34, p.M3],
            [0.0, 0.0, p.M34, p.L4, -p.M4],
            [p.M1, -p.M2, p.M3, -p.M4, p.L_sigma],
        ]
    )


def invert_via_cofactors(p: QetParams) -> tuple[float, np.ndarray]:
    """Closed-form inverse of the inductance matrix, ``L^-1 = A / F``.

    F equals ``-det(L)`` and A the negated adjugate; both are evaluated from
    their expanded polynomial forms rather than by elimination.

    Raises:
        SingularityError: if ``|F|`` is below ``1e-12`` times the product of
            the diagonal of L (a scale-free test; F carries units of H^5).
    """
    L1, L2, L3, L4 = p.L1, p.L2, p.L3, p.L4
    M1, M2, M3, M4 = p.M1, p.M2, p.M3, p.M4
    M12, M34, LS = p.M12, p.M34, p.L_sigma

    F = (
        L2 * (M34**2 * (L1 * LS - M1**2) + 2 * L1 * M3 * M34 * M4
              + L3 * (-L4 * (L1 * LS - M1**2) + L1 * M4**2) + L1 * L4 * M3**2)
        + (-L1 * M2**2 - LS * M12**2 - 2 * M1 * M12 * M2) * M34**2
        - 2 * M12**2 * M3 * M34 * M4
        + L3 * ((L1 * M2**2 + LS * M12**2 + 2 * M1 * M12 * M2) * L4 - M12**2 * M4**2)
        - L4 * M12**2 * M3**2
    )
    scale = L1 * L2 * L3 * L4 * LS
    if not abs(F) > _SINGULAR_RTOL * scale:
        raise SingularityError(
            f"inductance matrix is singular: |F| = {abs(F):.3e} H^5 "
            f"(threshold {_SINGULAR_RTOL * scale:.3e}); check for degenerate coupling"
        )

    det34 = L3 * L4 - M34**2
    det12 = L1 * L2 - M12**2
    u1 = L2 * M1 + M12 * M2
    u2 = L1 * M2 + M1 * M12
    u3 = L4 * M3 + M34 * M4
    u4 = L3 * M4 + M3 * M34

    a11 = L2 * (M34**2 * LS + 2 * M3 * M4 * M34 + (-L4 * LS + M4**2) * L3 + L4 * M3**2) + M2**2 * det34
    a12 = M12 * (-M34**2 * LS - 2 * M3 * M4 * M34 + (L4 * LS - M4**2) * L3 - L4 * M3**2) + M1 * M2 * det34
    a22 = L1 * (M34**2 * LS + 2 * M3 * M4 * M34 + (-L4 * LS + M4**2) * L3 + L4 * M3**2) + M1**2 * det34
    a33 = L4 * (LS * M12**2 + 2 * M1 * M2 * M12 + (-L2 * LS + M2**2) * L1 + L2 * M1**2) + M4**2 * det12
    a34 = M34 * (-LS * M12**2 - 2 * M1 * M2 * M12 + (L2 * LS - M2**2) * L1 - L2 * M1**2) + M3 * M4 * det12
    a44 = L3 * (LS * M12**2 + 2 * M1 * M2 * M12 + (-L2 * LS + M2**2) * L1 + L2 * M1**2) + M3**2 * det12

    a13 = -u3 * u1
    a14 = u1 * u4
    a15 = det34 * u1
    a23 = u3 * u2
    a24 = -u2 * u4
    a25 = -det34 * u2
    a35 = det12 * u3
    a45 = -det12 * u4
    a55 = -det34 * det12

    A = np.array(
        [
            [a11, a12, a13, a14, a15],
            [a12, a22, a23, a24, a25],
            [a13, a23, a33, a34, a35],
            [a14, a24, a34, a44, a45],
            [a15, a25, a35, a45, a55],
        ]
    )
    return F, A


def flux_units(p: QetParams) -> FluxUnitReport:
    """Coarse/fine flux units and tuning ratios of a paired QET."""
    if not p.is_paired():
        raise ParameterError(
            "pairing", "flux units require L1 == L2, M1 == M2, L3 == L4 and M3 == M4"
        )
    F, _ = invert_via_cofactors(p)
    Lc, Lf, Mc, Mf, M12, M34 = p.Lc, p.Lf, p.Mc, p.Mf, p.M12, p.M34
    coarse = (Lf**2 - M34**2) * (Lc + M12) * Mc / F
    fine = (Lc**2 - M12**2) * (Lf + M34) * Mf / F
    delta_ipc = coarse * PHI0
    delta_ipf = fine * PHI0
    return FluxUnitReport(
        F=F,
        delta_ipc=delta_ipc,
        delta_ipf=delta_ipf,
        phi_ec=p.M * delta_ipc,
        phi_ef=p.M * delta_ipf,
        r_c=p.M * coarse,
        r_f=p.M * fine,
        r_cf=coarse / fine if fine != 0 else math.copysign(math.inf, coarse),
        K_c=Mc / Lc,
        K_f=Mf / Lf,
        K_12=M12 / Lc,
        K_34=M34 / Lf,
    )


def loop_current_analytical(p: QetParams, counts) -> float:
    """Loop current ``n_c * delta_ipc + n_f * delta_ipf`` for net pulse counts."""
    n_c, n_f = counts
    if int(n_c) != n_c or int(n_f) != n_f:
        raise ParameterError("counts", f"pulse counts must be integers, got {tuple(counts)!r}")
    report = flux_units(p)
    return int(n_c) * report.delta_ipc + int(n_f) * report.delta_ipf


def external_flux(p: QetParams, i_p: float) -> float:
    """Flux threaded through the SQUID by loop current ``i_p``."""
    return p.M * i_p
