"""Simulator for an SFQ-driven qubit energy tuner (QET).

The package is split by physical layer:

* :mod:`qetsim.magnetics` -- closed-form inductor-loop model (flux units, loop current).
* :mod:`qetsim.transient` -- RCSJ time-domain integration of the QET circuit.
* :mod:`qetsim.transmon` -- flux-tunable transmon spectrum.
* :mod:`qetsim.dynamics` -- Z and iSWAP gate evolution and fidelity.
* :mod:`qetsim.cli` -- the ``qetsim`` batch front end.
"""

__version__ = "0.1.0"

PHI0 = 2.067833848e-15
"""Magnetic flux quantum h/2e in webers."""

from .errors import (  # noqa: E402
    ConfigError,
    NumericalError,
    ParameterError,
    QetsimError,
    RegimeError,
    SingularityError,
)

__all__ = [
    "PHI0",
    "ConfigError",
    "NumericalError",
    "ParameterError",
    "QetsimError",
    "RegimeError",
    "SingularityError",
    "__version__",
]
