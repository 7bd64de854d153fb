"""Exception hierarchy. The CLI maps these onto its exit codes."""


class QetsimError(Exception):
    """Base class for all errors raised by qetsim."""


class ParameterError(QetsimError, ValueError):
    """A physical parameter violates its invariants.

    ``field`` names the offending parameter (or coupling coefficient).
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConfigError(QetsimError, ValueError):
    """An experiment configuration file is malformed."""


class NumericalError(QetsimError, ArithmeticError):
    """A numerical routine failed (step underflow, norm drift, non-convergence)."""


class SingularityError(NumericalError):
    """The inductance matrix is singular or nearly so."""


class RegimeError(NumericalError):
    """A bias point leaves the transmon regime (E_JS/E_C too small)."""
