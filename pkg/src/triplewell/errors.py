"""Exception hierarchy shared by every layer of the package.

Each class carries the process exit code used by the command line front end.
"""


class TripleWellError(Exception):
    exit_code = 1


class ConfigurationError(TripleWellError, ValueError):
    exit_code = 2


class CapacityError(TripleWellError):
    exit_code = 3


class NumericalError(TripleWellError, ArithmeticError):
    exit_code = 4


class ScenarioError(TripleWellError):
    exit_code = 5


class CalibrationError(NumericalError):
    """Raised when no lattice depth satisfies the hopping/band requirements."""

    def __init__(self, message, frontier=None):
        super().__init__(message)
        self.frontier = list(frontier or [])


class RepresentationError(NumericalError):
    """A wavefunction lost too much norm when expanded in a truncated basis."""
