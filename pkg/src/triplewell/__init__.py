"""Few-boson dynamics in a one-dimensional triple well with hard outer walls.

Energies are in recoil units, lengths in inverse lattice wavenumbers and
times in hbar over the recoil energy.
"""
__version__ = "0.1.0"

from .discretization import Domain, GridSpec, PotentialSpec, aligned_full_grid
from .errors import (
    CalibrationError, CapacityError, ConfigurationError, NumericalError, RepresentationError,
    ScenarioError, TripleWellError,
)
from .manybody import ManyBodyOperator, ManyBodyState, SymmetrizedBasis, assemble_hamiltonian, build_basis
from .numberstate import NumberStateBuilder, NumberStateLabel

__all__ = [
    "Domain", "GridSpec", "PotentialSpec", "aligned_full_grid",
    "CalibrationError", "CapacityError", "ConfigurationError", "NumericalError",
    "RepresentationError", "ScenarioError", "TripleWellError",
    "ManyBodyOperator", "ManyBodyState", "SymmetrizedBasis", "assemble_hamiltonian", "build_basis",
    "NumberStateBuilder", "NumberStateLabel",
]
