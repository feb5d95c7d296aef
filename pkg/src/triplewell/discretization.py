"""Hard-wall grids, the lattice potential and one-body operators.

Units: hbar = M = kappa = 1, so the kinetic operator is -(1/2) d^2/dx^2 and
the potential is V0 sin^2(x) + slope * x on [-3pi/2, 3pi/2].
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

HALF_PI = 0.5 * np.pi


class Domain(enum.Enum):
    FULL_TRIPLE = (-3 * HALF_PI, 3 * HALF_PI)
    SUB_WELL_LEFT = (-3 * HALF_PI, -HALF_PI)
    SUB_WELL_MIDDLE = (-HALF_PI, HALF_PI)
    SUB_WELL_RIGHT = (HALF_PI, 3 * HALF_PI)

    @property
    def bounds(self) -> tuple[float, float]:
        return self.value

    @classmethod
    def for_well(cls, well: str) -> "Domain":
        return {"L": cls.SUB_WELL_LEFT, "M": cls.SUB_WELL_MIDDLE, "R": cls.SUB_WELL_RIGHT}[well]


WELLS = ("L", "M", "R")
WELL_CENTERS = {"L": -np.pi, "M": 0.0, "R": np.pi}


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of interior points; the wavefunction vanishes at both ends."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ConfigurationError(f"x_min={self.x_min} must be below x_max={self.x_max}")
        if self.n_points < 8:
            raise ConfigurationError(f"n_points={self.n_points} < 8")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points + 1)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(1, self.n_points + 1)

    @classmethod
    def for_domain(cls, domain: Domain, n_points: int) -> "GridSpec":
        lo, hi = domain.bounds
        return cls(lo, hi, n_points)

    def matches(self, domain: Domain, atol: float = 1e-12) -> bool:
        lo, hi = domain.bounds
        return abs(self.x_min - lo) < atol and abs(self.x_max - hi) < atol


def aligned_full_grid(n_sub: int) -> GridSpec:
    """Full triple-well grid whose points include the sub-well walls at +-pi/2.

    Each sub-well grid with ``n_sub`` interior points is then exactly a slice
    of the full grid, which keeps finite-difference sub-well problems and the
    full problem on a common lattice.
    """
    return GridSpec.for_domain(Domain.FULL_TRIPLE, 3 * n_sub + 2)


def sub_grid_of(full: GridSpec, well: str) -> tuple[GridSpec, slice]:
    """Sub-well grid and the slice of ``full.points`` it occupies."""
    n_full = full.n_points
    if (n_full - 2) % 3 or not full.matches(Domain.FULL_TRIPLE):
        raise ConfigurationError(f"grid with {n_full} points is not wall-aligned")
    n_sub = (n_full - 2) // 3
    start = {"L": 0, "M": n_sub + 1, "R": 2 * n_sub + 2}[well]
    return GridSpec.for_domain(Domain.for_well(well), n_sub), slice(start, start + n_sub)


@dataclass(frozen=True)
class PotentialSpec:
    depth: float
    tilt: float = 0.0
    domain: Domain = Domain.FULL_TRIPLE

    def __post_init__(self):
        if self.depth <= 0:
            raise ConfigurationError(f"lattice depth must be positive, got {self.depth}")

    def restricted(self, domain: Domain) -> "PotentialSpec":
        return PotentialSpec(self.depth, self.tilt, domain)


def evaluate_potential(spec: PotentialSpec, grid: GridSpec) -> np.ndarray:
    if not grid.matches(spec.domain):
        raise ConfigurationError(
            f"grid [{grid.x_min:.6g}, {grid.x_max:.6g}] does not match domain {spec.domain.name}"
        )
    x = grid.points
    return spec.depth * np.sin(x) ** 2 + spec.tilt * x


def kinetic_fd(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the 3-point finite-difference kinetic matrix."""
    h = 0.5 / grid.spacing**2
    return np.full(grid.n_points, 2 * h), np.full(grid.n_points - 1, -h)


def kinetic_dvr(grid: GridSpec) -> np.ndarray:
    """Dense sine-DVR (Colbert-Miller box) kinetic matrix on the interior points."""
    n = grid.n_points + 1
    i = np.arange(1, n)
    ii, jj = np.meshgrid(i, i, indexing="ij")
    prefactor = np.pi**2 / (4 * grid.length**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        off = (-1.0) ** (ii - jj) * (
            1 / np.sin(np.pi * (ii - jj) / (2 * n)) ** 2 - 1 / np.sin(np.pi * (ii + jj) / (2 * n)) ** 2
        )
    diag = (2 * n**2 + 1) / 3 - 1 / np.sin(np.pi * i / n) ** 2
    t = np.where(ii == jj, 0.0, off)
    t[np.diag_indices_from(t)] = diag
    return prefactor * t


def kinetic_operator(grid: GridSpec, scheme: str = "fd") -> np.ndarray:
    """Kinetic energy matrix with hard walls, as a dense symmetric array."""
    if scheme == "fd":
        d, e = kinetic_fd(grid)
        return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    if scheme == "dvr":
        return kinetic_dvr(grid)
    raise ConfigurationError(f"unknown kinetic scheme {scheme!r}")


def one_body_hamiltonian(grid: GridSpec, potential: PotentialSpec, scheme: str = "fd") -> np.ndarray:
    h = kinetic_operator(grid, scheme)
    h[np.diag_indices_from(h)] += evaluate_potential(potential, grid)
    return h
