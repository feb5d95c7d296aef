"""One-body spectra, sub-well Wannier levels, hopping and depth calibration."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.optimize import brentq

from .discretization import (
    WELLS, Domain, GridSpec, PotentialSpec, aligned_full_grid, evaluate_potential,
    kinetic_fd, one_body_hamiltonian, sub_grid_of,
)
from .errors import CalibrationError, ConfigurationError, NumericalError

log = logging.getLogger(__name__)

DEFAULT_SUB_POINTS = 41
CALIBRATION_BRACKET = (2.0, 45.0)


@dataclass
class SingleParticleSpectrum:
    """Lowest eigenpairs; ``orbitals`` columns satisfy ``u.T @ u == 1``.

    Function values are ``orbitals / sqrt(grid.spacing)``.
    """

    energies: np.ndarray
    orbitals: np.ndarray
    grid: GridSpec

    def wavefunction(self, n: int) -> np.ndarray:
        return self.orbitals[:, n] / np.sqrt(self.grid.spacing)


def _fix_signs(vectors):
    idx = np.argmax(np.abs(vectors) > 1e-6 * np.abs(vectors).max(axis=0), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def solve_spectrum(grid: GridSpec, potential: PotentialSpec, k: int, scheme: str = "fd") -> SingleParticleSpectrum:
    if k > grid.n_points:
        raise ConfigurationError(f"asked for {k} eigenpairs on {grid.n_points} points")
    try:
        if scheme == "fd":
            d, e = kinetic_fd(grid)
            vals, vecs = eigh_tridiagonal(d + evaluate_potential(potential, grid), e,
                                          select="i", select_range=(0, k - 1))
        else:
            vals, vecs = eigh(one_body_hamiltonian(grid, potential, scheme), subset_by_index=(0, k - 1))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"one-body eigensolver failed on {grid.n_points} points: {exc}") from exc
    return SingleParticleSpectrum(vals, _fix_signs(vecs), grid)


@dataclass
class WannierLevels:
    epsilon: dict
    hopping: float
    fit_residual: float
    depth: float
    tilt: float
    band_triplets: np.ndarray
    bound_levels: int
    spacing: float = 0.0
    orbitals: dict = field(repr=False, default_factory=dict)

    def onsite(self, well: str, band: int) -> float:
        return float(self.epsilon[well][band])

    def interaction_energy(self, g: float, well: str = "M", band: int = 0) -> float:
        """U = g * integral |w|^4 dx for a grid-normalized sub-well orbital."""
        w = self.orbitals[well][:, band]
        return float(g * np.sum(w**4) / self.spacing)


def bound_level_count(depth: float, tilt: float = 0.0, n_sub: int = DEFAULT_SUB_POINTS,
                      scheme: str = "fd") -> int:
    """Fewest sub-well levels lying below the local barrier top, over the three wells."""
    full = aligned_full_grid(n_sub)
    counts = []
    for well in WELLS:
        sub, _ = sub_grid_of(full, well)
        pot = PotentialSpec(depth, tilt, Domain.for_well(well))
        lo, hi = Domain.for_well(well).bounds
        top = depth + tilt * min(lo, hi)
        e = solve_spectrum(sub, pot, min(12, sub.n_points), scheme).energies
        counts.append(int((e < top).sum()))
    return min(counts)


def _three_site_residual(triplet, eps_band, hopping):
    e_l, e_m, e_r = eps_band
    h = np.array([[e_l, -hopping, 0.0], [-hopping, e_m, -hopping], [0.0, -hopping, e_r]])
    model = np.linalg.eigvalsh(h)
    shift = np.mean(triplet - model)
    return float(np.sqrt(np.mean((triplet - model - shift) ** 2)))


def wannier_analysis(depth: float, tilt: float = 0.0, n_sub: int = DEFAULT_SUB_POINTS,
                     scheme: str = "fd", n_bands: int = 3) -> WannierLevels:
    """Sub-well on-site energies and lowest-band hopping at lattice depth ``depth``.

    The hopping is a quarter of the spread of the lowest full-domain triplet;
    ``fit_residual`` is the rms misfit of a three-site chain with those on-site
    energies and that hopping (after a common shift).
    """
    full = aligned_full_grid(n_sub)
    eps, orbs = {}, {}
    for well in WELLS:
        sub, _ = sub_grid_of(full, well)
        spec = solve_spectrum(sub, PotentialSpec(depth, tilt, Domain.for_well(well)), n_bands, scheme)
        eps[well] = spec.energies
        orbs[well] = spec.orbitals
    bound = bound_level_count(depth, tilt, n_sub, scheme)
    triplets = solve_spectrum(full, PotentialSpec(depth, tilt), 3 * n_bands, scheme).energies.reshape(n_bands, 3)
    hopping = float(triplets[0, 2] - triplets[0, 0]) / 4.0
    residual = _three_site_residual(triplets[0], [eps[w][0] for w in WELLS], hopping)
    return WannierLevels(eps, hopping, residual, depth, tilt, triplets, bound, full.spacing, orbs)


def hopping_curve(depths, n_sub: int = DEFAULT_SUB_POINTS, scheme: str = "fd") -> np.ndarray:
    full = aligned_full_grid(n_sub)
    out = []
    for v in depths:
        e = solve_spectrum(full, PotentialSpec(float(v)), 3, scheme).energies
        out.append((e[2] - e[0]) / 4.0)
    return np.array(out)


@dataclass
class CalibrationRecord:
    depth: float
    hopping: float
    target_hopping: float
    bound_levels: int
    band_energies: list
    fit_residual: float
    n_sub: int
    scheme: str

    def to_text(self) -> str:
        lines = [
            f"V0 = {self.depth:.12g}",
            f"J = {self.hopping:.12g}",
            f"target_J = {self.target_hopping:.12g}",
            f"bound_levels = {self.bound_levels}",
            "band_energies = " + " ".join(f"{e:.12g}" for e in self.band_energies),
            f"fit_residual = {self.fit_residual:.6g}",
            f"n_sub = {self.n_sub}",
            f"scheme = {self.scheme}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CalibrationRecord":
        kv = {}
        for line in text.splitlines():
            if "=" in line and not line.lstrip().startswith("#"):
                key, value = line.split("=", 1)
                kv[key.strip()] = value.strip()
        return cls(float(kv["V0"]), float(kv["J"]), float(kv["target_J"]), int(kv["bound_levels"]),
                   [float(v) for v in kv["band_energies"].split()], float(kv["fit_residual"]),
                   int(kv["n_sub"]), kv["scheme"])


def _band_threshold(bands_required, lo, hi, n_sub, scheme):
    """Smallest depth in [lo, hi] binding ``bands_required`` levels (None if none)."""
    if bound_level_count(hi, 0.0, n_sub, scheme) < bands_required:
        return None
    if bound_level_count(lo, 0.0, n_sub, scheme) >= bands_required:
        return lo
    a, b = lo, hi
    while b - a > 1e-6 * b:
        mid = 0.5 * (a + b)
        if bound_level_count(mid, 0.0, n_sub, scheme) >= bands_required:
            b = mid
        else:
            a = mid
    return b


def calibrate_depth(target_J: float, bands_required: int = 3, bracket=CALIBRATION_BRACKET,
                    n_sub: int = DEFAULT_SUB_POINTS, scheme: str = "fd", rtol: float = 1e-4) -> CalibrationRecord:
    """Lattice depth whose lowest-band hopping equals ``target_J``.

    The search is restricted to depths binding at least ``bands_required``
    levels per well; the hopping decreases monotonically with depth there.
    """
    if target_J <= 0:
        raise ConfigurationError("target hopping must be positive")
    if bands_required < 3:
        raise ConfigurationError("at least three bound bands are required")
    lo, hi = bracket
    v_min = _band_threshold(bands_required, lo, hi, n_sub, scheme)
    samples = np.linspace(lo, hi, 9)
    frontier = [(float(v), float(j), bound_level_count(v, 0.0, n_sub, scheme))
                for v, j in zip(samples, hopping_curve(samples, n_sub, scheme))]
    if v_min is None:
        raise CalibrationError(f"no depth in {bracket} binds {bands_required} levels", frontier)
    j_max, j_min = hopping_curve([v_min, hi], n_sub, scheme)
    if not j_min <= target_J <= j_max:
        frontier.insert(0, (float(v_min), float(j_max), bands_required))
        listing = "; ".join(f"V0={v:.3f}: J={j:.3e}, bands={b}" for v, j, b in frontier)
        raise CalibrationError(
            f"target J={target_J:g} unreachable with >= {bands_required} bound levels: "
            f"achievable J in [{j_min:.3e}, {j_max:.3e}] for V0 in [{v_min:.4f}, {hi}]. "
            f"Frontier: {listing}",
            frontier,
        )

    def misfit(v):
        return np.log(hopping_curve([v], n_sub, scheme)[0] / target_J)

    depth = brentq(misfit, v_min, hi, rtol=rtol * 1e-2, xtol=1e-10)
    levels = wannier_analysis(depth, 0.0, n_sub, scheme)
    if abs(levels.hopping / target_J - 1) > 0.01:
        raise CalibrationError(f"bisection stalled at V0={depth:.6g}, J={levels.hopping:.4e}", frontier)
    log.info("calibrated V0=%.6f for J=%.4e", depth, levels.hopping)
    return CalibrationRecord(depth, levels.hopping, target_J, levels.bound_levels,
                             levels.band_triplets.ravel().tolist(), levels.fit_residual, n_sub, scheme)
