"""Well populations, densities, number-state probabilities and node counts."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .discretization import WELLS, Domain, GridSpec
from .manybody import ManyBodyState, SymmetrizedBasis, _enumerate

NODE_FLOOR = 0.1


class _RemainderMap:
    """Index table ``rows[r, a]`` of configuration ``r + a`` for every (N-1)-remainder ``r``."""

    def __init__(self, basis: SymmetrizedBasis):
        n, m = basis.n_bosons, basis.n_orbitals
        rest = _enumerate(n - 1, m)
        orbitals = np.arange(m)
        full = np.concatenate([np.repeat(rest, m, axis=0), np.tile(orbitals, len(rest))[:, None]], axis=1)
        self.rows = basis.index(full).reshape(len(rest), m)
        occ = np.zeros((len(rest), m))
        if n > 1:
            np.add.at(occ, (np.repeat(np.arange(len(rest)), n - 1), rest.ravel()), 1)
        self.weights = np.sqrt(occ + 1.0)


_REMAINDERS: dict = {}


def _remainders(basis) -> _RemainderMap:
    key = id(basis)
    cached = _REMAINDERS.get(key)
    if cached is None or cached[0] is not basis:
        cached = (basis, _RemainderMap(basis))
        _REMAINDERS[key] = cached
    return cached[1]


def _coefficients(state):
    return state.coefficients if isinstance(state, ManyBodyState) else np.asarray(state)


def density_matrix(state: ManyBodyState, basis: SymmetrizedBasis | None = None) -> np.ndarray:
    """One-body density matrix <a+_a a_b> in the orbital basis; its trace is N."""
    basis = basis or state.basis
    rm = _remainders(basis)
    amp = _coefficients(state)[rm.rows] * rm.weights
    return amp.conj().T @ amp


def orbital_occupations(state, basis: SymmetrizedBasis | None = None) -> np.ndarray:
    """Diagonal of the density matrix, without forming it."""
    basis = basis or state.basis
    rm = _remainders(basis)
    amp = _coefficients(state)[rm.rows] * rm.weights
    return (np.abs(amp) ** 2).sum(axis=0)


def well_weights(grid: GridSpec) -> np.ndarray:
    """(3, n_points) site weights per well; a site on a well boundary is shared equally."""
    x = grid.points
    tol = 1e-9 * grid.spacing
    out = np.zeros((3, grid.n_points))
    for k, well in enumerate(WELLS):
        lo, hi = Domain.for_well(well).bounds
        inside = (x > lo + tol) & (x < hi - tol)
        edge = (np.abs(x - lo) <= tol) | (np.abs(x - hi) <= tol)
        out[k] = inside + 0.5 * edge
    return out


def well_projectors(basis: SymmetrizedBasis) -> np.ndarray:
    """(3, M, M) matrices of the well-restricted number operator in the orbital basis."""
    w = well_weights(basis.grid)
    if basis.backend == "grid":
        return np.stack([np.diag(row) for row in w])
    u = basis.orbitals
    return np.stack([u.T @ (row[:, None] * u) for row in w])


def well_populations(state, basis: SymmetrizedBasis | None = None) -> np.ndarray:
    """Boson numbers (n_L, n_M, n_R) in the three thirds of the domain."""
    basis = basis or state.basis
    if basis.backend == "grid":
        return well_weights(basis.grid) @ orbital_occupations(state, basis)
    rho = density_matrix(state, basis)
    return np.einsum("ab,wab->w", rho, well_projectors(basis)).real


def one_body_density(state, grid: GridSpec | None = None, basis: SymmetrizedBasis | None = None) -> np.ndarray:
    """rho(x) on the basis grid, normalized so that sum(rho) * dx == N."""
    basis = basis or state.basis
    grid = grid or basis.grid
    if grid != basis.grid:
        raise ValueError("densities are evaluated on the basis grid")
    dx = grid.spacing
    if basis.backend == "grid":
        return orbital_occupations(state, basis) / dx
    rho = density_matrix(state, basis).real
    u = basis.orbitals
    return np.einsum("xa,ab,xb->x", u, rho, u) / dx


def number_state_overlaps(state, references: dict) -> dict:
    """|<ref|psi>|^2 for each named reference state, plus ``untracked`` = 1 - sum."""
    c = _coefficients(state)
    out = {}
    for name, ref in references.items():
        out[name] = float(abs(np.vdot(_coefficients(ref), c)) ** 2)
    out["untracked"] = 1.0 - sum(out.values())
    return out


class NodeCount(NamedTuple):
    count: int
    low_population: bool


def count_nodes_in_well(rho, grid: GridSpec, well: str, floor: float = NODE_FLOOR,
                        min_population: float = 1e-3) -> NodeCount:
    """Interior local minima of ``rho`` in ``well`` below ``floor`` times the well maximum.

    Sites on the well boundary (hard-wall zeros of sub-well states) are
    excluded.  A well holding less than ``min_population`` bosons reports
    zero nodes with ``low_population`` set.
    """
    rho = np.asarray(rho, dtype=float)
    lo, hi = Domain.for_well(well).bounds
    x = grid.points
    tol = 1e-9 * grid.spacing
    inside = np.nonzero((x > lo + tol) & (x < hi - tol))[0]
    seg = rho[inside]
    if seg.size < 3 or seg.sum() * grid.spacing < min_population or seg.max() <= 0:
        return NodeCount(0, True)
    peak = seg.max()
    count = 0
    j = 1
    while j < seg.size - 1:
        if seg[j] < seg[j - 1]:
            k = j
            while k + 1 < seg.size and seg[k + 1] == seg[j]:
                k += 1  # plateau
            if k + 1 < seg.size and seg[k + 1] > seg[j] and seg[j] < floor * peak:
                count += 1
            j = k + 1
        else:
            j += 1
    return NodeCount(count, False)


@dataclass
class ObservableSeries:
    """Observables at each sample time of a trajectory."""

    times: np.ndarray
    populations: np.ndarray
    probabilities: dict
    energies: np.ndarray
    norms: np.ndarray
    densities: np.ndarray | None = None
    x: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_trajectory(cls, trajectory, x=None, meta=None) -> "ObservableSeries":
        obs = trajectory.observables
        probs = {k[2:]: obs[k] for k in obs if k.startswith("p:")}
        merged = dict(trajectory.meta)
        merged.update(meta or {})
        return cls(trajectory.times, obs["populations"], probs, obs["energy"], obs["norm"],
                   obs.get("density"), x, merged)

    @property
    def n_bosons(self) -> float:
        return float(self.populations[0].sum())

    def tracked_total(self) -> np.ndarray:
        tracked = [v for k, v in self.probabilities.items() if k != "untracked"]
        return np.sum(tracked, axis=0) if tracked else np.zeros_like(self.times)

    def write_csv(self, path, sidecar=True, header=()) -> None:
        names = [k for k in self.probabilities if k != "untracked"]
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["time", "n_L", "n_M", "n_R", *[f"p[{n}]" for n in names], "untracked", "energy", "norm"])
            for j, t in enumerate(self.times):
                w.writerow([_fmt(t), *(_fmt(v) for v in self.populations[j]),
                            *(_fmt(self.probabilities[n][j]) for n in names),
                            _fmt(1.0 - sum(self.probabilities[n][j] for n in names)),
                            _fmt(self.energies[j]), _fmt(self.norms[j])])
        if sidecar:
            write_sidecar(path, self.meta)

    def write_density_csv(self, path, indices, sidecar=True, header=()) -> None:
        """Density snapshots at the given sample indices as columns of one table."""
        if self.densities is None:
            raise ValueError("no density snapshots were recorded")
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["x", *[f"t={_fmt(self.times[j])}" for j in indices]])
            for i, xi in enumerate(self.x):
                w.writerow([_fmt(xi), *(_fmt(self.densities[j][i]) for j in indices)])
        if sidecar:
            write_sidecar(path, dict(self.meta, snapshot_times=[float(self.times[j]) for j in indices]))


def _fmt(v) -> str:
    return f"{float(v):.10g}"


def write_sidecar(path, meta: dict) -> None:
    with open(f"{path}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def make_observer(basis: SymmetrizedBasis, references: dict | None = None, densities: bool = True):
    """Observer for :func:`triplewell.propagate.evolve` recording the standard observables."""
    references = references or {}
    weights = well_weights(basis.grid)
    projectors = None if basis.backend == "grid" else well_projectors(basis)
    dx = basis.grid.spacing
    rm = _remainders(basis)

    def observe(t, c):
        amp = c[rm.rows] * rm.weights
        out = {}
        if basis.backend == "grid":
            occ = (np.abs(amp) ** 2).sum(axis=0)
            out["populations"] = weights @ occ
            rho_x = occ / dx
        else:
            rho = amp.conj().T @ amp
            out["populations"] = np.einsum("ab,wab->w", rho, projectors).real
            u = basis.orbitals
            rho_x = np.einsum("xa,ab,xb->x", u, rho.real, u) / dx
        if densities:
            out["density"] = rho_x
        for name, ref in references.items():
            out[f"p:{name}"] = float(abs(np.vdot(_coefficients(ref), c)) ** 2)
        return out

    return observe
