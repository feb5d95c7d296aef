"""Symmetrized N-boson bases and sparse many-body Hamiltonians.

Two single-particle representations share one interface:

* ``grid``: every interior grid point is an orbital; the contact interaction
  is diagonal with weight ``g / dx`` per pair on a site.
* ``mode``: the lowest eigenvectors of a one-body Hamiltonian are the
  orbitals; two-body elements are grid quadratures of four mode functions,
  i.e. the ``grid`` interaction projected onto the mode subspace.

Configurations are stored as nondecreasing orbital tuples enumerated in
lexicographic order, which is reverse-lexicographic order on occupation
vectors: index 0 is ``(N, 0, ..., 0)``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import zeta

from .discretization import GridSpec, PotentialSpec, evaluate_potential, kinetic_fd, one_body_hamiltonian
from .errors import CapacityError, ConfigurationError

log = logging.getLogger(__name__)

DEFAULT_MAX_DIMENSION = 2_000_000
ZETA_HALF = abs(float(zeta(0.5)))


def basis_dimension(n_bosons: int, n_orbitals: int) -> int:
    return math.comb(n_bosons + n_orbitals - 1, n_bosons)


class SymmetrizedBasis:
    """Occupation-number basis of ``n_bosons`` over ``n_orbitals`` orbitals.

    ``orbitals`` holds the orbital functions as grid-normalized column vectors
    (``sum(u**2) == 1``) on ``grid``; it is ``None`` for the grid backend where
    the orbitals are the grid points themselves.
    """

    def __init__(self, n_bosons, grid, orbitals=None, orbital_energies=None,
                 max_dimension=DEFAULT_MAX_DIMENSION):
        if n_bosons < 1:
            raise ConfigurationError(f"need at least one boson, got {n_bosons}")
        self.n_bosons = int(n_bosons)
        self.grid = grid
        self.orbitals = orbitals
        self.orbital_energies = orbital_energies
        self.n_orbitals = grid.n_points if orbitals is None else orbitals.shape[1]
        dim = basis_dimension(self.n_bosons, self.n_orbitals)
        if dim > max_dimension:
            raise CapacityError(
                f"basis dimension {dim} for N={n_bosons}, M={self.n_orbitals} "
                f"exceeds the budget of {max_dimension}"
            )
        self.configs = _enumerate(self.n_bosons, self.n_orbitals)
        self._keys = self._encode(self.configs)
        log.debug("basis N=%d M=%d dimension=%d", n_bosons, self.n_orbitals, dim)

    @property
    def backend(self) -> str:
        return "grid" if self.orbitals is None else "mode"

    @property
    def dimension(self) -> int:
        return len(self.configs)

    def __len__(self):
        return self.dimension

    def _encode(self, configs):
        weights = self.n_orbitals ** np.arange(configs.shape[1] - 1, -1, -1, dtype=np.int64)
        return configs.astype(np.int64) @ weights

    def index(self, configs) -> np.ndarray:
        """Indices of sorted orbital tuples (rows of ``configs``)."""
        configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
        return np.searchsorted(self._keys, self._encode(np.sort(configs, axis=1)))

    def index_of_occupation(self, occupation) -> int:
        occupation = np.asarray(occupation)
        if occupation.sum() != self.n_bosons or len(occupation) != self.n_orbitals:
            raise ConfigurationError(f"occupation {occupation.tolist()} not in basis")
        return int(self.index(np.repeat(np.arange(self.n_orbitals), occupation))[0])

    def occupation(self, index: int) -> np.ndarray:
        return np.bincount(self.configs[index], minlength=self.n_orbitals)

    def occupations(self) -> np.ndarray:
        occ = np.zeros((self.dimension, self.n_orbitals), dtype=np.int64)
        rows = np.repeat(np.arange(self.dimension), self.n_bosons)
        np.add.at(occ, (rows, self.configs.ravel()), 1)
        return occ

    def orbital_matrix(self) -> np.ndarray:
        """Orbital vectors as columns on ``grid`` (identity for the grid backend)."""
        if self.orbitals is None:
            return np.eye(self.grid.n_points)
        return self.orbitals


def _enumerate(n, m) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations_with_replacement(range(m), n)),
        dtype=np.int64,
    )
    return flat.reshape(-1, n)


def build_basis(n_bosons, grid=None, spectrum=None, n_modes=None,
                max_dimension=DEFAULT_MAX_DIMENSION) -> SymmetrizedBasis:
    """Grid backend when ``spectrum`` is omitted, mode backend otherwise.

    ``spectrum`` is any object with ``grid``, ``energies`` and ``orbitals``
    attributes, e.g. :class:`triplewell.single_particle.SingleParticleSpectrum`.
    """
    if spectrum is None:
        if grid is None:
            raise ConfigurationError("grid backend needs a grid")
        return SymmetrizedBasis(n_bosons, grid, max_dimension=max_dimension)
    available = spectrum.orbitals.shape[1]
    n_modes = available if n_modes is None else n_modes
    if n_modes > available:
        raise ConfigurationError(f"requested {n_modes} modes, only {available} available")
    return SymmetrizedBasis(
        n_bosons, spectrum.grid, spectrum.orbitals[:, :n_modes].copy(),
        np.asarray(spectrum.energies[:n_modes]), max_dimension=max_dimension,
    )


@dataclass
class ManyBodyOperator:
    basis: SymmetrizedBasis
    matrix: sp.csr_matrix
    coupling: float = 0.0
    potential: PotentialSpec | None = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, vector):
        return self.matrix @ vector

    def expectation(self, vector) -> float:
        return float(np.vdot(vector, self.matrix @ vector).real)

    def to_triplets(self, path) -> None:
        """Write ``row col value`` lines (1-based, upper triangle) for debugging."""
        upper = sp.triu(self.matrix).tocoo()
        with open(path, "w") as fh:
            fh.write(f"# dimension {self.shape[0]} nnz {self.nnz}\n")
            for r, c, v in zip(upper.row, upper.col, upper.data):
                fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


@dataclass
class ManyBodyState:
    basis: SymmetrizedBasis
    coefficients: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "ManyBodyState":
        return ManyBodyState(self.basis, self.coefficients / self.norm(), self.time, dict(self.meta))

    def energy(self, hamiltonian: ManyBodyOperator) -> float:
        c = self.coefficients
        return hamiltonian.expectation(c) / float(np.vdot(c, c).real)

    def overlap(self, other: "ManyBodyState") -> complex:
        return complex(np.vdot(self.coefficients, other.coefficients))


def _counts_at(configs, col):
    return (configs == configs[:, col:col + 1]).sum(axis=1)


def _first_occurrence(configs, col):
    if col == 0:
        return np.ones(len(configs), dtype=bool)
    return configs[:, col] != configs[:, col - 1]


def one_body_matrix(basis: SymmetrizedBasis, h: np.ndarray) -> sp.csr_matrix:
    """Second-quantized sum_ab h_ab a+_a a_b on ``basis`` (h real symmetric)."""
    configs = basis.configs
    dim, n = configs.shape
    rows, cols, vals = [np.arange(dim)], [np.arange(dim)], []
    diag = np.zeros(dim)
    hd = np.diag(h)
    for j in range(n):
        diag += hd[configs[:, j]]
    vals.append(diag)
    nz_a, nz_b = np.nonzero(h - np.diag(hd))
    by_source = {}
    for a, b in zip(nz_a, nz_b):
        by_source.setdefault(b, []).append(a)
    for j in range(n):
        first = _first_occurrence(configs, j)
        n_b = _counts_at(configs, j)
        src = np.nonzero(first)[0]
        for b, targets in by_source.items():
            sel = src[configs[src, j] == b]
            if sel.size == 0:
                continue
            for a in targets:
                moved = configs[sel].copy()
                n_a = (moved == a).sum(axis=1)
                moved[:, j] = a
                rows.append(basis.index(moved))
                cols.append(sel)
                vals.append(h[a, b] * np.sqrt(n_b[sel] * (n_a + 1.0)))
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(dim, dim))
    return mat.tocsr()


def _tridiagonal_one_body(basis: SymmetrizedBasis, diag: np.ndarray, off: float) -> sp.csr_matrix:
    """Fast path for nearest-neighbour hopping with constant amplitude ``off``."""
    configs = basis.configs
    dim, n = configs.shape
    m = basis.n_orbitals
    rows, cols, vals = [np.arange(dim)], [np.arange(dim)], [diag[configs].sum(axis=1)]
    for j in range(n):
        first = _first_occurrence(configs, j)
        n_b = _counts_at(configs, j)
        for step in (-1, 1):
            b = configs[:, j]
            ok = first & (b + step >= 0) & (b + step < m)
            sel = np.nonzero(ok)[0]
            moved = configs[sel].copy()
            a = moved[:, j] + step
            n_a = (moved == a[:, None]).sum(axis=1)
            moved[:, j] = a
            rows.append(basis.index(moved))
            cols.append(sel)
            vals.append(off * np.sqrt(n_b[sel] * (n_a + 1.0)))
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(dim, dim))
    return mat.tocsr()


def pair_list(m: int) -> np.ndarray:
    return np.array([(a, b) for a in range(m) for b in range(a, m)], dtype=np.int64).reshape(-1, 2)


def two_body_elements(orbitals: np.ndarray, dx: float) -> np.ndarray:
    """Contact elements int phi_a phi_b phi_c phi_d dx over unordered pairs.

    Returns the (P, P) matrix indexed by :func:`pair_list` pairs, without the
    coupling constant.
    """
    pairs = pair_list(orbitals.shape[1])
    prod = orbitals[:, pairs[:, 0]] * orbitals[:, pairs[:, 1]]
    return (prod.T @ prod) / dx


def two_body_matrix(basis: SymmetrizedBasis, elements: np.ndarray) -> sp.csr_matrix:
    """(1/2) sum V_abcd a+_a a+_b a_d a_c for pair-indexed ``elements``.

    Grouped by the (N-2)-boson remainder r: each remainder contributes a dense
    block between all configurations r + pair.
    """
    n, m = basis.n_bosons, basis.n_orbitals
    dim = basis.dimension
    if n < 2:
        return sp.csr_matrix((dim, dim))
    pairs = pair_list(m)
    weight = np.where(pairs[:, 0] == pairs[:, 1], 1.0, 2.0)
    rest = _enumerate(n - 2, m)
    out = sp.csr_matrix((dim, dim))
    chunk = max(1, int(4_000_000 // max(1, len(pairs) ** 2)))
    for start in range(0, len(rest), chunk):
        block = rest[start:start + chunk]
        r_rows, c_rows, v_rows = [], [], []
        for r in block:
            occ_r = np.bincount(r, minlength=m) if r.size else np.zeros(m, dtype=np.int64)
            beta = np.sqrt((occ_r[pairs[:, 0]] + 1.0)
                           * (occ_r[pairs[:, 1]] + 1.0 + (pairs[:, 0] == pairs[:, 1])))
            full = np.concatenate([np.broadcast_to(r, (len(pairs), r.size)), pairs], axis=1)
            idx = basis.index(full)
            wb = weight * beta
            vals = 0.5 * wb[:, None] * elements * wb[None, :]
            r_rows.append(np.repeat(idx, len(idx)))
            c_rows.append(np.tile(idx, len(idx)))
            v_rows.append(vals.ravel())
        out = out + sp.coo_matrix(
            (np.concatenate(v_rows), (np.concatenate(r_rows), np.concatenate(c_rows))),
            shape=(dim, dim)).tocsr()
    return out


def assemble_hamiltonian(basis: SymmetrizedBasis, potential: PotentialSpec, g: float,
                         scheme: str = "fd") -> ManyBodyOperator:
    """Many-body Hamiltonian of kinetic + trap + contact interaction.

    ``scheme`` selects the kinetic discretization used to build the one-body
    matrix on ``basis.grid`` (``fd`` or ``dvr``).
    """
    if g < 0:
        raise ConfigurationError(f"only repulsive couplings are supported, got g={g}")
    grid = basis.grid
    if not grid.matches(potential.domain):
        raise ConfigurationError(
            f"basis grid [{grid.x_min:.6g}, {grid.x_max:.6g}] does not match {potential.domain.name}"
        )
    dx = grid.spacing
    if basis.backend == "grid":
        if scheme == "fd":
            d, e = kinetic_fd(grid)
            mat = _tridiagonal_one_body(basis, d + evaluate_potential(potential, grid), e[0])
        else:
            mat = one_body_matrix(basis, one_body_hamiltonian(grid, potential, scheme))
        if g and basis.n_bosons > 1:
            occ = basis.occupations()
            mat = mat + sp.diags((g / dx) * 0.5 * (occ * (occ - 1)).sum(axis=1))
    else:
        u = basis.orbitals
        h = u.T @ one_body_hamiltonian(grid, potential, scheme) @ u
        h = 0.5 * (h + h.T)
        h[np.abs(h) < 1e-13 * max(1.0, np.abs(h).max())] = 0.0
        mat = one_body_matrix(basis, h)
        if g and basis.n_bosons > 1:
            mat = mat + g * two_body_matrix(basis, two_body_elements(u, dx))
    mat = (0.5 * (mat + mat.T)).tocsr()
    mat.sum_duplicates()
    log.info("assembled %s hamiltonian: dim=%d nnz=%d g=%g", basis.backend, mat.shape[0], mat.nnz, g)
    return ManyBodyOperator(basis, mat, g, potential)


def effective_coupling_1d(a0: float, a_perp: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    """Effective 1D contact strength of a transversely confined 3D gas."""
    denominator = 1.0 - ZETA_HALF * a0 / (math.sqrt(2.0) * a_perp)
    if abs(denominator) < 1e-6:
        raise ConfigurationError(
            f"a0/a_perp = {a0 / a_perp:.8g} sits on the confinement-induced resonance"
        )
    return 2.0 * hbar**2 * a0 / (mass * a_perp**2) / denominator


def rescaled_coupling(g_1d: float, kappa: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    """Dimensionless coupling in recoil units, 2 g_1D M / (hbar^2 kappa)."""
    return 2.0 * g_1d * mass / (hbar**2 * kappa)


def lieb_liniger_gamma(g: float, n_bosons: int, density_at_point: float) -> float:
    """Local Lieb-Liniger parameter g / (N rho).

    ``density_at_point`` is the one-body density normalized to one particle,
    so ``N * rho`` is the local linear density.
    """
    if density_at_point <= 0:
        raise ConfigurationError("Lieb-Liniger parameter needs a positive density")
    return g / (n_bosons * density_at_point)
