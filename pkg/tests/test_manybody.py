import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.sparse.linalg import eigsh

from triplewell.discretization import PotentialSpec, aligned_full_grid, one_body_hamiltonian
from triplewell.errors import CapacityError, ConfigurationError
from triplewell.manybody import (
    ManyBodyState, assemble_hamiltonian, basis_dimension, build_basis, effective_coupling_1d,
    lieb_liniger_gamma, rescaled_coupling,
)
from triplewell.single_particle import solve_spectrum

TINY = aligned_full_grid(3)  # 11 sites


def _symmetrizer(basis):
    """Isometry from the occupation basis into the M^N first-quantized tensor space."""
    m, n = basis.n_orbitals, basis.n_bosons
    s = np.zeros((m**n, basis.dimension))
    for j, cfg in enumerate(basis.configs):
        perms = set(itertools.permutations(cfg))
        for p in perms:
            s[np.ravel_multi_index(p, (m,) * n), j] = 1.0 / math.sqrt(len(perms))
    return s


def _first_quantized(h1, contact, n):
    """N-particle tensor-product Hamiltonian with pairwise diagonal contact ``contact[x]``."""
    m = h1.shape[0]
    eye = np.eye(m)
    total = np.zeros((m**n, m**n))
    for k in range(n):
        factors = [eye] * n
        factors[k] = h1
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        total += term
    idx = np.array(list(itertools.product(range(m), repeat=n)))
    for a, b in itertools.combinations(range(n), 2):
        same = idx[:, a] == idx[:, b]
        total[np.diag_indices_from(total)] += np.where(same, contact[idx[:, a]], 0.0)
    return total


@given(st.integers(1, 4), st.integers(1, 12))
def test_dimension_is_multiset_count(n, m):
    grid = aligned_full_grid(8)
    spec = solve_spectrum(grid, PotentialSpec(4.0), m)
    assert build_basis(n, spectrum=spec).dimension == basis_dimension(n, m) == math.comb(n + m - 1, n)


@given(st.lists(st.integers(0, 10), min_size=3, max_size=3))
def test_index_round_trip(cfg):
    basis = build_basis(3, grid=TINY)
    j = int(basis.index(cfg)[0])
    assert sorted(cfg) == basis.configs[j].tolist()
    occ = np.bincount(cfg, minlength=TINY.n_points)
    assert basis.index_of_occupation(occ) == j
    np.testing.assert_array_equal(basis.occupation(j), occ)


@pytest.mark.parametrize("n", [2, 3])
def test_grid_backend_matches_first_quantized_oracle(n):
    g, pot = 1.7, PotentialSpec(6.0, 0.05)
    basis = build_basis(n, grid=TINY)
    h = assemble_hamiltonian(basis, pot, g).matrix.toarray()
    h1 = one_body_hamiltonian(TINY, pot)
    oracle = _first_quantized(h1, np.full(TINY.n_points, g / TINY.spacing), n)
    s = _symmetrizer(basis)
    np.testing.assert_allclose(s.T @ oracle @ s, h, atol=1e-10)


def test_mode_backend_matches_first_quantized_oracle():
    g, pot = 2.3, PotentialSpec(6.0)
    spec = solve_spectrum(TINY, pot, 5)
    basis = build_basis(2, spectrum=spec)
    h = assemble_hamiltonian(basis, pot, g).matrix.toarray()
    u = spec.orbitals
    h1 = u.T @ one_body_hamiltonian(TINY, pot) @ u
    # contact in the orbital basis: g/dx sum_x u_a u_b u_c u_d
    full = np.kron(h1, np.eye(5)) + np.kron(np.eye(5), h1)
    uu = np.einsum("xa,xb->xab", u, u).reshape(TINY.n_points, 25)
    full += (g / TINY.spacing) * uu.T @ uu
    s = _symmetrizer(basis)
    np.testing.assert_allclose(s.T @ full @ s, h, atol=1e-10)


def test_noninteracting_levels_are_single_particle_sums(lattice):
    grid = aligned_full_grid(9)
    e = solve_spectrum(grid, lattice, 4).energies
    basis = build_basis(3, grid=grid)
    vals = np.sort(eigsh(assemble_hamiltonian(basis, lattice, 0.0).matrix, k=4, which="SA")[0])
    expected = sorted(sum(c) for c in itertools.combinations_with_replacement(e, 3))[:4]
    np.testing.assert_allclose(vals, expected, atol=1e-9)


@pytest.mark.parametrize("backend", ["grid", "mode"])
def test_hamiltonian_is_real_symmetric(backend, lattice):
    grid = aligned_full_grid(5)
    basis = (build_basis(3, grid=grid) if backend == "grid"
             else build_basis(3, spectrum=solve_spectrum(grid, lattice, 8)))
    h = assemble_hamiltonian(basis, lattice, 3.0).matrix
    assert abs(h - h.T).max() < 1e-12
    assert h.dtype == np.float64


def test_complete_mode_basis_reproduces_grid_spectrum(lattice):
    grid = aligned_full_grid(5)
    spec = solve_spectrum(grid, lattice, grid.n_points)
    a = np.linalg.eigvalsh(assemble_hamiltonian(build_basis(2, grid=grid), lattice, 4.0).matrix.toarray())
    b = np.linalg.eigvalsh(assemble_hamiltonian(build_basis(2, spectrum=spec), lattice, 4.0).matrix.toarray())
    np.testing.assert_allclose(a, b, atol=1e-8)


@pytest.mark.parametrize("n", [2, 3])
def test_hard_core_limit_is_free_fermions(n, lattice):
    # on a nearest-neighbour lattice infinite repulsion maps exactly onto free fermions
    grid = aligned_full_grid(5)
    e = solve_spectrum(grid, lattice, n).energies
    h = assemble_hamiltonian(build_basis(n, grid=grid), lattice, 1e7).matrix
    ground = eigsh(h, k=1, which="SA")[0][0]
    assert abs(ground - e.sum()) < 1e-4


def test_capacity_and_configuration_errors(lattice):
    with pytest.raises(CapacityError):
        build_basis(4, grid=aligned_full_grid(60), max_dimension=10_000)
    with pytest.raises(ConfigurationError):
        build_basis(0, grid=TINY)
    with pytest.raises(ConfigurationError):
        assemble_hamiltonian(build_basis(2, grid=TINY), lattice, -1.0)
    with pytest.raises(ConfigurationError):
        build_basis(2, spectrum=solve_spectrum(TINY, lattice, 3), n_modes=5)


def test_state_helpers(lattice):
    basis = build_basis(2, grid=TINY)
    h = assemble_hamiltonian(basis, lattice, 1.0)
    c = np.zeros(basis.dimension, complex)
    c[0] = 2.0
    st_ = ManyBodyState(basis, c).normalized()
    assert abs(st_.norm() - 1) < 1e-15
    assert abs(st_.energy(h) - h.matrix[0, 0]) < 1e-12
    assert abs(st_.overlap(st_) - 1) < 1e-15


def test_effective_coupling():
    # weak scattering: 2 a0 / a_perp^2 with unit constants
    assert abs(effective_coupling_1d(1e-6, 1.0) / 2e-6 - 1) < 1e-5
    # confinement-induced enhancement
    assert effective_coupling_1d(0.5, 1.0) > 2 * 0.5
    with pytest.raises(ConfigurationError):
        effective_coupling_1d(math.sqrt(2) / 1.4603545088095868, 1.0)
    assert rescaled_coupling(1.0, 2.0) == 1.0


def test_lieb_liniger_gamma():
    assert lieb_liniger_gamma(3.0, 3, 0.5) == 2.0
    with pytest.raises(ConfigurationError):
        lieb_liniger_gamma(1.0, 3, 0.0)
