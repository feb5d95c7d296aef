import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from triplewell.discretization import Domain, PotentialSpec, aligned_full_grid, sub_grid_of
from triplewell.manybody import ManyBodyState, assemble_hamiltonian, build_basis
from triplewell.numberstate import NumberStateBuilder, NumberStateLabel
from triplewell.observables import (
    ObservableSeries, count_nodes_in_well, density_matrix, make_observer, number_state_overlaps,
    one_body_density, orbital_occupations, well_populations, well_weights,
)
from triplewell.propagate import evolve, prepare_localized_state
from triplewell.single_particle import solve_spectrum

GRID = aligned_full_grid(8)


def _random(basis, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(basis.dimension) + 1j * rng.standard_normal(basis.dimension)
    return ManyBodyState(basis, c / np.linalg.norm(c))


def test_well_weights_partition_the_grid():
    w = well_weights(GRID)
    np.testing.assert_allclose(w.sum(axis=0), 1.0)
    # the two shared wall sites are split between neighbours
    assert np.count_nonzero(w == 0.5) == 4
    np.testing.assert_array_equal(w[0], w[2][::-1])
    np.testing.assert_array_equal(w[1], w[1][::-1])


@given(st.integers(0, 500))
def test_density_matrix_is_hermitian_with_trace_n(seed):
    basis = build_basis(2, grid=aligned_full_grid(3))
    psi = _random(basis, seed)
    rho = density_matrix(psi)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-13)
    assert np.trace(rho).real == pytest.approx(2.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    np.testing.assert_allclose(orbital_occupations(psi), np.diag(rho).real, atol=1e-13)


@given(st.integers(0, 500))
def test_populations_and_density_integrate_to_n(seed):
    basis = build_basis(3, grid=aligned_full_grid(3))
    psi = _random(basis, seed)
    assert well_populations(psi).sum() == pytest.approx(3.0)
    grid = basis.grid
    assert one_body_density(psi).sum() * grid.spacing == pytest.approx(3.0)


def test_mode_and_grid_backends_give_the_same_observables(working_depth):
    grid = aligned_full_grid(3)
    spec = solve_spectrum(grid, PotentialSpec(working_depth), grid.n_points)
    mode = build_basis(2, spectrum=spec)
    psi = _random(mode, 4)
    # first-quantized symmetric amplitude: c on the diagonal, c/sqrt(2) off it
    m = mode.n_orbitals
    amp = np.zeros((m, m), complex)
    for c, (a, b) in zip(psi.coefficients, mode.configs):
        if a == b:
            amp[a, a] = c
        else:
            amp[a, b] = amp[b, a] = c / np.sqrt(2)
    u = spec.orbitals
    x_amp = u @ amp @ u.T
    gbasis = build_basis(2, grid=grid)
    coeffs = np.array([x_amp[a, b] * (np.sqrt(2) if a != b else 1.0) for a, b in gbasis.configs])
    gstate = ManyBodyState(gbasis, coeffs)
    assert gstate.norm() == pytest.approx(1.0)
    np.testing.assert_allclose(well_populations(gstate), well_populations(psi), atol=1e-10)
    np.testing.assert_allclose(one_body_density(gstate), one_body_density(psi), atol=1e-10)


def test_mirror_symmetric_state_has_equal_outer_populations(working_depth):
    basis = build_basis(3, grid=GRID)
    psi = prepare_localized_state("M", 3, 4.0, basis, depth=working_depth)
    h = assemble_hamiltonian(basis, PotentialSpec(working_depth), 4.0)
    traj = evolve(psi, h, 200.0, 50.0, observer=make_observer(basis), method="chebyshev")
    pops = traj.observables["populations"]
    np.testing.assert_allclose(pops[:, 0], pops[:, 2], atol=1e-10)
    np.testing.assert_allclose(pops.sum(axis=1), 3.0, atol=1e-10)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_nodes_of_sub_well_eigenfunctions(level, working_depth):
    full = aligned_full_grid(41)
    for well in "LMR":
        sub, rows = sub_grid_of(full, well)
        spec = solve_spectrum(sub, PotentialSpec(working_depth, 0.0, Domain.for_well(well)), 3)
        rho = np.zeros(full.n_points)
        rho[rows] = spec.orbitals[:, level] ** 2 / full.spacing
        assert count_nodes_in_well(rho, full, well) == (level, False)


def test_empty_well_reports_low_population():
    rho = np.zeros(GRID.n_points)
    assert count_nodes_in_well(rho, GRID, "L") == (0, True)


def test_shallow_dips_are_not_nodes():
    x = GRID.points
    rho = 1.0 + 0.5 * np.cos(6 * x) ** 2
    assert count_nodes_in_well(rho, GRID, "M").count == 0


def test_number_state_overlaps_and_series_output(tmp_path, working_depth):
    basis = build_basis(3, grid=GRID)
    builder = NumberStateBuilder(working_depth, 0.0, 8)
    refs = {s: builder.assemble(NumberStateLabel.parse(s), 1.0, basis) for s in ["|3,0,0>_0", "|2,1,0>_0"]}
    p = number_state_overlaps(refs["|3,0,0>_0"], refs)
    assert p["|3,0,0>_0"] == pytest.approx(1.0) and p["untracked"] == pytest.approx(0.0, abs=1e-12)

    h = assemble_hamiltonian(basis, PotentialSpec(working_depth), 1.0)
    traj = evolve(refs["|3,0,0>_0"], h, 10.0, 2.0, observer=make_observer(basis, refs), method="chebyshev")
    series = ObservableSeries.from_trajectory(traj, GRID.points, {"name": "t"})
    series.write_csv(tmp_path / "obs.csv", header=["demo"])
    lines = (tmp_path / "obs.csv").read_text().splitlines()
    assert lines[0] == "# demo"
    assert lines[1].split(",")[:4] == ["time", "n_L", "n_M", "n_R"]
    assert len(lines) == 2 + len(series.times)
    meta = json.loads((tmp_path / "obs.csv.json").read_text())
    assert meta["name"] == "t" and meta["method"] == "chebyshev"
    series.write_density_csv(tmp_path / "rho.csv", [0, len(series.times) - 1])
    rows = (tmp_path / "rho.csv").read_text().splitlines()
    assert len(rows) == 1 + GRID.n_points
