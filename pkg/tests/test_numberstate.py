import numpy as np
import pytest
from hypothesis import given, strategies as st

from triplewell.discretization import WELLS, PotentialSpec
from triplewell.errors import ConfigurationError, RepresentationError
from triplewell.manybody import build_basis
from triplewell.numberstate import (
    ModeClass, NumberStateBuilder, NumberStateLabel, classify_mode, default_labels, fermion_sum,
    find_resonances, onsite_energy_scan,
)
from triplewell.observables import well_populations
from triplewell.single_particle import solve_spectrum

N_SUB = 13


@pytest.fixture(scope="module")
def builder(working_depth):
    return NumberStateBuilder(working_depth, 0.0, N_SUB)


@pytest.fixture(scope="module")
def tilted(working_depth):
    return NumberStateBuilder(working_depth, 0.1, N_SUB)


counts3 = st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))


@given(counts3, st.one_of(st.integers(0, 9), st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4))))
def test_label_text_round_trip(counts, tag):
    if isinstance(tag, tuple):
        tag = tuple(e if c else 0 for c, e in zip(counts, tag))
        label = NumberStateLabel(counts, None, tag)
    else:
        label = NumberStateLabel(counts, tag)
    assert NumberStateLabel.parse(str(label)) == label


def test_label_parsing_variants_and_errors():
    assert NumberStateLabel.parse("3,0,0") == NumberStateLabel((3, 0, 0), 0)
    assert NumberStateLabel.parse(" |2,1,0>_4 ").index == 4
    assert NumberStateLabel.parse("|1,1,1>[1,0,1]").excitation == (1, 0, 1)
    for bad in ["|3,0>", "|a,b,c>", "|1,0,0>[0,1,0]", "|3,0,0>_x"]:
        with pytest.raises(ConfigurationError):
            NumberStateLabel.parse(bad)


def test_mode_classes():
    cls = {s: classify_mode(NumberStateLabel.parse(s)) for s in ["1,1,1", "2,1,0", "0,3,0", "2,2,0", "4,0,0"]}
    assert cls == {"1,1,1": ModeClass.SINGLE, "2,1,0": ModeClass.PAIR, "0,3,0": ModeClass.TRIPLE,
                   "2,2,0": ModeClass.DOUBLE_PAIR, "4,0,0": ModeClass.QUAD}


def test_noninteracting_energies_are_level_sums(builder):
    eps = [s.energy for s in builder.solve_subset_states(1, "M", 0.0, 3)]
    assert builder.energy(NumberStateLabel.parse("|3,0,0>_0"), 0.0) == pytest.approx(3 * eps[0], abs=1e-10)
    assert builder.energy(NumberStateLabel.parse("|2,1,0>[0,1,0]"), 0.0) == pytest.approx(
        2 * eps[0] + eps[1], abs=1e-10)
    # hard walls make the untilted wells identical
    for w in WELLS:
        assert builder.solve_subset_states(1, w, 0.0, 1)[0].energy == pytest.approx(eps[0], abs=1e-12)


def test_index_order_is_energy_order(builder):
    table = builder.excitations((2, 1, 0), 1.0)
    energies = [e for e, _ in table]
    assert energies == sorted(energies)
    for i, (e, exc) in enumerate(table[:5]):
        assert builder.resolve(NumberStateLabel((2, 1, 0), i), 1.0) == (i, exc, e)


def test_rows_versus_coupling(builder):
    labels = [NumberStateLabel.parse(s) for s in ["|1,1,1>_0", "|2,1,0>_0", "|3,0,0>_0"]]
    table = onsite_energy_scan(builder, labels, np.linspace(0, 8, 9))
    single, pair, triple = (table.row(l, builder).energies for l in labels)
    np.testing.assert_allclose(single, single[0], atol=1e-12)
    assert np.all(np.diff(pair) > 0) and np.all(np.diff(triple) > 0)
    assert np.all(np.diff(triple) > np.diff(pair))  # three pairs interact rather than one
    with pytest.raises(ConfigurationError):
        onsite_energy_scan(builder, labels, [1.0, 0.0])


@pytest.mark.parametrize("counts,exc", [((3, 0, 0), (0, 0, 0)), ((2, 1, 0), (0, 0, 0)),
                                        ((2, 1, 0), (1, 0, 0)), ((0, 3, 0), (0, 2, 0))])
def test_hard_core_limit_matches_fermion_sums(builder, counts, exc):
    label = NumberStateLabel(counts, None, exc)
    assert builder.energy(label, 1e7) == pytest.approx(fermion_sum(builder, counts, exc), abs=1e-4)


def test_fermion_ordering_of_outer_well_states(builder):
    base = {c: fermion_sum(builder, c) for c in [(3, 0, 0), (2, 1, 0), (1, 1, 1)]}
    g0 = {c: builder.energy(NumberStateLabel(c, 0), 0.0) for c in base}
    ef = {c: base[c] - g0[c] for c in base}
    assert ef[(3, 0, 0)] > ef[(2, 1, 0)] > ef[(1, 1, 1)] == pytest.approx(0.0, abs=1e-12)


def test_embedded_number_states_are_orthonormal(builder):
    basis = build_basis(3, grid=builder.full_grid)
    labels = ["|3,0,0>_0", "|0,3,0>_0", "|2,1,0>_0", "|2,1,0>[0,1,0]", "|1,1,1>_0", "|1,1,1>[1,0,1]"]
    states = np.array([builder.assemble(NumberStateLabel.parse(s), 2.0, basis).coefficients for s in labels])
    np.testing.assert_allclose(states.conj() @ states.T, np.eye(len(labels)), atol=1e-8)


def test_embedded_state_sits_in_its_wells(builder):
    basis = build_basis(3, grid=builder.full_grid)
    psi = builder.assemble(NumberStateLabel.parse("|2,1,0>_0"), 3.0, basis)
    np.testing.assert_allclose(well_populations(psi), [2, 1, 0], atol=1e-10)


def test_truncated_mode_basis_reports_leakage(builder, working_depth):
    spec = solve_spectrum(builder.full_grid, PotentialSpec(working_depth), 3)
    basis = build_basis(3, spectrum=spec)
    with pytest.raises(RepresentationError):
        builder.assemble(NumberStateLabel.parse("|2,1,0>[0,1,0]"), 4.0, basis)


def test_default_labels_cover_lowest_composites(builder):
    labels = {str(l) for l in default_labels(builder)}
    assert {"|3,0,0>[0,0,0]", "|1,1,1>[0,0,0]", "|2,1,0>[0,1,0]"} <= labels
    assert all(NumberStateLabel.parse(l).n_bosons == 3 for l in labels)


def test_tilt_splits_single_occupation_crossings(tilted):
    # |3,0,0> meets |2,1,0>[0,1,0] and |2,0,1>[0,0,1] at different couplings
    init = NumberStateLabel.parse("|3,0,0>_0")
    partners = [NumberStateLabel.parse("|2,1,0>[0,1,0]"), NumberStateLabel.parse("|2,0,1>[0,0,1]")]
    table = onsite_energy_scan(tilted, [init, *partners], np.linspace(0, 12, 25))
    found = find_resonances(table, tilted, init, partners)
    (a,), (b,) = found[partners[0]], found[partners[1]]
    assert a.g_star < b.g_star
    for hit in (a, b):
        assert abs(tilted.energy(init, hit.g_star) - tilted.energy(hit.candidate, hit.g_star)) < 1e-8
        assert hit.slope > 0 and hit.window_width > 0
