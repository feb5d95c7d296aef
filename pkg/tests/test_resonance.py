import numpy as np
import pytest

from triplewell.discretization import aligned_full_grid
from triplewell.errors import ScenarioError
from triplewell.manybody import build_basis
from triplewell.numberstate import NumberStateBuilder, NumberStateLabel, find_resonances, onsite_energy_scan
from triplewell.resonance import DressedSpectrum, FullModelProbe, _group, refine_full_resonance

INIT = NumberStateLabel.parse("|3,0,0>_0")
PARTNER = NumberStateLabel.parse("|2,1,0>[0,1,0]")


def test_near_degenerate_levels_are_merged():
    e, wa, wb = _group(np.array([1.0, 2.0, 1.0 + 1e-7, 3.0]), np.array([0.1, 0.2, 0.3, 0.4]),
                       np.array([0.0, 0.5, 0.5, 0.0]), 1e-5)
    np.testing.assert_allclose(e, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(wa, [0.4, 0.2, 0.4])
    np.testing.assert_allclose(wb, [0.5, 0.5, 0.0])


def test_dressed_spectrum_quantities():
    d = DressedSpectrum(1.0, np.array([0.0, 0.1, 0.4]), np.array([0.5, 0.45, 0.05]),
                        np.array([0.4, 0.5, 0.1]), 0.05)
    assert d.initial_level == 0 and d.partner_level == 1
    assert d.detuning() == pytest.approx(-0.1)
    assert d.gap() == pytest.approx(0.1)
    assert d.participation() == pytest.approx(0.25 + 0.2025 + 0.0025)
    alone = DressedSpectrum(1.0, np.array([0.0, 0.1]), np.array([0.9, 0.1]), np.array([0.01, 0.0]), 0.02, 0.5)
    assert alone.detuning() == pytest.approx(-0.48)


@pytest.fixture(scope="module")
def probe(working_depth):
    builder = NumberStateBuilder(working_depth, 0.0, 9)
    return builder, FullModelProbe(builder, build_basis(3, grid=aligned_full_grid(9)), INIT, PARTNER)


def test_full_model_resonance_near_number_state_crossing(probe):
    builder, pr = probe
    table = onsite_energy_scan(builder, [INIT, PARTNER], np.linspace(0, 10, 21))
    (hit,) = find_resonances(table, builder, INIT, [PARTNER])[PARTNER]
    full = refine_full_resonance(pr, hit.g_star, hit.slope)
    # dressing shifts the resonance by a fraction of its width in the number-state picture
    assert abs(full.g_star - hit.g_star) < 0.2
    lo, hi = full.bracket
    assert lo < full.g_star < hi
    assert full.gap > 0 and full.period == pytest.approx(2 * np.pi / full.gap)
    # at resonance the initial state is split over two dressed levels
    assert full.participation < 0.6
    far = pr(hit.g_star + 3.0)
    assert far.participation() > full.participation


def test_no_bracket_raises_scenario_error(probe):
    _, pr = probe
    with pytest.raises(ScenarioError):
        refine_full_resonance(pr, 0.5, 1.0, g_range=(0.1, 1.0), max_bracket_steps=2)
