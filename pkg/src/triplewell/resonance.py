"""Resonances of the full triple-well Hamiltonian.

Number-state crossings ignore the virtual tunneling that dresses both states,
so the true resonance sits slightly away from the on-site energy crossing.
The coupling is first bracketed where the initial and partner number states
swap their dominant eigenstate, then tuned to minimize the participation
(sum of squared eigenstate weights) of the initial state, i.e. to where it
is most evenly shared among dressed levels.  The splitting of its two
dominant levels there sets the oscillation period.

Eigenvalues closer than ``DOUBLET_TOLERANCE`` are merged before weights are
compared: the mirror pairs ``|3,0,0>``/``|0,0,3>`` form parity doublets whose
splitting is far below any transfer gap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla
from scipy.optimize import minimize_scalar

from .discretization import PotentialSpec
from .errors import NumericalError, ScenarioError
from .manybody import SymmetrizedBasis, assemble_hamiltonian
from .numberstate import NumberStateBuilder, NumberStateLabel

log = logging.getLogger(__name__)

DOUBLET_TOLERANCE = 1e-5


@dataclass
class DressedSpectrum:
    """Eigenvalues near the initial energy, grouped, with both states' weights."""

    g: float
    energies: np.ndarray
    initial_weights: np.ndarray
    partner_weights: np.ndarray
    reference_energy: float
    partner_reference: float = np.nan

    @property
    def initial_level(self) -> int:
        return int(np.argmax(self.initial_weights))

    @property
    def partner_level(self) -> int:
        return int(np.argmax(self.partner_weights))

    def detuning(self) -> float:
        """Dressed energy of the initial state minus that of the partner.

        When one level dominates both states (typically because the partner
        lies outside the computed window) the diagonal energies are compared.
        """
        if self.initial_level == self.partner_level:
            return float(self.reference_energy - self.partner_reference)
        return float(self.energies[self.initial_level] - self.energies[self.partner_level])

    def participation(self) -> float:
        return float(np.sum(self.initial_weights ** 2))

    def gap(self) -> float:
        """Splitting of the two levels carrying most of the initial state."""
        order = np.argsort(self.initial_weights)[::-1]
        return float(abs(self.energies[order[0]] - self.energies[order[1]]))


def _group(values, weights_a, weights_b, tol):
    energies, wa, wb = [], [], []
    for j in np.argsort(values):
        if energies and values[j] - energies[-1] < tol:
            wa[-1] += weights_a[j]
            wb[-1] += weights_b[j]
        else:
            energies.append(values[j])
            wa.append(weights_a[j])
            wb.append(weights_b[j])
    return np.array(energies), np.array(wa), np.array(wb)


def dressed_spectrum(hamiltonian, initial, partner, k: int = 12, tol: float = DOUBLET_TOLERANCE) -> DressedSpectrum:
    a = np.asarray(initial.coefficients).real
    b = np.asarray(partner.coefficients).real
    e0 = hamiltonian.expectation(a) / float(a @ a)
    k = min(k, hamiltonian.shape[0] - 2)
    try:
        vals, vecs = sla.eigsh(hamiltonian.matrix, k=k, sigma=e0, v0=a)
    except (sla.ArpackNoConvergence, RuntimeError) as exc:
        raise NumericalError(f"shift-invert eigensolve near E={e0:.6g} failed: {exc}") from exc
    pa = (vecs.T @ a) ** 2
    pb = (vecs.T @ b) ** 2
    energies, wa, wb = _group(vals, pa, pb, tol)
    return DressedSpectrum(hamiltonian.coupling, energies, wa, wb, e0,
                           hamiltonian.expectation(b) / float(b @ b))


@dataclass
class FullResonance:
    initial: NumberStateLabel
    partner: NumberStateLabel
    g_star: float
    gap: float
    period: float
    participation: float
    bracket: tuple
    history: list = field(default_factory=list, repr=False)


class FullModelProbe:
    """Assembles the full Hamiltonian and both number states at a given coupling."""

    def __init__(self, builder: NumberStateBuilder, basis: SymmetrizedBasis, initial: NumberStateLabel,
                 partner: NumberStateLabel, k: int = 12):
        self.builder = builder
        self.basis = basis
        self.initial = initial
        self.partner = partner
        self.k = k
        self.potential = PotentialSpec(builder.depth, builder.tilt)
        self.cache = {}

    def __call__(self, g: float) -> DressedSpectrum:
        g = float(g)
        if g not in self.cache:
            h = assemble_hamiltonian(self.basis, self.potential, g, self.builder.scheme)
            a = self.builder.assemble(self.initial, g, self.basis)
            b = self.builder.assemble(self.partner, g, self.basis)
            self.cache[g] = dressed_spectrum(h, a, b, self.k)
            d = self.cache[g]
            log.debug("g=%.8g detuning=%.3e gap=%.3e", g, d.detuning(), d.gap())
        return self.cache[g]


def refine_full_resonance(probe: FullModelProbe, g_guess: float, slope: float,
                          g_range: tuple = (1e-3, 200.0), xtol: float = 1e-4,
                          max_bracket_steps: int = 12) -> FullResonance:
    """Coupling at which the initial state's dominant dressed level changes.

    ``slope`` is d(e_initial - e_partner)/dg from the number-state table and
    only guides the bracketing steps.
    """
    lo_g, hi_g = g_range
    if slope == 0:
        raise NumericalError("zero detuning slope; cannot bracket the resonance")
    g = float(np.clip(g_guess, lo_g, hi_g))
    d = probe(g)
    f = d.detuning()
    history = [(g, f, d.gap())]
    if f == 0.0:
        return _finish(probe, g, g, g, history, slope, xtol)
    bracket = None
    step_scale = 1.0
    for _ in range(max_bracket_steps):
        step = -f / slope * step_scale
        step = float(np.clip(step, -0.25 * max(g, 1.0), 0.25 * max(g, 1.0)))
        if abs(step) < xtol:
            step = np.sign(step or 1.0) * xtol * 4
        g_new = float(np.clip(g + step, lo_g, hi_g))
        if g_new == g:
            break
        d_new = probe(g_new)
        f_new = d_new.detuning()
        history.append((g_new, f_new, d_new.gap()))
        if f_new == 0.0:
            return _finish(probe, g_new, min(g, g_new), max(g, g_new), history, slope, xtol)
        if np.sign(f_new) != np.sign(f):
            bracket = (min(g, g_new), max(g, g_new))
            break
        if abs(f_new) >= abs(f):
            step_scale *= 2.0  # dressing bends the detuning; push further
        g, f = g_new, f_new
    if bracket is None:
        scanned = sorted(h[0] for h in history)
        raise ScenarioError(
            f"no dressed resonance between {probe.initial} and {probe.partner} found for g in "
            f"[{scanned[0]:.6g}, {scanned[-1]:.6g}]"
        )
    a, b = bracket
    fa = np.sign(probe(a).detuning())
    while b - a > xtol:
        mid = 0.5 * (a + b)
        fm = probe(mid).detuning()
        history.append((mid, fm, probe(mid).gap()))
        if fm == 0.0:
            a = b = mid
            break
        if np.sign(fm) == fa:
            a = mid
        else:
            b = mid
    return _finish(probe, 0.5 * (a + b), a, b, history, slope, xtol)


def _finish(probe, g_center, a, b, history, slope=None, xtol=1e-5):
    d = probe(g_center)
    width = max(b - a, 10 * xtol)
    if slope:
        width = max(width, 4 * d.gap() / abs(slope))
    lo, hi = max(1e-6, g_center - width), g_center + width

    def participation(g):
        value = probe(g).participation()
        history.append((float(g), probe(g).detuning(), probe(g).gap()))
        return value

    for _ in range(3):
        res = minimize_scalar(participation, bounds=(lo, hi), method="bounded", options={"xatol": xtol})
        g_star = float(res.x)
        if min(g_star - lo, hi - g_star) > 0.05 * (hi - lo) or lo <= 1e-6:
            break
        shift = 0.8 * (hi - lo)
        lo, hi = (max(1e-6, lo - shift), hi - shift) if g_star - lo < hi - g_star else (lo + shift, hi + shift)
    d = probe(g_star)
    gap = d.gap()
    if gap <= 0:
        raise NumericalError(f"vanishing resonance gap at g={g_star}")
    log.info("full-model resonance %s <-> %s at g=%.6f, gap %.3e", probe.initial, probe.partner, g_star, gap)
    return FullResonance(probe.initial, probe.partner, g_star, gap, 2 * np.pi / gap,
                         d.participation(), (float(lo), float(hi)), history)
