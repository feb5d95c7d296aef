"""Interaction-dressed number states of bosons split among three wells.

A number state ``|N_L, N_M, N_R>`` is the symmetrized product of three
independent sub-well eigenstates, one per well, each solved with hard walls
at the well edges and with contact interactions only among the bosons of that
well.  The composite excitation index ``i`` enumerates products of sub-well
eigenstates by total energy at the working coupling; exact ties are broken by
the lexicographic order of the per-well excitation tuple.  Because that index
can change with ``g``, rows of a :class:`SpectrumTable` are keyed by the
excitation tuple and the index is resolved per coupling.
"""
from __future__ import annotations

import csv
import enum
import itertools
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla
from scipy.linalg import eigh
from scipy.optimize import brentq

from .discretization import WELLS, Domain, PotentialSpec, aligned_full_grid, sub_grid_of
from .errors import ConfigurationError, NumericalError, RepresentationError
from .manybody import ManyBodyState, SymmetrizedBasis, assemble_hamiltonian, build_basis
from .single_particle import DEFAULT_SUB_POINTS, solve_spectrum

log = logging.getLogger(__name__)

LEAKAGE_LIMIT = 1e-2
TIE_TOLERANCE = 1e-9


class ModeClass(enum.Enum):
    SINGLE = "single"
    PAIR = "pair"
    TRIPLE = "triple"
    QUAD = "quad"
    SINGLE_PAIR = "single-pair"
    DOUBLE_PAIR = "double-pair"
    OTHER = "other"


_MODE_BY_PATTERN = {
    (1, 1, 1): ModeClass.SINGLE,
    (1, 2): ModeClass.PAIR,
    (3,): ModeClass.TRIPLE,
    (4,): ModeClass.QUAD,
    (1, 1, 2): ModeClass.SINGLE_PAIR,
    (2, 2): ModeClass.DOUBLE_PAIR,
}


_LABEL_RE = re.compile(
    r"^\|?\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*(?:>|\))?\s*"
    r"(?:_?\s*(\d+)|\[\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\])?\s*$"
)


@dataclass(frozen=True)
class NumberStateLabel:
    """Boson counts per well plus either an index ``i`` or an excitation tuple.

    ``excitation`` names the sub-well eigenstate used in each well (0 is the
    interacting ground state of that well's subset), which identifies a state
    independently of the coupling.
    """

    counts: tuple
    index: int | None = 0
    excitation: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) != 3 or min(self.counts) < 0:
            raise ConfigurationError(f"bad well counts {self.counts}")
        if self.excitation is not None:
            exc = tuple(int(e) for e in self.excitation)
            object.__setattr__(self, "excitation", exc)
            object.__setattr__(self, "index", None)
            if len(exc) != 3 or any(e < 0 for e in exc):
                raise ConfigurationError(f"bad excitation tuple {exc}")
            if any(c == 0 and e for c, e in zip(self.counts, exc)):
                raise ConfigurationError(f"empty well cannot be excited in {self}")
        elif self.index is None or self.index < 0:
            raise ConfigurationError("label needs an index or an excitation tuple")

    @property
    def n_bosons(self) -> int:
        return sum(self.counts)

    def __str__(self):
        body = "|" + ",".join(map(str, self.counts)) + ">"
        if self.excitation is not None:
            return body + "[" + ",".join(map(str, self.excitation)) + "]"
        return f"{body}_{self.index}"

    @classmethod
    def parse(cls, text: str) -> "NumberStateLabel":
        """Accepts ``|3,0,0>_0``, ``3,0,0_0``, ``3,0,0`` and ``|2,1,0>[0,1,0]``."""
        m = _LABEL_RE.match(text.strip())
        if not m:
            raise ConfigurationError(f"cannot parse number-state label {text!r}")
        counts = tuple(int(v) for v in m.group(1, 2, 3))
        if m.group(5) is not None:
            return cls(counts, None, tuple(int(v) for v in m.group(5, 6, 7)))
        return cls(counts, int(m.group(4) or 0))


def classify_mode(label: NumberStateLabel) -> ModeClass:
    pattern = tuple(sorted(c for c in label.counts if c))
    return _MODE_BY_PATTERN.get(pattern, ModeClass.OTHER)


@dataclass
class SubsetState:
    energy: float
    coefficients: np.ndarray
    basis: SymmetrizedBasis | None


@dataclass
class NumberStateWavefunction:
    label: NumberStateLabel
    excitation: tuple
    index: int
    energy: float
    coupling: float
    factors: dict = field(repr=False)


class NumberStateBuilder:
    """Solves and caches sub-well problems at one lattice depth and tilt."""

    def __init__(self, depth: float, tilt: float = 0.0, n_sub: int = DEFAULT_SUB_POINTS,
                 scheme: str = "fd", levels_per_well: int = 6, max_dimension: int = 400_000):
        self.depth = depth
        self.tilt = tilt
        self.n_sub = n_sub
        self.scheme = scheme
        self.levels_per_well = levels_per_well
        self.max_dimension = max_dimension
        self.full_grid = aligned_full_grid(n_sub)
        self._cache = {}
        self._bases = {}

    def _sub_basis(self, n, well):
        key = (n, well)
        if key not in self._bases:
            sub, _ = sub_grid_of(self.full_grid, well)
            self._bases[key] = build_basis(n, grid=sub, max_dimension=self.max_dimension)
        return self._bases[key]

    def solve_subset_states(self, n: int, well: str, g: float, k: int | None = None) -> list:
        """Lowest ``k`` eigenstates of ``n`` interacting bosons in one hard-walled well."""
        k = self.levels_per_well if k is None else k
        if k < 1:
            raise ConfigurationError("need at least one subset level")
        if n == 0:
            return [SubsetState(0.0, np.ones(1), None)]
        source = well
        if self.tilt == 0.0 and well != "M":
            source = "M"  # untilted wells are translates of the middle one
        g_key = 0.0 if n == 1 else float(g)
        key = (n, source, g_key)
        cached = self._cache.get(key)
        if cached is None or len(cached) < k:
            cached = self._solve(n, source, g_key, max(k, self.levels_per_well))
            self._cache[key] = cached
        if source == well:
            return cached[:k]
        basis = self._sub_basis(n, well)
        return [SubsetState(s.energy, s.coefficients, basis) for s in cached[:k]]

    def _solve(self, n, well, g, k):
        basis = self._sub_basis(n, well)
        pot = PotentialSpec(self.depth, self.tilt, Domain.for_well(well))
        k = min(k, basis.dimension)
        if n == 1:
            spec = solve_spectrum(basis.grid, pot, k, self.scheme)
            return [SubsetState(float(e), spec.orbitals[:, j].copy(), basis)
                    for j, e in enumerate(spec.energies)]
        h = assemble_hamiltonian(basis, pot, g, self.scheme).matrix
        if basis.dimension <= 1500:
            vals, vecs = eigh(h.toarray(), subset_by_index=(0, k - 1), driver="evr")
        else:
            try:
                vals, vecs = sla.eigsh(h, k=k, which="SA", v0=np.ones(basis.dimension), tol=1e-12)
            except sla.ArpackNoConvergence as exc:
                raise NumericalError(f"sub-well solve n={n} g={g} did not converge: {exc}") from exc
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        out = []
        for j in range(len(vals)):
            v = vecs[:, j]
            pivot = np.argmax(np.abs(v))
            out.append(SubsetState(float(vals[j]), v * np.sign(v[pivot]), basis))
        return out

    def excitations(self, counts, g: float) -> list:
        """Composite excitations ``(energy, tuple)`` in index order at coupling ``g``.

        Only composites whose energy is guaranteed complete given the number of
        levels solved per well are returned.
        """
        levels = [self.solve_subset_states(n, w, g) for n, w in zip(counts, WELLS)]
        energies = [np.array([s.energy for s in lv]) for lv in levels]
        trusted = np.inf
        for j, (n, e) in enumerate(zip(counts, energies)):
            if n == 0:
                continue
            others = sum(energies[i][0] for i in range(3) if i != j)
            limit = self.levels_per_well if n > 1 else len(e)
            if len(e) >= limit:
                trusted = min(trusted, e[-1] + others)
        combos = []
        for exc in itertools.product(*(range(len(e)) for e in energies)):
            total = float(sum(e[i] for e, i in zip(energies, exc)))
            if total <= trusted + TIE_TOLERANCE:
                combos.append((total, exc))
        combos.sort(key=lambda c: c[0])
        out, group = [], []
        for item in combos:
            if group and item[0] - group[0][0] > TIE_TOLERANCE:
                out.extend(sorted(group, key=lambda c: c[1]))
                group = []
            group.append(item)
        out.extend(sorted(group, key=lambda c: c[1]))
        return out

    def resolve(self, label: NumberStateLabel, g: float) -> tuple:
        """(index, excitation tuple, energy) of ``label`` at coupling ``g``."""
        table = self.excitations(label.counts, g)
        if label.excitation is not None:
            for i, (e, exc) in enumerate(table):
                if exc == label.excitation:
                    return i, exc, e
            levels = [self.solve_subset_states(n, w, g, max(self.levels_per_well, x + 1))
                      for n, w, x in zip(label.counts, WELLS, label.excitation)]
            energy = float(sum(lv[x].energy for lv, x in zip(levels, label.excitation)))
            return -1, label.excitation, energy
        if label.index >= len(table):
            raise ConfigurationError(
                f"{label} beyond the {len(table)} resolved excitations; raise levels_per_well"
            )
        e, exc = table[label.index]
        return label.index, exc, e

    def energy(self, label: NumberStateLabel, g: float) -> float:
        return self.resolve(label, g)[2]

    def wavefunction(self, label: NumberStateLabel, g: float) -> NumberStateWavefunction:
        index, exc, energy = self.resolve(label, g)
        factors = {}
        for n, w, x in zip(label.counts, WELLS, exc):
            factors[w] = self.solve_subset_states(n, w, g, max(self.levels_per_well, x + 1))[x]
        return NumberStateWavefunction(label, exc, index, energy, g, factors)

    def assemble(self, label: NumberStateLabel, g: float, target: SymmetrizedBasis,
                 leakage_limit: float = LEAKAGE_LIMIT) -> ManyBodyState:
        return embed_number_state(self.wavefunction(label, g), target, self.full_grid, leakage_limit)


def _symmetric_tensor(coefficients, basis: SymmetrizedBasis | None, n_sub: int):
    """First-quantized symmetric amplitude tensor of an occupation-basis vector."""
    if basis is None:
        return np.ones(())
    n = basis.n_bosons
    tensor = np.zeros((n_sub,) * n)
    occ = basis.occupations()
    multiplicity = np.array([math.factorial(n) / np.prod([math.factorial(int(v)) for v in row])
                             for row in occ]) if n > 1 else np.ones(len(occ))
    amp = coefficients / np.sqrt(multiplicity)
    for perm in set(itertools.permutations(range(n))):
        tensor[tuple(basis.configs[:, p] for p in perm)] = amp
    return tensor


def _occupation_amplitudes(tensor, target: SymmetrizedBasis):
    n = target.n_bosons
    configs = target.configs
    occ_counts = np.array([np.prod([math.factorial(int(c)) for c in np.bincount(row)]) for row in configs])
    return np.sqrt(math.factorial(n) / occ_counts) * tensor[tuple(configs.T)]


def embed_number_state(wave: NumberStateWavefunction, target: SymmetrizedBasis, full_grid=None,
                       leakage_limit: float = LEAKAGE_LIMIT) -> ManyBodyState:
    """Expand a number state in ``target`` and renormalize.

    Raises :class:`RepresentationError` when the norm lost outside the span of
    ``target`` exceeds ``leakage_limit``.
    """
    n_sub = next(iter(f.basis.grid.n_points for f in wave.factors.values() if f.basis is not None))
    full_grid = full_grid or aligned_full_grid(n_sub)
    if target.grid != full_grid:
        raise ConfigurationError("target basis must live on the wall-aligned full grid")
    if target.n_bosons != wave.label.n_bosons:
        raise ConfigurationError(f"target holds {target.n_bosons} bosons, label {wave.label}")
    m = target.n_orbitals
    if m ** target.n_bosons > 60_000_000:
        raise ConfigurationError(f"embedding tensor {m}^{target.n_bosons} too large")
    u = target.orbital_matrix()
    parts = []
    for well in WELLS:
        factor = wave.factors[well]
        if factor.basis is None:
            continue
        _, rows = sub_grid_of(full_grid, well)
        t = _symmetric_tensor(factor.coefficients, factor.basis, n_sub)
        uw = u[rows, :]
        for _ in range(factor.basis.n_bosons):
            t = np.tensordot(t, uw, axes=([0], [0]))  # cycles axes, applying U to each
        parts.append(t)
    product = parts[0]
    for t in parts[1:]:
        product = np.multiply.outer(product, t)
    n = target.n_bosons
    perms = list(itertools.permutations(range(n)))
    sym = sum(np.transpose(product, p) for p in perms) / len(perms)
    coeffs = _occupation_amplitudes(sym, target)
    expected = np.prod([math.factorial(c) for c in wave.label.counts]) / math.factorial(n)
    kept = float(np.vdot(coeffs, coeffs).real) / expected
    leakage = max(0.0, 1.0 - kept)
    if leakage > leakage_limit:
        raise RepresentationError(
            f"{wave.label} loses {leakage:.3e} of its norm in a {target.backend} basis with "
            f"M={m} orbitals (limit {leakage_limit:g}); increase the number of modes"
        )
    coeffs = coeffs / np.linalg.norm(coeffs)
    meta = {"label": str(wave.label), "excitation": wave.excitation, "index": wave.index,
            "energy": wave.energy, "g": wave.coupling, "leakage": leakage}
    return ManyBodyState(target, coeffs.astype(complex), 0.0, meta)


def solve_subset_states(n: int, well: str, g: float, k: int, tilt: float = 0.0, *, depth: float,
                        n_sub: int = DEFAULT_SUB_POINTS, scheme: str = "fd") -> list:
    """Functional front end to :meth:`NumberStateBuilder.solve_subset_states`."""
    builder = NumberStateBuilder(depth, tilt, n_sub, scheme, levels_per_well=k)
    return [(s.energy, s) for s in builder.solve_subset_states(n, well, g, k)]


def assemble_number_state(label: NumberStateLabel, g: float, target: SymmetrizedBasis, *,
                          depth: float, tilt: float = 0.0, n_sub: int = DEFAULT_SUB_POINTS,
                          builder: NumberStateBuilder | None = None) -> ManyBodyState:
    builder = builder or NumberStateBuilder(depth, tilt, n_sub)
    return builder.assemble(label, g, target)


def fermion_sum(builder: NumberStateBuilder, counts, excitation=(0, 0, 0)) -> float:
    """Noninteracting-fermion energy of the wells' subsets (Bose-Fermi mapping).

    Hard-core bosons share their spectrum with free fermions, so excitation
    ``k`` of an ``n``-boson subset maps onto the k-th lowest sum of ``n``
    distinct single-particle levels of that well.
    """
    total = 0.0
    for n, w, x in zip(counts, WELLS, excitation):
        if n == 0:
            continue
        n_levels = n + x + 1
        levels = np.array([s.energy for s in builder.solve_subset_states(1, w, 0.0, n_levels)])
        sums = sorted(sum(c) for c in itertools.combinations(levels, n))
        total += sums[x]
    return float(total)


@dataclass
class SpectrumRow:
    counts: tuple
    excitation: tuple
    mode: ModeClass
    energies: np.ndarray
    indices: np.ndarray

    @property
    def label(self) -> NumberStateLabel:
        return NumberStateLabel(self.counts, None, self.excitation)


@dataclass
class SpectrumTable:
    g_samples: np.ndarray
    rows: list
    crossings: list = field(default_factory=list)
    depth: float = 0.0
    tilt: float = 0.0
    truncation_note: str = ""

    def row(self, label: NumberStateLabel, builder: NumberStateBuilder | None = None) -> SpectrumRow:
        exc = label.excitation
        if exc is None:
            if builder is None:
                for r in self.rows:
                    if r.counts == label.counts and r.indices[-1] == label.index:
                        return r
                raise KeyError(str(label))
            exc = builder.resolve(label, float(self.g_samples[-1]))[1]
        for r in self.rows:
            if r.counts == label.counts and r.excitation == exc:
                return r
        raise KeyError(str(label))

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            if self.truncation_note:
                fh.write(f"# {self.truncation_note}\n")
            w = csv.writer(fh)
            w.writerow(["label", "mode", "excitation", "i_by_g"] + [f"g={g:.6g}" for g in self.g_samples])
            for r in self.rows:
                w.writerow(
                    [str(r.label), r.mode.value, "-".join(map(str, r.excitation)),
                     " ".join(str(int(i)) for i in r.indices)]
                    + [f"{e:.10f}" for e in r.energies]
                )

    def write_crossings_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["label_a", "label_b", "g_star", "energy", "window_width"])
            for c in self.crossings:
                w.writerow([str(c.initial), str(c.candidate), f"{c.g_star:.8f}", f"{c.energy:.10f}",
                            f"{c.window_width:.6g}"])


def default_labels(builder: NumberStateBuilder, n_bosons: int = 3, g_ref: float = 0.0) -> list:
    """Every composite excitation whose noninteracting energy lies below the fourth band."""
    spec = builder.solve_subset_states(1, "M", 0.0, 4)
    cutoff = (n_bosons - 1) * spec[0].energy + spec[3].energy
    labels = []
    for counts in itertools.product(range(n_bosons + 1), repeat=3):
        if sum(counts) != n_bosons:
            continue
        for e, exc in builder.excitations(counts, g_ref):
            if e < cutoff - 1e-9:
                labels.append(NumberStateLabel(counts, None, exc))
    return labels


def onsite_energy_scan(builder: NumberStateBuilder, labels, g_grid) -> SpectrumTable:
    g_grid = np.asarray(g_grid, dtype=float)
    if np.any(np.diff(g_grid) < 0):
        raise ConfigurationError("coupling samples must be sorted ascending")
    rows = []
    for label in labels:
        energies, indices = [], []
        exc = label.excitation
        if exc is None:
            exc = builder.resolve(label, float(g_grid[-1]))[1]
        fixed = NumberStateLabel(label.counts, None, exc)
        for g in g_grid:
            i, _, e = builder.resolve(fixed, float(g))
            energies.append(e)
            indices.append(i)
        rows.append(SpectrumRow(label.counts, exc, classify_mode(label), np.array(energies), np.array(indices)))
    note = (f"labels truncated to composites below the fourth band at g=0; "
            f"{builder.levels_per_well} subset levels solved per well")
    return SpectrumTable(g_grid, rows, [], builder.depth, builder.tilt, note)


@dataclass
class Resonance:
    initial: NumberStateLabel
    candidate: NumberStateLabel
    g_star: float
    energy: float
    window_width: float
    slope: float


def find_resonances(table: SpectrumTable, builder: NumberStateBuilder, initial: NumberStateLabel,
                    candidates, coupling_scale: float | None = None, tol: float = 1e-4) -> dict:
    """Crossings of ``initial`` with each candidate, refined by fresh sub-well solves.

    Returns ``{candidate: [Resonance, ...]}``; an empty list means the two
    on-site energies do not cross inside the sampled range.  The window width
    is the coupling range over which ``|de| < coupling_scale`` (linearized).
    """
    init_row = table.row(initial, builder)
    init = init_row.label
    scale = coupling_scale if coupling_scale is not None else 1e-3
    found = {}
    for cand in candidates:
        row = table.row(cand, builder)
        diff = init_row.energies - row.energies
        hits = []
        for j in range(len(diff) - 1):
            if diff[j] == 0.0 and j > 0:
                continue
            if np.sign(diff[j]) == np.sign(diff[j + 1]) and diff[j + 1] != 0.0:
                continue
            lo, hi = table.g_samples[j], table.g_samples[j + 1]

            def gap(g, _c=row.label):
                return builder.energy(init, g) - builder.energy(_c, g)

            if diff[j] == 0.0:
                g_star = float(lo)
            else:
                g_star = brentq(gap, lo, hi, xtol=1e-10, rtol=1e-12)
            if abs(gap(g_star)) > tol:
                raise NumericalError(f"resonance refinement for {cand} stalled at g={g_star}")
            h = max(1e-4, 1e-3 * g_star)
            slope = (gap(g_star + h) - gap(max(0.0, g_star - h))) / (g_star + h - max(0.0, g_star - h))
            width = 2 * scale / abs(slope) if slope else np.inf
            hits.append(Resonance(init, row.label, g_star, builder.energy(init, g_star), width, slope))
        found[cand] = hits
        table.crossings.extend(hits)
    return found
