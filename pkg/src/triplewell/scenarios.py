"""Configuration-driven experiments: calibrate, scan, locate, propagate, emit.

A scenario couples a lattice depth (given, or calibrated from a target
hopping) with a coupling that is either explicit or requested by name as
``resonance(<initial>, <partner>)``.  Named resonances are located on the
number-state spectrum first and then refined on the full Hamiltonian.

Config files are INI (one ``[scenario]`` section) or JSON with the same keys:

    [scenario]
    name = my_run
    backend = grid
    n_sub = 17
    target_J = 0.001
    g = resonance(|3,0,0>_0, |2,1,0>[0,1,0])
    tilt = 0
    initial_well = L
    tracked = |3,0,0>_0; |2,1,0>[0,1,0]; |2,0,1>[0,0,1]
    horizon_periods = 3
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import WELLS, Domain, PotentialSpec, aligned_full_grid
from .errors import ConfigurationError, ScenarioError
from .manybody import assemble_hamiltonian, build_basis, lieb_liniger_gamma
from .numberstate import (
    NumberStateBuilder, NumberStateLabel, SpectrumTable, default_labels, find_resonances,
    onsite_energy_scan,
)
from .observables import (
    ObservableSeries, count_nodes_in_well, make_observer, one_body_density,
)
from .propagate import evolve, prepare_localized_state
from .resonance import FullModelProbe, refine_full_resonance
from .single_particle import CalibrationRecord, calibrate_depth, solve_spectrum, wannier_analysis

log = logging.getLogger(__name__)

OUTPUT_ENV = "TRIPLEWELL_OUTPUT"
DEFAULT_OUTPUT = "runs"
_LABEL = r"\|[^>]*>(?:_\d+|\[[^\]]*\])?"
_RESONANCE_RE = re.compile(rf"^\s*resonance\s*\(\s*({_LABEL})\s*,\s*({_LABEL})\s*\)\s*$")


@dataclass
class ScenarioConfig:
    name: str
    n_bosons: int = 3
    backend: str = "grid"
    n_sub: int = 17
    n_modes: int = 12
    depth: float | None = None
    target_J: float | None = 1e-3
    calibration_n_sub: int = 41
    g: str | float = 0.1
    tilt: float = 0.0
    initial_well: str = "L"
    tracked: list = field(default_factory=list)
    g_scan: tuple = (0.0, 12.0, 49)
    horizon_periods: float = 3.0
    horizon: float | None = None
    samples_per_period: int = 100
    propagator: str = "auto"
    tolerance: float = 1e-9
    description: str = ""
    expect: list = field(default_factory=list)

    def __post_init__(self):
        if self.backend not in ("grid", "mode"):
            raise ConfigurationError(f"backend must be 'grid' or 'mode', got {self.backend!r}")
        if self.initial_well not in WELLS:
            raise ConfigurationError(f"initial_well must be one of {WELLS}")
        if self.depth is None and self.target_J is None:
            raise ConfigurationError("give either depth or target_J")
        if self.n_bosons < 1 or self.n_sub < 8:
            raise ConfigurationError("need n_bosons >= 1 and n_sub >= 8")
        if self.propagator not in ("auto", "krylov", "chebyshev", "eigen"):
            raise ConfigurationError(f"unknown propagator {self.propagator!r}")
        if self.horizon_periods <= 0 or self.samples_per_period < 20:
            raise ConfigurationError("horizon_periods must be positive and samples_per_period >= 20")
        self.tracked = [str(NumberStateLabel.parse(t)) for t in self.tracked]
        try:
            lo, hi, n = self.g_scan
            self.g_scan = (float(lo), float(hi), int(n))
        except (TypeError, ValueError):
            raise ConfigurationError(f"g_scan must be (low, high, points), got {self.g_scan!r}") from None
        if not 0 <= self.g_scan[0] < self.g_scan[1] or self.g_scan[2] < 3:
            raise ConfigurationError(f"g_scan needs 0 <= low < high and at least 3 points, got {self.g_scan}")
        if isinstance(self.g, str):
            if self.resonance_request() is None:
                try:
                    self.g = float(self.g)
                except ValueError:
                    raise ConfigurationError(f"g must be a number or resonance(a, b), got {self.g!r}") from None
        if not isinstance(self.g, str) and self.g < 0:
            raise ConfigurationError("g must be non-negative")

    @property
    def initial_label(self) -> NumberStateLabel:
        counts = tuple(self.n_bosons if w == self.initial_well else 0 for w in WELLS)
        return NumberStateLabel(counts, 0)

    def resonance_request(self):
        if not isinstance(self.g, str):
            return None
        m = _RESONANCE_RE.match(self.g)
        if not m:
            return None
        return NumberStateLabel.parse(m.group(1)), NumberStateLabel.parse(m.group(2))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["g_scan"] = list(self.g_scan)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "name" not in data:
            raise ConfigurationError("config needs a name")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} not found")
        text = path.read_text()
        if path.suffix == ".json":
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: {exc}") from exc
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        if "scenario" not in parser:
            raise ConfigurationError(f"{path}: missing [scenario] section")
        return cls.from_dict(_coerce(dict(parser["scenario"])))


def _coerce(raw: dict) -> dict:
    types = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
    out = {}
    for key, value in raw.items():
        kind = str(types.get(key, "str"))
        try:
            if key == "tracked":
                out[key] = [v.strip() for v in value.split(";") if v.strip()]
            elif key == "g_scan":
                lo, hi, n = (v.strip() for v in value.split(","))
                out[key] = (float(lo), float(hi), int(n))
            elif key == "expect":
                out[key] = json.loads(value)
            elif kind.startswith("int"):
                out[key] = int(value)
            elif kind.startswith("float"):
                out[key] = None if value.lower() == "none" else float(value)
            else:
                out[key] = value
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key}: {value!r}") from exc
    return out


# --- built-in experiments -------------------------------------------------

def _check(quantity, op, value):
    return {"quantity": quantity, "op": op, "value": value}


BUILTIN_SCENARIOS = {
    "SELF_TRAP": ScenarioConfig(
        name="SELF_TRAP", backend="mode", n_sub=41, n_modes=12, g=0.1, initial_well="L",
        tracked=["|3,0,0>_0", "|2,1,0>_0", "|2,0,1>_0"], samples_per_period=50,
        description="weakly repulsive bosons loaded in the left well stay there",
        expect=[_check("min_population.L", ">=", 2.8),
                _check("lieb_liniger_gamma", "in", [0.01, 0.06])],
    ),
    "SB_FIRST": ScenarioConfig(
        name="SB_FIRST", g="resonance(|3,0,0>_0, |2,1,0>[0,1,0])", initial_well="L",
        tracked=["|3,0,0>_0", "|2,1,0>[0,1,0]", "|2,0,1>[0,0,1]"],
        description="one boson tunnels from the left well into the first excited level of a neighbour",
        expect=[_check("amplitude.L", ">=", 0.7),
                _check("max_population.L", ">=", 2.9),
                _check("min_population.L", "<=", 2.3),
                _check("max_combined_probability", ">=", 0.5),
                _check("nodes_at_transfer.M", "==", 1),
                _check("nodes_at_transfer.R", "==", 1)],
    ),
    "SB_SECOND": ScenarioConfig(
        name="SB_SECOND", g="resonance(|0,3,0>_0, |1,2,0>[2,0,0])", initial_well="M",
        tracked=["|0,3,0>_0", "|1,2,0>[2,0,0]", "|0,2,1>[0,0,2]"], g_scan=(0.0, 40.0, 81),
        description="one boson leaves the middle well for the second excited level of both outer wells",
        expect=[_check("min_population.M", "<=", 2.3),
                _check("max_lr_asymmetry", "<=", 1e-3),
                _check("max_population.L", "in", [0.3, 0.6]),
                _check("max_population.R", "in", [0.3, 0.6]),
                _check("nodes_at_transfer.L", "==", 2),
                _check("nodes_at_transfer.R", "==", 2)],
    ),
    "CORR_TWO": ScenarioConfig(
        name="CORR_TWO", g="resonance(|0,3,0>_0, |1,1,1>[1,0,1])", initial_well="M",
        tracked=["|0,3,0>_0", "|1,1,1>[1,0,1]"],
        description="two bosons leave the middle well together, one to each outer well",
        expect=[_check("min_population.M", "<=", 1.5),
                _check("max_lr_asymmetry", "<=", 1e-3),
                _check("max_probability.|1,1,1>[1,0,1]", ">=", 0.4),
                _check("nodes_at_transfer.L", "==", 1),
                _check("nodes_at_transfer.R", "==", 1)],
    ),
    "TILT_SELECT": ScenarioConfig(
        name="TILT_SELECT", g="resonance(|3,0,0>_0, |2,1,0>[0,1,0])", tilt=0.1, initial_well="L",
        tracked=["|3,0,0>_0", "|2,1,0>[0,1,0]", "|2,0,1>[0,0,1]"],
        description="a tilt makes the left-well boson tunnel to the middle well only",
        expect=[_check("max_population.M", ">=", 0.5),
                _check("max_population.R", "<=", 0.1)],
    ),
}


def list_builtin_scenarios() -> dict:
    """Name -> (description, expected-summary template) for every built-in."""
    return {name: {"description": cfg.description, "expect": list(cfg.expect)}
            for name, cfg in BUILTIN_SCENARIOS.items()}


def load_scenario(spec: str) -> ScenarioConfig:
    if spec in BUILTIN_SCENARIOS:
        return dataclasses.replace(BUILTIN_SCENARIOS[spec])
    if os.path.exists(spec):
        return ScenarioConfig.from_file(spec)
    raise ScenarioError(f"{spec!r} is neither a built-in scenario ({', '.join(BUILTIN_SCENARIOS)}) nor a file")


def output_root(override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


# --- pipeline -------------------------------------------------------------

@dataclass
class RunResult:
    config: ScenarioConfig
    directory: Path
    summary: dict
    series: ObservableSeries
    table: SpectrumTable | None = None


def resolve_depth(config: ScenarioConfig) -> CalibrationRecord:
    if config.depth is not None:
        lv = wannier_analysis(config.depth, 0.0, config.calibration_n_sub)
        return CalibrationRecord(config.depth, lv.hopping, float("nan"), lv.bound_levels,
                                 lv.band_triplets.ravel().tolist(), lv.fit_residual,
                                 config.calibration_n_sub, "fd")
    return calibrate_depth(config.target_J, n_sub=config.calibration_n_sub)


def _make_basis(config, depth):
    full = aligned_full_grid(config.n_sub)
    if config.backend == "grid":
        return build_basis(config.n_bosons, grid=full)
    spectrum = solve_spectrum(full, PotentialSpec(depth, config.tilt), config.n_modes)
    return build_basis(config.n_bosons, spectrum=spectrum)


def locate_resonance(config, builder, basis):
    """(g*, period, spectrum table, resonance record) for a named resonance request."""
    initial, partner = config.resonance_request()
    lo, hi, n = config.g_scan
    grid = np.linspace(lo, hi, int(n))
    labels = default_labels(builder, config.n_bosons, 0.0)
    wanted = [initial, partner] + [NumberStateLabel.parse(t) for t in config.tracked]
    table = onsite_energy_scan(builder, labels, grid)
    for lab in wanted:
        table.row(lab, builder)
    hits = find_resonances(table, builder, initial, [partner])[partner]
    if not hits:
        init_row, part_row = table.row(initial, builder), table.row(partner, builder)
        closest = np.min(np.abs(init_row.energies - part_row.energies))
        raise ScenarioError(
            f"no crossing of {initial} with {partner} for g in [{lo:g}, {hi:g}] "
            f"(closest approach {closest:.4g} E_R)"
        )
    ns = hits[0]
    probe = FullModelProbe(builder, basis, initial, partner)
    full = refine_full_resonance(probe, ns.g_star, ns.slope, g_range=(max(lo, 1e-3), max(hi, 2 * ns.g_star)))
    record = {"initial": str(initial), "partner": str(partner),
              "g_number_state": ns.g_star, "slope": ns.slope,
              "g_star": full.g_star, "gap": full.gap, "period": full.period,
              "participation": full.participation}
    return full.g_star, full.period, table, record


def tunneling_period(depth, tilt, n_sub) -> float:
    """Period of single-boson oscillation out of an outer well (lowest triplet splitting)."""
    e = solve_spectrum(aligned_full_grid(n_sub), PotentialSpec(depth, tilt), 3).energies
    return float(2 * np.pi / (e[1] - e[0]))


def _choose_propagator(config, basis, hamiltonian):
    if config.propagator != "auto":
        return config.propagator
    return "eigen" if basis.dimension <= 2000 else "chebyshev"


def _evaluate(expect, summary) -> list:
    out = []
    for chk in expect:
        value = _lookup(summary, chk["quantity"])
        op, ref = chk["op"], chk["value"]
        if value is None:
            ok = False
        elif op == ">=":
            ok = value >= ref
        elif op == "<=":
            ok = value <= ref
        elif op == "==":
            ok = value == ref
        elif op == "in":
            ok = ref[0] <= value <= ref[1]
        else:
            raise ConfigurationError(f"unknown comparison {op!r}")
        out.append(dict(chk, observed=value, passed=bool(ok)))
    return out


def _lookup(summary, path):
    node = summary
    head, _, rest = path.partition(".")
    if head not in node:
        return None
    node = node[head]
    if rest:
        if not isinstance(node, dict) or rest not in node:
            return None
        node = node[rest]
    return node


def _dominant_period(times, signal):
    x = np.asarray(signal) - np.mean(signal)
    if len(x) < 8 or np.allclose(x, 0):
        return None
    dt = times[1] - times[0]
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    freqs = np.fft.rfftfreq(len(x), dt)
    k = int(np.argmax(spec[1:]) + 1)
    return float(1 / freqs[k])


def summarize(config, series, grid, extra) -> dict:
    pops = series.populations
    init = WELLS.index(config.initial_well)
    transfer = int(np.argmin(pops[:, init]))
    nodes = {}
    for w in WELLS:
        nc = count_nodes_in_well(series.densities[transfer], grid, w)
        nodes[w] = None if nc.low_population else nc.count
    probs = {k: float(np.max(v)) for k, v in series.probabilities.items() if k != "untracked"}
    partner_keys = [k for k in probs if NumberStateLabel.parse(k).counts != config.initial_label.counts]
    combined = 0.0
    if partner_keys:
        combined = float(np.max(np.sum([series.probabilities[k] for k in partner_keys], axis=0)))
    energy = series.energies
    summary = {
        "name": config.name,
        "code_version": __version__,
        "V0": extra["V0"], "g": extra["g"], "tilt": config.tilt, "J": extra["J"],
        "backend": config.backend, "basis_dimension": extra["dimension"], "orbitals": extra["orbitals"],
        "n_sub": config.n_sub, "propagator": extra["propagator"],
        "horizon": float(series.times[-1]), "dt_out": float(series.times[1] - series.times[0]),
        "resonance_period": extra.get("period"),
        "dominant_period": _dominant_period(series.times, pops[:, init]),
        "min_population": dict(zip(WELLS, map(float, pops.min(axis=0)))),
        "max_population": dict(zip(WELLS, map(float, pops.max(axis=0)))),
        "amplitude": dict(zip(WELLS, map(float, pops.max(axis=0) - pops.min(axis=0)))),
        "max_lr_asymmetry": float(np.max(np.abs(pops[:, 0] - pops[:, 2]))),
        "max_probability": probs,
        "max_combined_probability": combined,
        "transfer_time": float(series.times[transfer]),
        "nodes_at_transfer": nodes,
        "lieb_liniger_gamma": extra["gamma"],
        "hygiene": {
            "max_norm_deviation": float(np.max(np.abs(series.norms - 1))),
            "max_relative_energy_drift": float(np.max(np.abs(energy - energy[0])) / max(abs(energy[0]), 1e-300)),
            "max_population_sum_error": float(np.max(np.abs(pops.sum(axis=1) - config.n_bosons))),
        },
    }
    if "resonance" in extra:
        summary["resonance"] = extra["resonance"]
    summary["checks"] = _evaluate(config.expect, summary)
    summary["all_checks_passed"] = all(c["passed"] for c in summary["checks"])
    return summary


def run_scenario(config: ScenarioConfig, out_dir=None, figures: bool = True) -> RunResult:
    """Run one scenario end to end and write its artifact bundle."""
    directory = Path(out_dir) if out_dir is not None else output_root() / config.name
    directory.mkdir(parents=True, exist_ok=True)
    calib = resolve_depth(config)
    depth = calib.depth
    (directory / "calibration.txt").write_text(f"# triplewell {__version__}\n" + calib.to_text())
    builder = NumberStateBuilder(depth, config.tilt, config.n_sub)
    basis = _make_basis(config, depth)
    table = None
    extra = {"V0": depth, "J": calib.hopping, "dimension": basis.dimension, "orbitals": basis.n_orbitals}
    if config.resonance_request() is not None:
        g, period, table, record = locate_resonance(config, builder, basis)
        extra["resonance"] = record
    else:
        g = float(config.g)
        period = tunneling_period(depth, config.tilt, config.n_sub)
    extra.update(g=g, period=period)
    header = _header(config, depth, g, basis)
    if table is not None:
        table.write_csv(directory / "spectrum.csv", header)
        table.write_crossings_csv(directory / "crossings.csv", header)
    resolved = dict(config.to_dict(), depth_resolved=depth, g_resolved=g, period=period,
                    code_version=__version__)
    _write_json(directory / "resolved_config.json", resolved)

    hamiltonian = assemble_hamiltonian(basis, PotentialSpec(depth, config.tilt), g)
    state = prepare_localized_state(config.initial_well, config.n_bosons, g, basis,
                                    depth=depth, tilt=config.tilt)
    rho0 = one_body_density(state)
    center = WELLS.index(config.initial_well)
    x = basis.grid.points
    extra["gamma"] = lieb_liniger_gamma(g, config.n_bosons, rho0[np.argmin(np.abs(x - _well_center(center)))] / config.n_bosons)
    refs = {t: builder.assemble(NumberStateLabel.parse(t), g, basis) for t in config.tracked}
    horizon = config.horizon or config.horizon_periods * period
    dt_out = period / config.samples_per_period
    method = _choose_propagator(config, basis, hamiltonian)
    extra["propagator"] = method
    log.info("%s: V0=%.6g g=%.6g horizon=%.6g dt=%.4g (%s)", config.name, depth, g, horizon, dt_out, method)
    traj = evolve(state, hamiltonian, horizon, dt_out, tol=config.tolerance,
                  observer=make_observer(basis, refs), method=method)
    meta = {"name": config.name, "V0": depth, "g": g, "tilt": config.tilt, "backend": basis.backend,
            "dimension": basis.dimension, "orbitals": basis.n_orbitals, "n_sub": config.n_sub,
            "code_version": __version__}
    series = ObservableSeries.from_trajectory(traj, x, meta)
    series.write_csv(directory / "observables.csv", header=header)
    summary = summarize(config, series, basis.grid, extra)
    snaps = sorted({0, int(np.argmin(series.populations[:, center])), len(series.times) - 1})
    series.write_density_csv(directory / "density.csv", snaps, header=header)
    _write_json(directory / "summary.json", summary)
    if figures:
        from . import plotting
        plotting.render_run(directory, series, summary, table, snaps)
    return RunResult(config, directory, summary, series, table)


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _well_center(index):
    lo, hi = Domain.for_well(WELLS[index]).bounds
    return 0.5 * (lo + hi)


def _header(config, depth, g, basis):
    return [f"triplewell {__version__}", f"scenario={config.name}", f"V0={depth:.12g}", f"g={g:.12g}",
            f"tilt={config.tilt:g}", f"backend={basis.backend}", f"dimension={basis.dimension}",
            f"orbitals={basis.n_orbitals}", f"n_sub={config.n_sub}"]
