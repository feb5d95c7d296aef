"""Command line front end: ``triplewell {calibrate,spectrum,resonances,run,list}``.

Exit codes: 0 success, 2 configuration, 3 capacity, 4 numerical,
5 scenario error.  Output goes under ``$TRIPLEWELL_OUTPUT`` (default
``./runs``) unless ``--output-root`` is given.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .discretization import aligned_full_grid
from .errors import TripleWellError
from .manybody import build_basis
from .numberstate import (
    NumberStateBuilder, NumberStateLabel, default_labels, find_resonances, onsite_energy_scan,
)
from .scenarios import (
    OUTPUT_ENV, list_builtin_scenarios, load_scenario, output_root, run_scenario,
)
from .single_particle import DEFAULT_SUB_POINTS, calibrate_depth

log = logging.getLogger("triplewell")


def _depth(args) -> float:
    if args.V0 is not None:
        return args.V0
    return calibrate_depth(args.target_J, n_sub=DEFAULT_SUB_POINTS).depth


def _header(args, depth):
    return [f"triplewell {__version__}", f"V0={depth:.12g}", f"tilt={args.tilt:g}", f"n_sub={args.n_sub}"]


def cmd_calibrate(args):
    rec = calibrate_depth(args.target_J, bands_required=args.bands, n_sub=args.n_sub)
    out = output_root(args.output_root) / "calibration"
    out.mkdir(parents=True, exist_ok=True)
    (out / "calibration.txt").write_text(f"# triplewell {__version__}\n" + rec.to_text())
    print(rec.to_text(), end="")
    return 0


def cmd_spectrum(args):
    depth = _depth(args)
    builder = NumberStateBuilder(depth, args.tilt, args.n_sub)
    grid = np.linspace(0.0, args.g_max, args.g_points)
    table = onsite_energy_scan(builder, default_labels(builder, args.n_bosons), grid)
    out = output_root(args.output_root) / "spectrum"
    out.mkdir(parents=True, exist_ok=True)
    table.write_csv(out / "spectrum.csv", _header(args, depth))
    from . import plotting
    plotting.plot_spectrum(table, out / "spectrum.png", title=f"V0={depth:.4g}, tilt={args.tilt:g}")
    print(f"{len(table.rows)} labels x {len(grid)} couplings -> {out / 'spectrum.csv'}")
    return 0


def cmd_resonances(args):
    depth = _depth(args)
    builder = NumberStateBuilder(depth, args.tilt, args.n_sub)
    initial = NumberStateLabel.parse(args.initial)
    partners = [NumberStateLabel.parse(p) for p in args.partner]
    grid = np.linspace(0.0, args.g_max, args.g_points)
    table = onsite_energy_scan(builder, [initial, *partners], grid)
    found = find_resonances(table, builder, initial, partners)
    out = output_root(args.output_root) / "resonances"
    out.mkdir(parents=True, exist_ok=True)
    table.write_crossings_csv(out / "crossings.csv", _header(args, depth))
    rows = []
    for partner, hits in found.items():
        if not hits:
            print(f"{initial} x {partner}: no crossing for g in [0, {args.g_max:g}]")
        for hit in hits:
            row = {"initial": str(initial), "partner": str(partner), "g_number_state": hit.g_star,
                   "slope": hit.slope}
            if args.full_model:
                from .resonance import FullModelProbe, refine_full_resonance
                basis = build_basis(initial.n_bosons, grid=aligned_full_grid(args.n_sub))
                full = refine_full_resonance(FullModelProbe(builder, basis, initial, partner),
                                             hit.g_star, hit.slope)
                row.update(g_star=full.g_star, gap=full.gap, period=full.period)
            rows.append(row)
            print(json.dumps(row))
    (out / "resonances.json").write_text(json.dumps(rows, indent=2) + "\n")
    return 0


def cmd_run(args):
    config = load_scenario(args.scenario)
    directory = output_root(args.output_root) / config.name
    result = run_scenario(config, directory, figures=not args.no_figures)
    for chk in result.summary["checks"]:
        status = "ok  " if chk["passed"] else "FAIL"
        print(f"{status} {chk['quantity']} {chk['op']} {chk['value']} (observed {chk['observed']})")
    print(f"wrote {directory}")
    return 0


def cmd_list(args):
    for name, entry in list_builtin_scenarios().items():
        print(f"{name:12s} {entry['description']}")
        for chk in entry["expect"]:
            print(f"{'':12s}   expect {chk['quantity']} {chk['op']} {chk['value']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="triplewell", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--output-root", help=f"output directory root (overrides ${OUTPUT_ENV})")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="find the lattice depth for a target hopping")
    c.add_argument("--target-J", type=float, default=1e-3)
    c.add_argument("--bands", type=int, default=3)
    c.add_argument("--n-sub", type=int, default=DEFAULT_SUB_POINTS)
    c.set_defaults(func=cmd_calibrate)

    def lattice(sp, n_sub=17):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--V0", type=float)
        g.add_argument("--target-J", type=float, default=1e-3)
        sp.add_argument("--tilt", type=float, default=0.0)
        sp.add_argument("--n-sub", type=int, default=n_sub)
        sp.add_argument("--g-max", type=float, default=12.0)
        sp.add_argument("--g-points", type=int, default=49)

    s = sub.add_parser("spectrum", help="tabulate number-state on-site energies against g")
    lattice(s)
    s.add_argument("--n-bosons", type=int, default=3)
    s.set_defaults(func=cmd_spectrum)

    r = sub.add_parser("resonances", help="locate crossings of an initial number state")
    lattice(r)
    r.add_argument("--initial", required=True, help="e.g. '|3,0,0>_0'")
    r.add_argument("--partner", action="append", required=True, help="e.g. '|2,1,0>[0,1,0]'")
    r.add_argument("--full-model", action="store_true", help="refine on the full Hamiltonian")
    r.set_defaults(func=cmd_resonances)

    u = sub.add_parser("run", help="run a built-in scenario or a config file")
    u.add_argument("scenario")
    u.add_argument("--no-figures", action="store_true")
    u.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TripleWellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
