"""Command-line entry points.

Exit codes:

    0  success, every applicable check passed
    1  at least one diagnostic check failed
    2  usage error (bad flags or arguments)
    3  configuration error
    4  checkpoint error
    5  numerical failure (overflow, singular linear algebra)
    6  solver did not converge
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load, save
from .conformal import MobiusMap, bubble_family, map_points, pullback_coupling_density, pullback_scalar
from .config import ConfigError, RunConfig, load_config
from .diagnostics import DiagnosticOptions, run_diagnostics
from .dirac import SpinorState, build_basis, killing_spinor, spectrum_table
from .functional import OverflowGuardError, SolutionPair, s_functional
from .geometry import GridError, ball_mass_map, build_grid, integrate
from .harmonics import MT_VARIANTS, MTPreconditionError, mt_check, random_field
from .solver import minimize

EXIT_OK, EXIT_CHECKS, EXIT_USAGE, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_NUMERICAL, EXIT_NOT_CONVERGED = range(7)
OUTPUT_ENV = "SUPERLIOUVILLE_OUTPUT_DIR"
DEFAULT_OUTPUT = "superliouville-out"

log = logging.getLogger("superliouville")


class UsageError(Exception):
    pass


def output_dir(arg: str | None) -> Path:
    """``--output-dir`` wins, then the environment variable, then the default."""
    path = Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _options(cfg: RunConfig | None = None) -> DiagnosticOptions:
    return DiagnosticOptions(radii=tuple(cfg.radii)) if cfg else DiagnosticOptions()


# -- subcommands -----------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    sc = cfg.solve
    grid = build_grid(sc.L)
    h1 = cfg.h1.build(grid)
    h2 = cfg.h2.build(grid)
    if args.rho is not None:
        h2 = type(h2).constant(grid, args.rho)
    out = output_dir(args.output_dir)
    records = []
    result = minimize(sc, h1, h2, callback=records.append)
    stem = args.name
    with open(out / f"{stem}.iterations.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    prov = {"config_hash": cfg.hash(), "seed": sc.seed}
    save(result.state, out / f"{stem}.ckpt", prov)
    report = run_diagnostics(result.state, _options(cfg), extra={"solve": result.summary(), "config_hash": cfg.hash()})
    (out / f"{stem}.report.json").write_text(report.to_json())
    print(f"energy={result.energy:.12g} converged={result.converged} iterations={result.iterations} ({result.message})")
    print(f"checkpoint: {out / f'{stem}.ckpt'}")
    if not result.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if report.passed else EXIT_CHECKS


def _report_for(path) -> tuple:
    ck = load(path)
    return ck, run_diagnostics(ck.state, _options())


def cmd_verify(args) -> int:
    ck, report = _report_for(args.checkpoint)
    if args.report:
        Path(args.report).write_text(report.to_json())
    for name, status in sorted(report.checks.items()):
        print(f"{status:>15}  {name}")
    print("PASSED" if report.passed else f"FAILED: {', '.join(report.failures())}")
    return EXIT_OK if report.passed else EXIT_CHECKS


def cmd_report(args) -> int:
    ck, report = _report_for(args.checkpoint)
    text = report.to_json()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_CHECKS


def cmd_spectrum(args) -> int:
    if args.band < 1:
        raise UsageError("--band must be at least 1")
    table = spectrum_table(args.band)
    if args.verify:
        L = max(16, args.band - 1)
        basis = build_basis(build_grid(L), args.band)
        if basis.multiplicities() != table:
            print("constructed basis disagrees with the expected table", file=sys.stderr)
            return EXIT_CHECKS
    if args.json:
        _emit({str(k): v for k, v in table.items()})
    else:
        print("eigenvalue  complex_multiplicity")
        for lam, mult in table.items():
            print(f"{lam:+10d}  {mult}")
    return EXIT_OK


def cmd_mt_check(args) -> int:
    variants = MT_VARIANTS if args.variant == "all" else (args.variant,)
    grid = build_grid(args.L)
    summary = {}
    failed = False
    for variant in variants:
        rng = np.random.default_rng(args.seed)
        violations, precondition, worst = 0, 0, np.inf
        for _ in range(args.samples):
            f = random_field(grid, args.band, rng, even=variant in ("even", "centroid_sharp"))
            try:
                r = mt_check(f, variant)
            except MTPreconditionError:
                precondition += 1
                continue
            violations += not r.satisfied
            worst = min(worst, r.margin)
        summary[variant] = {"samples": args.samples, "violations": violations, "precondition_failures": precondition, "min_log_margin": worst}
        failed |= violations > 0 or precondition > 0
    _emit(summary)
    return EXIT_CHECKS if failed else EXIT_OK


def cmd_conformal(args) -> int:
    ck = load(args.checkpoint)
    st = ck.state
    grid = st.grid
    if args.map is not None:
        maps = [MobiusMap.from_reals(args.map)]
    else:
        rng = np.random.default_rng(args.seed)
        maps = [MobiusMap.random(rng, args.max_log_t) for _ in range(args.count)]
    s0 = s_functional(st.u)
    mass0 = integrate(grid, st.h1.values * np.exp(2 * st.u.values))
    coup0 = integrate(grid, np.exp(st.u.values) * st.psi.density)
    rows, ok = [], True
    for M in maps:
        up = pullback_scalar(st.u, M)
        h1p = st.h1.evaluate(map_points(M, grid.nodes).reshape(-1, 3)).reshape(grid.shape)
        mass = integrate(grid, h1p * np.exp(2 * up.values))
        coup = integrate(grid, pullback_coupling_density(st.u, st.psi, M))
        row = {
            "map": M.to_reals(),
            "kind": M.kind,
            "s_error": abs(s_functional(up) - s0),
            "mass_rel_error": abs(mass - mass0) / abs(mass0),
            "coupling_rel_error": abs(coup - coup0) / max(abs(coup0), 1e-300) if coup0 else abs(coup),
        }
        ok &= row["s_error"] <= args.tol and row["mass_rel_error"] <= args.tol and row["coupling_rel_error"] <= args.tol
        rows.append(row)
    _emit({"maps": len(rows), "passed": bool(ok), "worst": {k: max(r[k] for r in rows) for k in ("s_error", "mass_rel_error", "coupling_rel_error")}})
    return EXIT_OK if ok else EXIT_CHECKS


def special_state(name: str, L: int, band: int, rho: float = 2.0, t: float = 2.0, Q=(0.0, 0.0, 1.0), normalization: str = "h1_eq_1") -> SolutionPair:
    """Closed-form states: ``rho-family``, ``trivial`` and ``bubble``."""
    from .harmonics import ScalarField

    grid = build_grid(L)
    basis = build_basis(grid, band)
    one = ScalarField.constant(grid, 1.0)
    if name == "rho-family":
        if rho < 1:
            raise UsageError("the rho-family needs rho >= 1")
        u = ScalarField.constant(grid, -np.log(rho))
        psi = killing_spinor(basis) * (np.sqrt(rho**2 - 1.0) / rho)
        return SolutionPair(u, psi, one, ScalarField.constant(grid, rho))
    if name == "trivial":
        return SolutionPair(ScalarField.constant(grid, 0.0), SpinorState.zero(basis), one, one)
    if name == "bubble":
        u = bubble_family(grid, Q, t, normalization).truncated(L)
        h1 = ScalarField.constant(grid, 2.0 if normalization == "h1_eq_2" else 1.0)
        return SolutionPair(u, SpinorState.zero(basis), h1, one)
    raise UsageError(f"unknown special solution {name!r}")


def cmd_special(args) -> int:
    st = special_state(args.name, args.L, args.band, args.rho, args.t, tuple(args.Q), args.normalization)
    out = output_dir(args.output_dir)
    path = save(st, out / f"{args.name}.ckpt", {"special": args.name, "rho": args.rho, "t": args.t})
    print(path)
    return EXIT_OK


def cmd_concentration(args) -> int:
    st = load(args.checkpoint).state
    grid = st.grid
    m = ball_mass_map(grid, st.mass_density(), args.radius)
    target = Path(args.csv) if args.csv else output_dir(args.output_dir) / "concentration.csv"
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "phi", "x", "y", "z", "ball_mass"])
        nodes = grid.nodes
        for i, th in enumerate(grid.theta):
            for j, ph in enumerate(grid.phi):
                w.writerow([repr(float(th)), repr(float(ph)), *(repr(float(v)) for v in nodes[i, j]), repr(float(m[i, j]))])
    print(f"max ball mass at r={args.radius}: {m.max():.12g} (threshold 2*pi = {2 * np.pi:.12g}); map: {target}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="superliouville", description="Spectral solver and verification suite for the super-Liouville system on S^2.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="minimise the energy and write checkpoint and report")
    s.add_argument("--config", help="flat key = value configuration file")
    s.add_argument("--rho", type=float, help="override h2 with this constant")
    s.add_argument("--name", default="solve", help="output file stem")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="re-run diagnostics on a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--report", help="also write the JSON report here")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="print the JSON diagnostics report of a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--output", help="write to this file instead of stdout")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("spectrum", help="Dirac eigenvalues and multiplicities")
    s.add_argument("--band", type=int, required=True)
    s.add_argument("--json", action="store_true")
    s.add_argument("--verify", action="store_true", help="build the basis and compare with the table")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("mt-check", help="Moser-Trudinger inequalities on random fields")
    s.add_argument("--variant", choices=(*MT_VARIANTS, "all"), default="all")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--L", type=int, default=16, help="grid band")
    s.add_argument("--band", type=int, default=8, help="band of the random fields")
    s.set_defaults(func=cmd_mt_check)

    s = sub.add_parser("conformal", help="check conformal invariances of a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--map", type=float, nargs=8, metavar="R", help="Mobius matrix as 8 reals, row-major (re, im)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--max-log-t", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_conformal)

    s = sub.add_parser("special", help="write a closed-form solution as a checkpoint")
    s.add_argument("--name", choices=("rho-family", "trivial", "bubble"), required=True)
    s.add_argument("--rho", type=float, default=2.0)
    s.add_argument("--t", type=float, default=2.0)
    s.add_argument("--Q", type=float, nargs=3, default=(0.0, 0.0, 1.0))
    s.add_argument("--normalization", choices=("h1_eq_1", "h1_eq_2"), default="h1_eq_1")
    s.add_argument("--L", type=int, default=16)
    s.add_argument("--band", type=int, default=4)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_special)

    s = sub.add_parser("concentration", help="ball-mass map of a checkpoint as CSV")
    s.add_argument("checkpoint")
    s.add_argument("--radius", type=float, default=0.5)
    s.add_argument("--csv")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_concentration)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (OverflowGuardError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
