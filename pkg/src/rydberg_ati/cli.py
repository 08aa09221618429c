"""Command-line entry point: ``rydberg-ati {scan,verify,fit-c3c6,fidelity-table}``.

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import parse_config
from .textio import ConfigError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
TWO_PI = 2 * math.pi


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="run configuration file (defaults if omitted)")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--seed", type=int, help="seed for Monte Carlo diagnostics")
    p.add_argument("--species", type=Path, help="species data file (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydberg-ati", description="Autler-Townes imaging of Rydberg excitations in a pair-state model.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="full scan, tables, figures and manifest")
    _common(p)
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("verify", help="run the acceptance criteria")
    _common(p)
    p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance band (0.5 halves it)")
    p.add_argument("--only", type=int, nargs="+", metavar="N", help="run only these criterion numbers")

    p = sub.add_parser("fit-c3c6", help="fit C3 and C6 to the Rydberg pair shift")
    _common(p)

    p = sub.add_parser("fidelity-table", help="detection fidelity for each atom number")
    _common(p)
    p.add_argument("--transfer", type=float, help="sample transfer with the control excited (skips the scan)")
    p.add_argument("--baseline", type=float, help="sample transfer with the control in the ground state")
    p.add_argument("--probe-time", type=float, help="probe time t0 in us")
    return parser


def _load(args):
    cfg = parse_config(args.config)
    changes = {}
    if args.species is not None:
        if not args.species.is_file():
            raise ConfigError(f"species file not found: {args.species}")
        changes["species_path"] = str(args.species.resolve())
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        changes["workers"] = args.workers
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output"] = str(args.out)
    cfg = replace(cfg, **changes)
    if args.command != "verify":
        cfg.species()  # fail early; verify reports it as a failed criterion instead
    return cfg


def cmd_scan(cfg, args) -> int:
    from .runner import compute_bundle, write_bundle

    t = time.perf_counter()
    bundle = compute_bundle(cfg)
    manifest = write_bundle(bundle, Path(cfg.output), figures=not args.no_figures)
    print(f"wrote {len(manifest['files'])} files and manifest.json to {cfg.output} in {time.perf_counter() - t:.1f} s")
    for f in bundle.failures:
        print(f"failure: {f}", file=sys.stderr)
    return EXIT_NUMERIC if bundle.failures else EXIT_OK


def cmd_verify(cfg, args) -> int:
    from .verify import Verifier, report

    t = time.perf_counter()
    v = Verifier(cfg, args.tolerance_scale)
    verdicts = v.run(set(args.only) if args.only else None)
    print(report(verdicts, v.info, time.perf_counter() - t))
    if all(x.passed for x in verdicts):
        return EXIT_OK
    return EXIT_NUMERIC if any(x.numerical for x in verdicts) else EXIT_INVALID


def cmd_fit(cfg, args) -> int:
    from .runner import fit_interaction

    fit = fit_interaction(cfg)
    print(f"C3 = {fit.c3:.6f} MHz um^3 on R in {fit.window3} um ({fit.points[0]} points, relative residual {fit.residual3:.3g})")
    print(f"C6 = {fit.c6:.6f} MHz um^6 on R in {fit.window6} um ({fit.points[1]} points, relative residual {fit.residual6:.3g})")
    if args.out is not None:
        from .runner import ScanBundle, write_bundle

        write_bundle(ScanBundle(cfg, [], fit=fit), Path(cfg.output), figures=False)
        print(f"wrote {cfg.output}/two_level_shift.tsv")
    return EXIT_OK


def cmd_fidelity(cfg, args) -> int:
    from .runner import OperatingPoint, ScanBundle, fidelity_report, operating_point, run_scans, write_bundle

    if args.probe_time is not None:
        cfg = replace(cfg, fidelity=replace(cfg.fidelity, probe_time=args.probe_time))
    if (args.transfer is None) != (args.baseline is None):
        raise ConfigError("--transfer and --baseline go together")
    if args.transfer is not None:
        for name, val in (("transfer", args.transfer), ("baseline", args.baseline)):
            if not 0 <= val < 1:
                raise ConfigError(f"--{name} must lie in [0, 1)")
        point = OperatingPoint(float("nan"), args.transfer, args.baseline, args.transfer / args.baseline if args.baseline else math.inf, "given")
        failures = []
    else:
        scans, failures = run_scans(cfg, [cfg.fidelity_coupling], spectrum=False)
        if failures:
            for f in failures:
                print(f"failure: {f}", file=sys.stderr)
            return EXIT_NUMERIC
        point = operating_point(scans[0], cfg.ratio_target)
    rows, times = fidelity_report(cfg, point)
    print(f"# P = {point.transfer:.6f}, P_noRyd = {point.baseline:.6f} ({point.rule}), t0 = {cfg.fidelity.probe_time:g} us, histogram = {cfg.fidelity.histogram}")
    print("atoms\tthreshold\tP_rr\tP_gg\tfidelity\toverlap")
    for r in rows:
        d = r.detection
        print(f"{r.atoms}\t{d.threshold}\t{d.p_rr:.4f}\t{d.p_gg:.4f}\t{r.fidelity:.4f}\t{r.overlap:.4f}")
    if args.out is not None:
        write_bundle(ScanBundle(cfg, [], operating=point, fidelity=rows, infidelity_time=times), Path(cfg.output), figures=False)
        print(f"wrote {cfg.output}/fidelity_table.tsv")
    return EXIT_OK


COMMANDS = {"scan": cmd_scan, "verify": cmd_verify, "fit-c3c6": cmd_fit, "fidelity-table": cmd_fidelity}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
