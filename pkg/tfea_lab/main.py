#!/usr/bin/env python3
"""
tfea-lab - Transverse-field Edwards-Anderson ground-state laboratory

Commands:
- sample: Draw disorder realizations and write them to files
- classical: Exhaustive zero-field ground state per seed
- kt: Kirkwood-Thomas fixed-point solve per (seed, h)
- ed: Exact diagonalization per (seed, h)
- compare: KT versus ED report over a manifest
- sweep: Empirical convergence radius over an ascending h grid
- verify: Structural checks (uniqueness, positivity, Duhamel, contraction)

Usage:
    tfea-lab compare --dim 2 --size 6 --seeds 0-19 --h 0.05 --h 0.1 --out report.csv
    tfea-lab verify --manifest run.manifest
    tfea-lab kt --dim 2 --size 4 --seeds 3 --h 0.1 --trace trace.csv

Exit status: 0 success, 1 usage or configuration error, 2 verification
failure, 3 solver non-convergence.
"""

import argparse
import logging
import os
import sys
from typing import List, NoReturn, Optional

from .classical_ground import solve_classical
from .config import (
    KT_K_MAX,
    KT_MAX_ITER,
    KT_TOL,
    KT_W_MAX,
    LOG_LEVEL,
    WORKERS,
    validate_config,
)
from .disorder import save_sample
from .ed_oracle import build_hamiltonian, full_spectrum, ground_state_ed, write_spectrum
from .errors import ConvergenceError, DegenerateGroundStateError, TfeaError
from .harness import (
    COMPARE_COLUMNS,
    SWEEP_COLUMNS,
    VERIFY_COLUMNS,
    RunManifest,
    disorder_for,
    parse_seeds,
    render_report,
    run_compare,
    seed_list,
    sweep_h,
    verify_suite,
    write_report,
)
from .kt_solver import KTContext, solve_fixed_point, write_trace
from .lattice import build_lattice

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_NO_CONVERGENCE = 3

logger = logging.getLogger(__name__)


class UsageArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _parse_M(text: str) -> Optional[float]:
    if text == "auto":
        return None
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("M must be positive or 'auto'")
    return value


def manifest_from_args(args) -> RunManifest:
    """Load --manifest, or build a manifest from the flags."""
    if args.manifest:
        manifest = RunManifest.load(args.manifest)
        if args.out:
            manifest.out = args.out
    else:
        manifest = RunManifest(
            d=args.dim,
            L=args.size,
            seeds=parse_seeds(args.seeds),
            distribution=args.dist,
            J0=args.J0,
            J=args.J,
            h=args.h or [0.05],
            w_max=args.wmax,
            k_max=args.kmax,
            M=args.M,
            tol=args.tol,
            max_iter=args.max_iter,
            beta=args.beta or [1.0, 5.0, 10.0, 25.0, 50.0],
            probes=args.probes,
            disorder_file=args.disorder,
            out=args.out,
        )
    manifest.validate()
    if args.write_manifest:
        manifest.save(args.write_manifest)
        print(f"Manifest written to {args.write_manifest}")
    return manifest


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"Report written to {path}")
    else:
        sys.stdout.write(text)


def sample_command(args) -> int:
    """Handle the sample subcommand."""
    manifest = manifest_from_args(args)
    lat = build_lattice(manifest.d, manifest.L)
    directory = manifest.out or "disorder"
    for seed in manifest.seeds:
        dis = disorder_for(manifest, lat, seed)
        path = os.path.join(directory, f"disorder_d{lat.d}_L{lat.L}_seed{seed}.txt")
        save_sample(dis, lat, path)
        print(path)
    return EXIT_OK


def classical_command(args) -> int:
    """Handle the classical subcommand."""
    manifest = manifest_from_args(args)
    lat = build_lattice(manifest.d, manifest.L)
    print(f"{'seed':>6} {'E_cl':>20} {'gap1':>14} {'unique':>7} {'|D|':>4}")
    status = EXIT_OK
    for seed in seed_list(manifest):
        gs = solve_classical(lat, disorder_for(manifest, lat, seed))
        print(
            f"{seed:>6} {gs.E_cl:>20.12f} {gs.gap1:>14.6g} "
            f"{str(gs.unique):>7} {len(gs.D):>4}"
        )
        if not gs.unique:
            status = EXIT_VERIFY
    return status


def kt_command(args) -> int:
    """Handle the kt subcommand."""
    manifest = manifest_from_args(args)
    lat = build_lattice(manifest.d, manifest.L)
    cfg = manifest.solver_config(args.workers)
    status = EXIT_OK
    seeds = seed_list(manifest)
    for seed in seeds:
        dis = disorder_for(manifest, lat, seed)
        gs = solve_classical(lat, dis)
        base = KTContext.build(lat, dis, gs, 0.0, manifest.w_max, manifest.k_max)
        for h in manifest.h:
            try:
                _, diagnostics = solve_fixed_point(cfg, base.with_field(h))
            except ConvergenceError as e:
                print(
                    f"seed {seed} h={h}: no convergence "
                    f"after {len(e.trace)} iterations"
                )
                status = EXIT_NO_CONVERGENCE
                continue
            print(
                f"seed {seed} h={h}: E0={diagnostics.energy:.12f} "
                f"iterations={len(diagnostics.iterations)} "
                f"||g||={diagnostics.norm_g:.4g} "
                f"Delta={diagnostics.Delta:.4g} K={diagnostics.K:.4g} "
                f"lipschitz={diagnostics.empirical_lipschitz:.4g} "
                f"in_ball={diagnostics.within_ball}"
            )
            if args.trace:
                root, ext = os.path.splitext(args.trace)
                path = f"{root}_seed{seed}_h{h:g}{ext or '.csv'}"
                if len(manifest.h) * len(seeds) == 1:
                    path = args.trace
                write_trace(diagnostics, path)
                print(f"Trace written to {path}")
    return status


def ed_command(args) -> int:
    """Handle the ed subcommand."""
    manifest = manifest_from_args(args)
    lat = build_lattice(manifest.d, manifest.L)
    for seed in seed_list(manifest):
        dis = disorder_for(manifest, lat, seed)
        for h in manifest.h:
            Hf = build_hamiltonian(lat, dis, h)
            spectral = full_spectrum(Hf) if args.spectrum else ground_state_ed(Hf)
            print(
                f"seed {seed} h={h}: E0={spectral.E0:.12f} "
                f"E1={spectral.E1:.12f} gap={spectral.gap:.6g}"
            )
            if args.spectrum:
                root, ext = os.path.splitext(args.spectrum)
                path = f"{root}_seed{seed}_h{h:g}{ext or '.csv'}"
                write_spectrum(spectral, path)
                print(f"Spectrum written to {path}")
    return EXIT_OK


def compare_command(args) -> int:
    """Handle the compare subcommand."""
    manifest = manifest_from_args(args)
    rows = run_compare(manifest, workers=args.workers)
    _emit(render_report(rows, COMPARE_COLUMNS, manifest), manifest.out)
    failed = [row for row in rows if row.get("status") != "ok"]
    if failed:
        print(f"{len(failed)} of {len(rows)} cells did not complete", file=sys.stderr)
    if any(row.get("status") == "no-convergence" for row in rows):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def sweep_command(args) -> int:
    """Handle the sweep subcommand."""
    manifest = manifest_from_args(args)
    rows = sweep_h(manifest, workers=args.workers)
    _emit(render_report(rows, SWEEP_COLUMNS, manifest), manifest.out)
    return EXIT_OK


def verify_command(args) -> int:
    """Handle the verify subcommand."""
    manifest = manifest_from_args(args)
    summary = verify_suite(manifest, workers=args.workers)
    if manifest.out:
        write_report(summary.rows(), VERIFY_COLUMNS, manifest, manifest.out)
        print(f"Report written to {manifest.out}")
    for check in summary.checks:
        mark = check.status.upper()
        field = "" if check.h is None else f" h={check.h:g}"
        print(f"[{mark}] seed {check.seed}{field} {check.check}: {check.detail}")
    total = len(summary.checks)
    print(f"{total - len(summary.failures)}/{total} checks passed")
    return EXIT_OK if summary.passed else EXIT_VERIFY


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--dim", type=int, default=2, help="Lattice dimension (default: 2)"
    )
    common.add_argument(
        "--size", type=int, default=6, help="Even linear size L (default: 6)"
    )
    common.add_argument("--seeds", default="0", help="Seeds, e.g. '0,3,5' or '0-19'")
    common.add_argument(
        "--dist",
        choices=["gaussian", "uniform", "constant"],
        default="gaussian",
        help="Coupling distribution (default: gaussian)",
    )
    common.add_argument(
        "--J0", type=float, default=0.0, help="Mean coupling (default: 0)"
    )
    common.add_argument(
        "--J", type=float, default=1.0, help="Coupling spread (default: 1)"
    )
    common.add_argument(
        "--h",
        type=float,
        action="append",
        help="Transverse field; repeat for several values",
    )
    common.add_argument(
        "--wmax",
        type=int,
        default=KT_W_MAX,
        help=f"Truncation weight (default: TFEA_KT_W_MAX = {KT_W_MAX})",
    )
    common.add_argument(
        "--kmax",
        type=int,
        default=KT_K_MAX,
        help=f"exp2 order (default: TFEA_KT_K_MAX = {KT_K_MAX})",
    )
    common.add_argument(
        "--M",
        type=_parse_M,
        default=None,
        help="Norm scale or 'auto' = 1/(2|h|) (default: auto)",
    )
    common.add_argument(
        "--tol",
        type=float,
        default=KT_TOL,
        help=f"Stopping tolerance (default: TFEA_KT_TOL = {KT_TOL:g})",
    )
    common.add_argument(
        "--max-iter",
        type=int,
        default=KT_MAX_ITER,
        help=f"Iteration cap (default: TFEA_KT_MAX_ITER = {KT_MAX_ITER})",
    )
    common.add_argument(
        "--beta",
        type=float,
        action="append",
        help="Inverse temperature for Duhamel checks",
    )
    common.add_argument(
        "--probes", type=int, default=20, help="Contraction probe pairs"
    )
    common.add_argument("--disorder", help="Use couplings from a disorder file")
    common.add_argument("--out", help="Output file (or directory for 'sample')")
    common.add_argument("--manifest", help="Load all run inputs from a manifest file")
    common.add_argument(
        "--write-manifest", help="Store the effective manifest at this path"
    )
    common.add_argument(
        "--workers",
        type=int,
        default=WORKERS,
        help="Worker threads (default: TFEA_WORKERS)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_arguments()
    parser = UsageArgumentParser(
        prog="tfea-lab",
        description="Transverse-field Edwards-Anderson ground-state laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    subparsers = parser.add_subparsers(
        dest="command", help="Available commands", parser_class=UsageArgumentParser
    )

    sample_parser = subparsers.add_parser(
        "sample", parents=[common], help="Write disorder realizations to files"
    )
    sample_parser.set_defaults(func=sample_command)

    classical_parser = subparsers.add_parser(
        "classical", parents=[common], help="Solve the zero-field ground state"
    )
    classical_parser.set_defaults(func=classical_command)

    kt_parser = subparsers.add_parser(
        "kt", parents=[common], help="Run the KT fixed-point solver"
    )
    kt_parser.add_argument("--trace", help="Write the per-iteration trace as CSV")
    kt_parser.set_defaults(func=kt_command)

    ed_parser = subparsers.add_parser(
        "ed", parents=[common], help="Exact diagonalization"
    )
    ed_parser.add_argument(
        "--spectrum", help="Dump the full spectrum as CSV (dense sizes)"
    )
    ed_parser.set_defaults(func=ed_command)

    compare_parser = subparsers.add_parser(
        "compare", parents=[common], help="Compare KT against ED over a manifest"
    )
    compare_parser.set_defaults(func=compare_command)

    sweep_parser = subparsers.add_parser(
        "sweep", parents=[common], help="Probe the convergence radius in h"
    )
    sweep_parser.set_defaults(func=sweep_command)

    verify_parser = subparsers.add_parser(
        "verify", parents=[common], help="Run the verification suite"
    )
    verify_parser.set_defaults(func=verify_command)
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for tfea-lab."""
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)

    # If no command is provided, show help
    if not args.command:
        parser.print_help()
        sys.exit(EXIT_USAGE)

    validate_config()

    try:
        code = args.func(args)
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.")
        sys.exit(EXIT_OK)
    except ConvergenceError as e:
        print(f"Error: {e}")
        sys.exit(EXIT_NO_CONVERGENCE)
    except DegenerateGroundStateError as e:
        print(f"Error: {e}")
        sys.exit(EXIT_VERIFY)
    except (TfeaError, ValueError, OSError) as e:
        print(f"Error: {e}")
        sys.exit(EXIT_USAGE)
    except Exception as e:  # pylint: disable=broad-except
        print(f"Unexpected error: {e}")
        sys.exit(EXIT_USAGE)
    sys.exit(code)


if __name__ == "__main__":
    main()
