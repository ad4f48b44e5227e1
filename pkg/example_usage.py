#!/usr/bin/env python3
"""
Example script demonstrating how to use the tfea-lab modules.

This shows how individual components can be used independently or together.
"""

from tfea_lab import (
    KTContext,
    RunManifest,
    SolverConfig,
    SubsetKey,
    build_hamiltonian,
    build_lattice,
    connected_weight,
    enumerate_truncation,
    ground_state_ed,
    overlap,
    run_compare,
    sample_disorder,
    solve_classical,
    solve_fixed_point,
    validate_config,
    verify_suite,
    wavefunction_amplitudes,
)


def example_lattice_usage():
    """Example of the lattice geometry and the truncation."""
    print("=== Lattice Example ===")

    lat = build_lattice(2, 6)
    print(f"d={lat.d} L={lat.L}: {lat.n_interior} interior sites, {lat.n_bonds} bonds")

    corners = SubsetKey.from_sites([0, lat.n_interior - 1])
    print(f"Connected weight of two opposite corners: {connected_weight(lat, corners)}")

    keys = enumerate_truncation(lat, w_max=3)
    print(f"Subsets with connected weight <= 3: {len(keys)}")


def example_classical_usage():
    """Example of drawing disorder and solving the zero-field problem."""
    print("\n=== Classical Ground State Example ===")

    lat = build_lattice(2, 4)
    dis = sample_disorder(lat, seed=7)
    gs = solve_classical(lat, dis)
    print(f"E_cl={gs.E_cl:.6f} gap={gs.gap1:.4f} unique={gs.unique} |D|={len(gs.D)}")


def example_kt_usage():
    """Example of a Kirkwood-Thomas solve checked against exact diagonalization."""
    print("\n=== Kirkwood-Thomas Example ===")

    h = 0.05
    lat = build_lattice(2, 4)
    dis = sample_disorder(lat, seed=7)
    gs = solve_classical(lat, dis)
    if not gs.unique:
        print("Seed 7 is degenerate on this lattice; pick another seed.")
        return

    context = KTContext.build(lat, dis, gs, h=h, w_max=4, k_max=6)
    state, diagnostics = solve_fixed_point(SolverConfig(), context)
    print(f"KT: E0={diagnostics.energy:.12f} after {len(diagnostics.iterations)} steps")
    print(f"    ||g||={diagnostics.norm_g:.4g} K={diagnostics.K:.4g}")

    sr = ground_state_ed(build_hamiltonian(lat, dis, h))
    print(f"ED: E0={sr.E0:.12f} gap={sr.gap:.4g}")
    print(f"Overlap: {overlap(sr, wavefunction_amplitudes(state, gs)):.10f}")


def example_harness_usage():
    """Example of the ensemble drivers."""
    print("\n=== Harness Example ===")

    manifest = RunManifest(d=2, L=4, seeds=[0, 1, 2], h=[0.02, 0.05])
    for row in run_compare(manifest):
        print(f"seed {row['seed']} h={row['h']}: {row['status']} {row.get('rel_error')}")

    summary = verify_suite(RunManifest(d=2, L=4, seeds=[0], h=[0.02], probes=5))
    print(f"{len(summary.checks) - len(summary.failures)}/{len(summary.checks)} checks passed")


def example_cli_usage():
    """Example of CLI usage."""
    print("\n=== CLI Usage Examples ===")

    print("Available CLI commands:")
    print("  tfea-lab sample --dim 2 --size 6 --seeds 0-19 --out disorder")
    print("  tfea-lab classical --dim 2 --size 6 --seeds 0-4")
    print("  tfea-lab kt --dim 2 --size 4 --seeds 3 --h 0.1 --trace trace.csv")
    print("  tfea-lab ed --dim 2 --size 4 --h 0.1 --spectrum spectrum.csv")
    print("  tfea-lab compare --dim 2 --size 6 --seeds 0-19 --h 0.05 --out report.csv")
    print("  tfea-lab sweep --dim 2 --size 4 --h 0.05 --h 0.1 --h 0.2 --h 0.4")
    print("  tfea-lab verify --manifest run.manifest")
    print("")
    print("Module entry point:")
    print("  python -m tfea_lab verify --dim 2 --size 4 --h 0.02")


if __name__ == "__main__":
    print("tfea-lab - Module Examples")
    print("=" * 50)

    try:
        validate_config()
        example_lattice_usage()
        example_classical_usage()
        example_kt_usage()
        example_harness_usage()
        example_cli_usage()

        print("\n" + "=" * 50)
        print("All examples completed successfully!")
        print("\nTo compare KT against ED over an ensemble, use:")
        print("tfea-lab compare --dim 2 --size 6 --seeds 0-19 --h 0.05")

    except Exception as e:
        print(f"\nError running examples: {e}")
        print("Make sure your .env file is configured correctly.")
