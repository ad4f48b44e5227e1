"""
tfea-lab

A solver and verification laboratory for the ground state of the
transverse-field Edwards-Anderson model on finite hypercubic lattices.

This package provides:
- Lattice geometry and the subset algebra (boundaries, symmetric
  differences, connected weights)
- Reproducible disorder samples with a plain-text file format
- The zero-field classical ground state under + boundary conditions
- The Kirkwood-Thomas fixed-point solver with contraction diagnostics
- An exact-diagonalization oracle with Duhamel correlations
- An experiment harness and the tfea-lab CLI

Example usage:
    from tfea_lab import (
        KTContext, SolverConfig, build_lattice, sample_disorder,
        solve_classical, solve_fixed_point,
    )

    lat = build_lattice(2, 6)
    dis = sample_disorder(lat, seed=7)
    gs = solve_classical(lat, dis)
    context = KTContext.build(lat, dis, gs, h=0.05)
    state, diagnostics = solve_fixed_point(SolverConfig(), context)
"""

from tfea_lab.classical_ground import (
    ClassicalGroundState,
    SpinConfig,
    excitation_energy,
    solve_classical,
    verify_bond_consistency,
)
from tfea_lab.config import validate_config
from tfea_lab.disorder import DisorderSample, load_sample, sample_disorder, save_sample
from tfea_lab.ed_oracle import (
    FrozenHamiltonian,
    SpectralResult,
    build_hamiltonian,
    duhamel,
    duhamel_decay_check,
    ground_state_ed,
    overlap,
)
from tfea_lab.harness import RunManifest, run_compare, sweep_h, verify_suite
from tfea_lab.kt_solver import (
    ContractionDiagnostics,
    KTContext,
    KTState,
    SolverConfig,
    apply_F,
    bond_local_exponential,
    contraction_check,
    delta_over_Delta_root,
    ground_energy,
    kt_norm,
    solve_fixed_point,
    wavefunction_amplitudes,
)
from tfea_lab.lattice import (
    Lattice,
    SubsetKey,
    bond_boundary,
    build_lattice,
    connected_weight,
    enumerate_truncation,
    sym_diff,
)

__version__ = "1.0.0"

__all__ = [
    "ClassicalGroundState",
    "ContractionDiagnostics",
    "DisorderSample",
    "FrozenHamiltonian",
    "KTContext",
    "KTState",
    "Lattice",
    "RunManifest",
    "SolverConfig",
    "SpectralResult",
    "SpinConfig",
    "SubsetKey",
    "apply_F",
    "bond_boundary",
    "bond_local_exponential",
    "build_hamiltonian",
    "build_lattice",
    "connected_weight",
    "contraction_check",
    "delta_over_Delta_root",
    "duhamel",
    "duhamel_decay_check",
    "enumerate_truncation",
    "excitation_energy",
    "ground_energy",
    "ground_state_ed",
    "kt_norm",
    "load_sample",
    "overlap",
    "run_compare",
    "sample_disorder",
    "save_sample",
    "solve_classical",
    "solve_fixed_point",
    "sweep_h",
    "sym_diff",
    "validate_config",
    "verify_bond_consistency",
    "verify_suite",
    "wavefunction_amplitudes",
]
