"""
Tests for the Kirkwood-Thomas fixed-point solver.
"""

import csv
import itertools
import math
import os
import tempfile
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from tfea_lab.classical_ground import excitation_energy, solve_classical
from tfea_lab.disorder import DisorderSample, load_sample, sample_disorder
from tfea_lab.ed_oracle import (
    build_hamiltonian,
    ground_state_ed,
    overlap,
    rotate_to_kt_frame,
)
from tfea_lab.errors import (
    ConvergenceError,
    DegenerateGroundStateError,
    FieldBoundError,
    LatticeError,
    SizeCapError,
)
from tfea_lab.kt_solver import (
    KTContext,
    KTState,
    SolverConfig,
    _stagnated,
    apply_F,
    averaged_gap,
    bond_local_exponential,
    contraction_check,
    delta_over_Delta_root,
    ground_energy,
    kt_norm,
    lipschitz_bound,
    perturbative_energy_shift,
    random_admissible,
    residual,
    single_site_fixed_point,
    solve_fixed_point,
    wavefunction_amplitudes,
    weakest_excitation,
    write_trace,
)
from tfea_lab.lattice import EMPTY, SubsetKey, build_lattice

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def key(*sites):
    return SubsetKey.from_sites(sites)


def isolated_sites(Jl=1.0, Jr=1.5):
    """Two interior sites decoupled by a zero bond, each tied to the boundary."""
    lat = build_lattice(1, 4)
    dis = DisorderSample.from_values(lat, [Jl, 0.0, Jr])
    return lat, dis, solve_classical(lat, dis)


def ferromagnet(d=2, L=4):
    lat = build_lattice(d, L)
    dis = sample_disorder(lat, distribution="constant", J0=1.0)
    return lat, dis, solve_classical(lat, dis)


def spin_glass(seed, d=2, L=4):
    lat = build_lattice(d, L)
    dis = sample_disorder(lat, seed=seed)
    return lat, dis, solve_classical(lat, dis)


class TestSolverConfig:
    """Test cases for solver configuration."""

    def test_auto_M(self):
        """Test that M defaults to 1/(2|h|) and to 1 at h = 0."""
        assert SolverConfig().resolve(0.25).M == pytest.approx(2.0)
        assert SolverConfig().resolve(-0.25).M == pytest.approx(2.0)
        assert SolverConfig().resolve(0.0).M == 1.0
        assert SolverConfig().resolve(0.25).delta == pytest.approx(2.0)

    def test_explicit_M_kept(self):
        """Test that an explicit M is not overridden."""
        assert SolverConfig(M=3.0).resolve(0.1).M == 3.0

    @pytest.mark.parametrize(
        "kwargs", [{"M": 0.0}, {"M": -1.0}, {"k_max": 1}, {"w_max": 0}]
    )
    def test_invalid(self, kwargs):
        """Test that out-of-range parameters are rejected."""
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_unresolved_delta(self):
        """Test that delta needs a resolved M."""
        with pytest.raises(ValueError):
            _ = SolverConfig().delta

    def test_field_bound(self):
        """Test that |h| M > 1 raises FieldBoundError."""
        SolverConfig(M=2.0).check_field(0.5)
        with pytest.raises(FieldBoundError):
            SolverConfig(M=2.0).check_field(0.6)


class TestContextAndState:
    """Test cases for the truncation context and coefficient states."""

    def test_denominators_are_half_excitations(self):
        """Test that denominators equal half the flip cost of each key."""
        lat, dis, gs = spin_glass(0)
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=4)
        assert context.n_keys == 15
        for mask, denominator in zip(context.keys, context.denominators):
            X = SubsetKey(int(mask))
            assert 2 * denominator == pytest.approx(excitation_energy(gs, dis, lat, X))
        assert weakest_excitation(context) == pytest.approx(gs.gap1 / 2)

    def test_degenerate_rejected(self):
        """Test that a degenerate classical ground state is refused."""
        lat = build_lattice(1, 6)
        dis = DisorderSample.from_values(lat, [1.0, 1.0, -1.0, 1.0, 1.0])
        with pytest.raises(DegenerateGroundStateError):
            KTContext.build(lat, dis, solve_classical(lat, dis), h=0.1)

    def test_tiny_excitation_rejected(self):
        """Test that a unique ground state with a near-zero excitation is refused."""
        lat = build_lattice(1, 6)
        dis = DisorderSample.from_values(lat, [1.0, 1.0, -1.0, 1.0, 1.0 + 1e-11])
        gs = solve_classical(lat, dis)
        assert gs.unique
        with pytest.raises(DegenerateGroundStateError):
            KTContext.build(lat, dis, gs, h=0.1)

    def test_from_mapping(self):
        """Test explicit coefficients and the lookup of absent keys."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=2)
        state = KTState.from_mapping(context, {key(0): 0.5, key(0, 1): -0.25})
        assert state.g == {key(0): 0.5, key(0, 1): -0.25}
        assert state.active_count == 2
        assert state[key(3)] == 0.0
        assert state[key(0, 3)] == 0.0
        assert (state.h, state.w_max, state.k_max) == (0.1, 2, context.k_max)

    def test_from_mapping_outside_truncation(self):
        """Test that the empty set and heavy sets cannot be given coefficients."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=1)
        with pytest.raises(LatticeError):
            KTState.from_mapping(context, {EMPTY: 1.0})
        with pytest.raises(LatticeError):
            KTState.from_mapping(context, {key(0, 1): 1.0})

    def test_state_shape(self):
        """Test that states need one real value per key."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=1)
        with pytest.raises(ValueError):
            KTState(context, np.zeros(3))
        with pytest.raises(ValueError):
            KTState(context, np.zeros(4, dtype=complex))


class TestBondLocalExponential:
    """Test cases for the truncated exponential on one bond."""

    def test_single_coefficient(self):
        """Test exp2(a sigma) = (cosh a - 1) + (sinh a - a) sigma."""
        lat, dis, gs = isolated_sites()
        context = KTContext.build(lat, dis, gs, h=0.3, w_max=2, k_max=16)
        a = 0.7
        series = bond_local_exponential(0, KTState.from_mapping(context, {key(0): a}))
        assert set(series) == {EMPTY, key(0)}
        assert series[EMPTY] == pytest.approx(math.cosh(a) - 1.0, abs=1e-14)
        assert series[key(0)] == pytest.approx(math.sinh(a) - a, abs=1e-14)

    def test_zero_state(self):
        """Test that exp2(0) has no terms."""
        lat, dis, gs = isolated_sites()
        context = KTContext.build(lat, dis, gs, h=0.3, w_max=2)
        assert bond_local_exponential(1, KTState.zeros(context)) == {}

    def test_products_outside_truncation_dropped(self):
        """Test that sigma_0 sigma_1 is dropped when pairs are not in the truncation."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=1, k_max=2)
        b = lat.bond_index(lat.interior[0], lat.interior[1])
        state = KTState.from_mapping(context, {key(0): 0.2, key(1): 0.3})
        series = bond_local_exponential(b, state)
        assert set(series) == {EMPTY}
        assert series[EMPTY] == pytest.approx((0.2**2 + 0.3**2) / 2)

    def test_products_inside_truncation_kept(self):
        """Test that the cross term appears once pairs are allowed."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=2, k_max=2)
        b = lat.bond_index(lat.interior[0], lat.interior[1])
        state = KTState.from_mapping(context, {key(0): 0.2, key(1): 0.3})
        series = bond_local_exponential(b, state)
        assert series[key(0, 1)] == pytest.approx(0.2 * 0.3)

    def test_tuples_through_heavy_sets(self):
        """Test that third-order tuples passing through sigma_{01} still count."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=1, k_max=3)
        b = lat.bond_index(lat.interior[0], lat.interior[1])
        a, c = 0.2, 0.3
        state = KTState.from_mapping(context, {key(0): a, key(1): c})
        series = bond_local_exponential(b, state)
        assert series[EMPTY] == pytest.approx((a**2 + c**2) / 2)
        assert series[key(0)] == pytest.approx((a**3 + 3 * a * c**2) / 6)
        assert series[key(1)] == pytest.approx((c**3 + 3 * a**2 * c) / 6)

    @pytest.mark.parametrize("dense", [True, False])
    def test_matches_tuple_enumeration(self, dense):
        """Test both evaluation routes against an explicit sum over ordered tuples."""
        lat, dis, gs = spin_glass(1)
        limit = 64 if dense else 0
        with patch("tfea_lab.kt_solver.DENSE_SERIES_MAX_INTERIOR", limit):
            context = KTContext.build(
                lat, dis, gs, h=0.1, w_max=2, k_max=4, series_floor=0.0
            )
            assert context.dense_series is dense
            rng = np.random.default_rng(3)
            state = KTState(context, rng.uniform(-0.3, 0.3, context.n_keys))
            allowed = {0} | {int(m) for m in context.keys}
            for c in range(lat.n_bonds):
                active = context.active[c]
                if not len(active):
                    continue
                terms = [(int(context.keys[k]), state.values[k]) for k in active]
                expected = {}
                for order in range(2, 5):
                    for tup in itertools.product(terms, repeat=order):
                        mask = 0
                        product = 1.0
                        for m, v in tup:
                            mask ^= m
                            product *= v
                        if mask in allowed:
                            share = product / math.factorial(order)
                            expected[mask] = expected.get(mask, 0.0) + share
                series = bond_local_exponential(c, state)
                for mask, value in expected.items():
                    got = series.get(SubsetKey(mask), 0.0)
                    assert got == pytest.approx(value, rel=1e-10, abs=1e-14)
                for X, value in series.items():
                    if X.mask not in expected:
                        assert abs(value) < 1e-14

    def test_series_floor_matches_exact_solve(self):
        """Test that the default floor in the sparse route leaves E0 unchanged."""
        lat, dis, gs = spin_glass(5)
        exact = KTContext.build(lat, dis, gs, h=0.05, w_max=3)
        _, reference = solve_fixed_point(SolverConfig(), exact)
        with patch("tfea_lab.kt_solver.DENSE_SERIES_MAX_INTERIOR", 0):
            pruned = KTContext.build(lat, dis, gs, h=0.05, w_max=3)
            assert not pruned.dense_series
            _, diagnostics = solve_fixed_point(SolverConfig(), pruned)
        assert diagnostics.energy == pytest.approx(reference.energy, rel=1e-12)

    def test_term_cap(self):
        """Test that the sparse route refuses to grow past its product cap."""
        lat, dis, gs = ferromagnet()
        with patch("tfea_lab.kt_solver.DENSE_SERIES_MAX_INTERIOR", 0):
            base = KTContext.build(lat, dis, gs, h=0.1, w_max=2)
            context = replace(base, term_cap=1)
            b = lat.bond_index(lat.interior[0], lat.interior[1])
            state = KTState.from_mapping(context, {key(0): 0.2, key(1): 0.3})
            with pytest.raises(SizeCapError):
                bond_local_exponential(b, state)

    def test_negative_floor_rejected(self):
        """Test that a negative series floor is refused."""
        lat, dis, gs = ferromagnet()
        with pytest.raises(ValueError):
            KTContext.build(lat, dis, gs, h=0.1, w_max=1, series_floor=-1.0)

    def test_frozen_bond_rejected(self):
        """Test that bonds without an interior endpoint are rejected."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=1)
        frozen = next(b.index for b in lat.bonds if b.frozen)
        with pytest.raises(LatticeError):
            bond_local_exponential(frozen, KTState.zeros(context))


class TestMapAndNorm:
    """Test cases for F, the solver norm and the contraction constants."""

    def test_F_of_zero(self):
        """Test that F(0) is -h / J(X) on singletons and zero elsewhere."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=2)
        image = apply_F(KTState.zeros(context))
        for X, value in image.g.items():
            assert len(X) == 1
            assert value == pytest.approx(-0.1 / 4)
        assert image.active_count == 4
        assert ground_energy(KTState.zeros(context)) == gs.E_cl

    @pytest.mark.parametrize("M", [1.0, 3.0, 5.0])
    def test_norm_of_F_zero(self, M):
        """Test ||F(0)|| = 2/M when a bond joins two interior sites."""
        lat, dis, gs = spin_glass(2)
        context = KTContext.build(lat, dis, gs, h=0.05, w_max=3)
        assert kt_norm(apply_F(KTState.zeros(context)), M) == pytest.approx(2.0 / M)

    def test_norm_explicit(self):
        """Test the norm of a single coefficient by hand."""
        lat, dis, gs = isolated_sites()
        context = KTContext.build(lat, dis, gs, h=0.4, w_max=2)
        state = KTState.from_mapping(context, {key(0): -0.3})
        assert kt_norm(state, 1.0) == pytest.approx(0.3 / 0.4)

    def test_norm_at_zero_field(self):
        """Test that at h = 0 only the zero state has finite norm."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.0, w_max=1)
        assert kt_norm(KTState.zeros(context), 1.0) == 0.0
        assert kt_norm(KTState.from_mapping(context, {key(0): 1e-9}), 1.0) == math.inf
        with pytest.raises(ValueError):
            kt_norm(KTState.zeros(context), 0.0)

    def test_averaged_gap(self):
        """Test Delta(0) and a hand-computed weighted average."""
        lat, dis, gs = isolated_sites(1.0, 1.5)
        context = KTContext.build(lat, dis, gs, h=0.4, w_max=2)
        assert averaged_gap(KTState.zeros(context), 1.0) == pytest.approx(1.0)
        single = KTState.from_mapping(context, {key(1): 0.2})
        assert averaged_gap(single, 1.0) == pytest.approx(1.5)
        both = KTState.from_mapping(context, {key(0): 0.2, key(1): -0.2})
        assert averaged_gap(both, 1.0) == pytest.approx(1.25)

    def test_lipschitz_root(self):
        """Test that K(x) = 1/2 at x ~ 0.2127 and K(0) = 0."""
        root = delta_over_Delta_root()
        assert root == pytest.approx(0.2127, abs=1e-3)
        assert lipschitz_bound(root) == pytest.approx(0.5, abs=1e-12)
        assert lipschitz_bound(0.0) == 0.0

    @pytest.mark.parametrize("h", [0.05, 0.1])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_states_contract(self, seed, h):
        """Test that random admissible probes contract at M = 1/(2|h|)."""
        lat, dis, gs = spin_glass(seed)
        context = KTContext.build(lat, dis, gs, h=h, w_max=4)
        cfg = SolverConfig()
        delta = cfg.resolve(context.h).delta
        rng = np.random.default_rng(seed)
        for _ in range(10):
            g = random_admissible(context, cfg, 0.9 * delta, rng)
            g_prime = random_admissible(context, cfg, 0.5 * delta, rng)
            assert kt_norm(g, cfg.resolve(context.h).M) == pytest.approx(0.9 * delta)
            assert contraction_check(g, g_prime, cfg) <= 0.5
            assert kt_norm(apply_F(g, cfg), cfg.resolve(h).M) <= delta

    def test_contraction_check_errors(self):
        """Test identical probes, foreign contexts and probes outside the ball."""
        lat, dis, gs = spin_glass(0)
        context = KTContext.build(lat, dis, gs, h=0.01, w_max=2)
        other = KTContext.build(lat, dis, gs, h=0.01, w_max=2)
        cfg = SolverConfig()
        delta = cfg.resolve(0.01).delta
        rng = np.random.default_rng(0)
        g = random_admissible(context, cfg, 0.5 * delta, rng)
        with pytest.raises(ValueError):
            contraction_check(g, g, cfg)
        with pytest.raises(ValueError):
            contraction_check(g, random_admissible(other, cfg, 0.5 * delta, rng), cfg)
        with pytest.raises(FieldBoundError):
            contraction_check(g, random_admissible(context, cfg, 2 * delta, rng), cfg)

    def test_random_admissible_needs_field(self):
        """Test that probes are refused at h = 0."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.0, w_max=1)
        with pytest.raises(FieldBoundError):
            random_admissible(context, SolverConfig(), 1.0, np.random.default_rng(0))


class TestSolveFixedPoint:
    """Test cases for the fixed-point iteration."""

    def test_zero_field(self):
        """Test that h = 0 gives g = 0 and E0 = E_cl after one step."""
        lat, dis, gs = spin_glass(3)
        context = KTContext.build(lat, dis, gs, h=0.0, w_max=3)
        state, diagnostics = solve_fixed_point(SolverConfig(), context)
        assert state.g == {}
        assert diagnostics.energy == gs.E_cl
        assert diagnostics.norm_g == 0.0
        assert diagnostics.iterations == [0.0]
        assert diagnostics.Delta == pytest.approx(weakest_excitation(context))

    @pytest.mark.parametrize("h", [0.1, 0.4, -0.4])
    def test_isolated_sites_closed_form(self, h):
        """Test g = asinh(-h/J) and E0 = -sqrt(J^2 + h^2) per isolated site."""
        lat, dis, gs = isolated_sites(1.0, 1.5)
        context = KTContext.build(lat, dis, gs, h=h, w_max=2, k_max=16)
        state, diagnostics = solve_fixed_point(SolverConfig(), context)
        g_left, _ = single_site_fixed_point(1.0, h)
        g_right, _ = single_site_fixed_point(1.5, h)
        assert state[key(0)] == pytest.approx(g_left, abs=1e-10)
        assert state[key(1)] == pytest.approx(g_right, abs=1e-10)
        assert state[key(0, 1)] == pytest.approx(0.0, abs=1e-14)
        expected = -math.hypot(1.0, h) - math.hypot(1.5, h)
        assert diagnostics.energy == pytest.approx(expected, abs=1e-10)
        assert diagnostics.converged
        assert diagnostics.within_ball
        assert residual(state, SolverConfig()) < 1e-9

    def test_single_site_helper(self):
        """Test the closed-form helper itself."""
        g, shift = single_site_fixed_point(2.0, 1.5)
        assert math.sinh(g) == pytest.approx(-0.75)
        assert shift == pytest.approx(2.0 - 2.5)

    @pytest.mark.parametrize("h", [0.05, 0.1])
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_field_parity(self, seed, h):
        """Test that E0(h) = E0(-h) and g(X) picks up (-1)^|X|."""
        lat, dis, gs = spin_glass(seed)
        up = KTContext.build(lat, dis, gs, h=h, w_max=4)
        state_up, diag_up = solve_fixed_point(SolverConfig(), up)
        state_down, diag_down = solve_fixed_point(SolverConfig(), up.with_field(-h))
        assert diag_down.energy == pytest.approx(diag_up.energy, rel=1e-12)
        for X, value in state_up.g.items():
            mirrored = (-1) ** len(X) * value
            assert state_down[X] == pytest.approx(mirrored, rel=1e-9, abs=1e-15)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_second_order_perturbation(self, seed):
        """Test (E0(h) - E_cl) / h^2 against -sum_i 1 / (2 J_i) at small h."""
        lat, dis, gs = spin_glass(seed)
        h = 1e-3
        context = KTContext.build(lat, dis, gs, h=h, w_max=4)
        _, diagnostics = solve_fixed_point(SolverConfig(), context)
        expected = perturbative_energy_shift(lat, dis, gs, h)
        shift = diagnostics.energy - gs.E_cl
        assert shift / h**2 == pytest.approx(expected / h**2, rel=0.01)

    def test_energy_decreases_with_field(self):
        """Test that switching on the field lowers E0 below E_cl."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.2, w_max=4)
        _, diagnostics = solve_fixed_point(SolverConfig(), context)
        assert diagnostics.energy < gs.E_cl

    def test_diagnostics(self):
        """Test the recorded trace and contraction constants."""
        lat, dis, gs = spin_glass(4)
        context = KTContext.build(lat, dis, gs, h=0.02, w_max=4)
        cfg = SolverConfig()
        _, diagnostics = solve_fixed_point(cfg, context)
        assert diagnostics.M == pytest.approx(25.0)
        assert diagnostics.delta == pytest.approx(0.16)
        assert len(diagnostics.trace) == len(diagnostics.iterations)
        assert diagnostics.iterations[-1] < cfg.tol
        assert diagnostics.trace[-1].energy == diagnostics.energy
        ratio = diagnostics.delta / diagnostics.Delta
        assert diagnostics.K == pytest.approx(lipschitz_bound(ratio))
        assert diagnostics.residual < 1e-9

    def test_field_bound_enforced(self):
        """Test that an explicit M with |h| M > 1 is refused."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.2, w_max=2)
        with pytest.raises(FieldBoundError):
            solve_fixed_point(SolverConfig(M=10.0), context)

    def test_no_convergence(self):
        """Test that an exhausted iteration budget raises with the step trace."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.2, w_max=2)
        with pytest.raises(ConvergenceError) as excinfo:
            solve_fixed_point(SolverConfig(max_iter=1), context)
        assert len(excinfo.value.trace) == 1
        assert excinfo.value.trace[0] > 0

    def test_rounding_floor_accepted(self):
        """Test that a run whose steps stop shrinking is reported as converged."""
        lat, dis, gs = spin_glass(4)
        context = KTContext.build(lat, dis, gs, h=0.05, w_max=4)
        _, reference = solve_fixed_point(SolverConfig(), context)
        _, diagnostics = solve_fixed_point(SolverConfig(tol=0.0), context)
        assert diagnostics.converged
        assert diagnostics.stagnated
        assert diagnostics.energy == pytest.approx(reference.energy, rel=1e-13)

    def test_stagnation_rule(self):
        """Test the stall detector on hand-made step sequences."""
        cfg = SolverConfig()
        stalled = [1e-3, 1e-12, 2e-12, 3e-12, 2e-12, 5e-12, 4e-12]
        assert _stagnated(stalled, 1.0, cfg)
        shrinking = [10.0**-k for k in range(3, 17, 2)]
        assert not _stagnated(shrinking, 1.0, cfg)
        assert not _stagnated([1e-3] * 10, 1.0, cfg)
        assert not _stagnated(stalled[-3:], 1.0, cfg)

    def test_divergence_guard(self):
        """Test that iterates far outside the ball stop the run."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.2, w_max=2)
        with patch("tfea_lab.kt_solver.DIVERGENCE_FACTOR", 0.0):
            with pytest.raises(ConvergenceError) as excinfo:
                solve_fixed_point(SolverConfig(), context)
        assert len(excinfo.value.trace) == 1

    def test_stalled_square_seed(self):
        """Test a 4x4-interior seed whose steps stall near 1e-10 at h = 0.05."""
        lat, dis, gs = spin_glass(2, d=2, L=6)
        context = KTContext.build(lat, dis, gs, h=0.05, w_max=4, k_max=6)
        state, diagnostics = solve_fixed_point(SolverConfig(), context)
        assert diagnostics.converged
        sr = ground_state_ed(build_hamiltonian(lat, dis, 0.05))
        assert diagnostics.energy == pytest.approx(sr.E0, rel=1e-8)
        assert overlap(sr, wavefunction_amplitudes(state, gs)) > 1 - 1e-8

    def test_workers_and_sparse_lookup_agree(self):
        """Test that threaded bond sums and the sorted-array lookup agree."""
        lat, dis, gs = spin_glass(5)
        context = KTContext.build(lat, dis, gs, h=0.03, w_max=3)
        _, reference = solve_fixed_point(SolverConfig(), context)
        _, threaded = solve_fixed_point(SolverConfig(workers=3), context)
        with patch("tfea_lab.kt_solver.DENSE_LOOKUP_MAX_INTERIOR", 0):
            sparse = KTContext.build(lat, dis, gs, h=0.03, w_max=3)
        assert sparse._table is None
        _, searched = solve_fixed_point(SolverConfig(), sparse)
        assert threaded.energy == pytest.approx(reference.energy, rel=1e-13)
        assert searched.energy == pytest.approx(reference.energy, rel=1e-13)

    def test_write_trace(self):
        """Test that the trace is written as one CSV row per iteration."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=2)
        _, diagnostics = solve_fixed_point(SolverConfig(), context)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, "trace", "kt.csv")
            write_trace(diagnostics, path)
            with open(path, "r", encoding="utf-8") as f:
                rows = list(csv.reader(f))
        assert rows[0] == ["iteration", "step", "E0", "norm", "active"]
        assert len(rows) == len(diagnostics.trace) + 1


class TestWavefunction:
    """Test cases for wavefunction amplitudes."""

    def test_zero_field_is_classical_state(self):
        """Test that g = 0 gives sigma_D, which rotates back to s+."""
        lat = build_lattice(1, 6)
        dis = load_sample(os.path.join(FIXTURES, "path_d1_L6.txt"), lat)
        gs = solve_classical(lat, dis)
        context = KTContext.build(lat, dis, gs, h=0.0, w_max=2)
        amplitudes = wavefunction_amplitudes(KTState.zeros(context), gs)
        assert np.all(np.abs(amplitudes.values) == 1.0)
        assert amplitudes[0] == 1.0
        assert amplitudes[gs.D.mask] == 1.0
        assert amplitudes[0b0100] == -1.0
        classical = rotate_to_kt_frame(amplitudes.normalized())
        expected = np.zeros(16)
        expected[gs.D.mask] = 1.0
        np.testing.assert_allclose(classical, expected, atol=1e-12)

    def test_isolated_site_amplitudes(self):
        """Test exp(-g sigma / 2) for one nonzero coefficient."""
        lat, dis, gs = isolated_sites()
        context = KTContext.build(lat, dis, gs, h=0.3, w_max=2)
        state = KTState.from_mapping(context, {key(0): -0.4})
        amplitudes = wavefunction_amplitudes(state, gs)
        assert amplitudes[0b00] == pytest.approx(math.exp(0.2))
        assert amplitudes[0b01] == pytest.approx(math.exp(-0.2))
        assert amplitudes[0b10] == pytest.approx(math.exp(0.2))
        assert dict(amplitudes.items())[3] == pytest.approx(math.exp(-0.2))

    def test_size_cap(self):
        """Test that large interiors are refused."""
        lat, dis, gs = ferromagnet()
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=1)
        with pytest.raises(SizeCapError):
            wavefunction_amplitudes(KTState.zeros(context), gs, max_interior=2)


class TestAgainstExactDiagonalization:
    """End-to-end comparisons of the fixed point with exact diagonalization."""

    @pytest.mark.parametrize("h", [0.1, 0.4])
    def test_isolated_sites(self, h):
        """Test that both solvers reproduce the closed form."""
        lat, dis, gs = isolated_sites(1.0, 1.5)
        context = KTContext.build(lat, dis, gs, h=h, w_max=2, k_max=16)
        state, diagnostics = solve_fixed_point(SolverConfig(), context)
        sr = ground_state_ed(build_hamiltonian(lat, dis, h))
        expected = -math.hypot(1.0, h) - math.hypot(1.5, h)
        assert sr.E0 == pytest.approx(expected, abs=1e-12)
        assert diagnostics.energy == pytest.approx(sr.E0, abs=1e-10)
        value = overlap(sr, wavefunction_amplitudes(state, gs))
        assert value == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("h", [0.05, 0.1])
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_complete_truncation(self, seed, h):
        """Test that with every subset allowed the fixed point is exact."""
        lat, dis, gs = spin_glass(seed)
        context = KTContext.build(lat, dis, gs, h=h, w_max=4, k_max=12)
        state, diagnostics = solve_fixed_point(SolverConfig(), context)
        sr = ground_state_ed(build_hamiltonian(lat, dis, h))
        assert diagnostics.energy - gs.E_cl == pytest.approx(sr.E0 - gs.E_cl, rel=1e-6)
        assert overlap(sr, wavefunction_amplitudes(state, gs)) > 1 - 1e-8

    @pytest.mark.parametrize("h", [0.05, 0.1])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_square_L6(self, seed, h):
        """Test E0 and the overlap on the 4x4 interior at w_max = 4."""
        lat, dis, gs = spin_glass(seed, d=2, L=6)
        context = KTContext.build(lat, dis, gs, h=h, w_max=4, k_max=6)
        state, diagnostics = solve_fixed_point(SolverConfig(), context)
        sr = ground_state_ed(build_hamiltonian(lat, dis, h))
        assert abs(diagnostics.energy - sr.E0) <= 1e-3 * abs(sr.E0)
        assert diagnostics.energy - gs.E_cl == pytest.approx(sr.E0 - gs.E_cl, rel=1e-3)
        assert overlap(sr, wavefunction_amplitudes(state, gs)) >= 0.999

    def test_truncation_improves_energy(self):
        """Test that raising w_max from 2 to 4 moves E0 towards the exact value."""
        lat, dis, gs = ferromagnet(2, 6)
        sr = ground_state_ed(build_hamiltonian(lat, dis, 0.2))
        errors = []
        for w_max in (2, 4):
            context = KTContext.build(lat, dis, gs, h=0.2, w_max=w_max)
            _, diagnostics = solve_fixed_point(SolverConfig(), context)
            errors.append(abs(diagnostics.energy - sr.E0))
        assert errors[1] <= errors[0]
        assert errors[1] < 1e-6 * abs(sr.E0)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_truncation_monotone_on_spin_glass(self, seed):
        """Test that the error to ED never grows with w_max or with k_max."""
        h = 0.05
        lat, dis, gs = spin_glass(seed)
        exact = ground_state_ed(build_hamiltonian(lat, dis, h)).E0

        def error(w_max, k_max):
            context = KTContext.build(lat, dis, gs, h=h, w_max=w_max, k_max=k_max)
            _, diagnostics = solve_fixed_point(SolverConfig(), context)
            return abs(diagnostics.energy - exact)

        by_weight = [error(w_max, 6) for w_max in (1, 2, 3, 4)]
        by_order = [error(4, k_max) for k_max in (2, 3, 4, 6)]
        for errors in (by_weight, by_order):
            for coarse, fine in zip(errors, errors[1:]):
                assert fine <= coarse + 1e-12


@pytest.mark.slow
class TestSquareEnsemble:
    """Twenty 4x4-interior seeds against exact diagonalization."""

    SEEDS = range(20)

    @pytest.mark.parametrize("h", [0.05, 0.1])
    def test_energy_and_weight_refinement(self, h):
        """Test the 1e-3 relative error at w_max = 4 and its decrease at w_max = 5."""
        lat = build_lattice(2, 6)
        improved = 0
        for seed in self.SEEDS:
            dis = sample_disorder(lat, seed=seed)
            gs = solve_classical(lat, dis)
            exact = ground_state_ed(build_hamiltonian(lat, dis, h)).E0
            errors = []
            for w_max in (4, 5):
                context = KTContext.build(lat, dis, gs, h=h, w_max=w_max, k_max=6)
                _, diagnostics = solve_fixed_point(SolverConfig(), context)
                errors.append(abs(diagnostics.energy - exact))
            assert errors[0] <= 1e-3 * abs(exact)
            improved += errors[1] < errors[0]
        assert improved >= 18

    @pytest.mark.parametrize("seed", range(5))
    def test_contraction_on_square(self, seed):
        """Test probe contraction and ball preservation at h = 0.1, M = 1/(2|h|)."""
        lat, dis, gs = spin_glass(seed, d=2, L=6)
        context = KTContext.build(lat, dis, gs, h=0.1, w_max=4)
        cfg = SolverConfig().resolve(0.1)
        rng = np.random.default_rng(seed)
        assert kt_norm(apply_F(KTState.zeros(context)), cfg.M) == pytest.approx(
            cfg.delta / 2, rel=1e-12
        )
        for _ in range(20):
            g = random_admissible(context, cfg, cfg.delta * rng.uniform(0.05, 1), rng)
            radius = cfg.delta * rng.uniform(0.05, 1)
            g_prime = random_admissible(context, cfg, radius, rng)
            assert contraction_check(g, g_prime, cfg) <= 0.5
            assert kt_norm(apply_F(g, cfg), cfg.M) <= cfg.delta
