"""
Zero-field ground state of the Edwards-Anderson model with + boundary.

Interior configurations are enumerated exhaustively in blocks; each block
is reduced to its two lowest energies and the blocks are merged, which is
enough to get the minimizer s+, its flipped set D and the gap to the first
excited configuration.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .config import (
    CLASSICAL_BLOCK_BITS,
    CLASSICAL_MAX_INTERIOR,
    TIE_TOLERANCE,
    WORKERS,
)
from .disorder import DisorderSample
from .errors import (
    DegenerateGroundStateError,
    DisorderFileError,
    LatticeError,
    SizeCapError,
)
from .lattice import Lattice, SubsetKey, bond_boundary, plaquettes, spins_from_configs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IsingTerms:
    """
    The classical energy split by bond type.

    Interior-interior bonds couple two spins, interior-boundary bonds act as
    a field on their interior endpoint (the boundary spin is +1) and
    frozen-frozen bonds only shift the energy.
    """

    n_interior: int
    pair_bonds: np.ndarray
    pair_a: np.ndarray
    pair_b: np.ndarray
    pair_J: np.ndarray
    edge_bonds: np.ndarray
    edge_site: np.ndarray
    edge_J: np.ndarray
    frozen_bonds: np.ndarray
    constant: float

    @classmethod
    def build(cls, lat: Lattice, dis: DisorderSample) -> "IsingTerms":
        if not dis.matches(lat):
            raise DisorderFileError(
                f"Disorder sample for d={dis.d} L={dis.L} does not match lattice "
                f"d={lat.d} L={lat.L}"
            )
        pair, edge, frozen = [], [], []
        for bond in lat.bonds:
            a = int(lat.site_to_interior[bond.i])
            b = int(lat.site_to_interior[bond.j])
            if a >= 0 and b >= 0:
                pair.append((bond.index, a, b))
            elif a >= 0 or b >= 0:
                edge.append((bond.index, max(a, b)))
            else:
                frozen.append(bond.index)
        pair_array = np.array(pair, dtype=np.int64).reshape(-1, 3)
        edge_array = np.array(edge, dtype=np.int64).reshape(-1, 2)
        frozen_array = np.array(frozen, dtype=np.int64)
        return cls(
            n_interior=lat.n_interior,
            pair_bonds=pair_array[:, 0],
            pair_a=pair_array[:, 1],
            pair_b=pair_array[:, 2],
            pair_J=dis.values[pair_array[:, 0]],
            edge_bonds=edge_array[:, 0],
            edge_site=edge_array[:, 1],
            edge_J=dis.values[edge_array[:, 0]],
            frozen_bonds=frozen_array,
            constant=-float(dis.values[frozen_array].sum()),
        )

    def energies(self, configs: np.ndarray) -> np.ndarray:
        """E(sigma) = -sum_b J_b sigma_b for bit-encoded interior configurations."""
        spins = spins_from_configs(configs, self.n_interior).astype(np.float64)
        pair = (spins[:, self.pair_a] * spins[:, self.pair_b]) @ self.pair_J
        edge = spins[:, self.edge_site] @ self.edge_J
        return self.constant - pair - edge

    def bond_spins(self, configs: np.ndarray, n_bonds: int) -> np.ndarray:
        """sigma_b for every bond, shape (len(configs), n_bonds)."""
        spins = spins_from_configs(configs, self.n_interior)
        out = np.ones((spins.shape[0], n_bonds), dtype=np.int8)
        out[:, self.pair_bonds] = spins[:, self.pair_a] * spins[:, self.pair_b]
        out[:, self.edge_bonds] = spins[:, self.edge_site]
        return out


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """A configuration in the + boundary sector; boundary spins are +1."""

    config: int
    spins: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(self.spins) != 1):
            raise ValueError("Spins must be +1 or -1")
        self.spins.setflags(write=False)

    @classmethod
    def from_interior(cls, lat: Lattice, config: int) -> "SpinConfig":
        """Expand a bit-encoded interior configuration to all lattice sites."""
        if config < 0 or config >> lat.n_interior:
            raise LatticeError(f"Configuration {config} has bits outside the interior")
        spins = np.ones(lat.n_sites, dtype=np.int8)
        interior = spins_from_configs(np.array([config]), lat.n_interior)[0]
        spins[list(lat.interior)] = interior
        return cls(config=int(config), spins=spins)

    def check_boundary(self, lat: Lattice) -> bool:
        """True if every boundary-shell site is +1."""
        return bool(np.all(self.spins[lat.site_to_interior < 0] == 1))

    @property
    def flipped(self) -> SubsetKey:
        return SubsetKey(self.config)


@dataclass(frozen=True, eq=False)
class ClassicalGroundState:
    """The minimizer s+ and the gap data needed by the quantum solvers."""

    s_plus: SpinConfig
    D: SubsetKey
    E_cl: float
    gap1: float
    unique: bool
    excited: SubsetKey
    bond_values: np.ndarray = field(repr=False)

    def bond_value(self, b: int) -> int:
        return int(self.bond_values[b])


@dataclass
class BondConsistencyReport:
    """Outcome of the bond-spin consistency checks on a unique ground state."""

    beta: float
    plaquette_count: int
    plaquette_violations: List[int]
    bond_deviation: float
    gibbs_plaquette_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.plaquette_violations and self.bond_deviation < self.tolerance


def _block_starts(n_interior: int) -> Tuple[int, List[int]]:
    total = 1 << n_interior
    block = 1 << min(CLASSICAL_BLOCK_BITS, n_interior)
    return block, list(range(0, total, block))


def classical_energies(
    lat: Lattice, dis: DisorderSample, configs: np.ndarray
) -> np.ndarray:
    """
    Classical energies of bit-encoded interior configurations.

    Args:
        lat: The lattice
        dis: The couplings
        configs: Integer configurations, bit k set meaning interior spin k is -1

    Returns:
        float64 array of energies
    """
    return IsingTerms.build(lat, dis).energies(np.asarray(configs))


def solve_classical(
    lat: Lattice,
    dis: DisorderSample,
    max_interior: Optional[int] = None,
    tie_tolerance: Optional[float] = None,
    workers: Optional[int] = None,
) -> ClassicalGroundState:
    """
    Find the ground state in the + boundary sector by exhaustive enumeration.

    Args:
        lat: The lattice
        dis: The couplings
        max_interior: Interior size cap (defaults to TFEA_CLASSICAL_MAX_INTERIOR)
        tie_tolerance: Minimum gap for a unique ground state
        workers: Threads used for the block scan

    Returns:
        The ground state; unique is False when the two lowest energies tie
    """
    cap = CLASSICAL_MAX_INTERIOR if max_interior is None else max_interior
    tol = TIE_TOLERANCE if tie_tolerance is None else tie_tolerance
    workers = WORKERS if workers is None else workers
    n = lat.n_interior
    if n > cap:
        raise SizeCapError(
            f"Exhaustive search over {n} interior spins exceeds the cap of {cap}"
        )

    terms = IsingTerms.build(lat, dis)
    total = 1 << n
    block, starts = _block_starts(n)

    def lowest_two(start: int) -> List[Tuple[float, int]]:
        configs = np.arange(start, min(start + block, total), dtype=np.int64)
        energies = terms.energies(configs)
        order = np.argsort(energies, kind="stable")[:2]
        return [(float(energies[k]), int(configs[k])) for k in order]

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            candidates = list(pool.map(lowest_two, starts))
    else:
        candidates = [lowest_two(start) for start in starts]

    merged = sorted(pair for block_best in candidates for pair in block_best)
    (e0, c0), (e1, c1) = merged[0], merged[1]
    gap1 = e1 - e0
    unique = gap1 > tol

    s_plus = SpinConfig.from_interior(lat, c0)
    bond_values = terms.bond_spins(np.array([c0]), lat.n_bonds)[0]
    bond_values.setflags(write=False)

    if unique:
        logger.debug(
            "Classical ground state E=%.12g, gap=%.6g, |D|=%d",
            e0,
            gap1,
            len(SubsetKey(c0)),
        )
    else:
        logger.warning(
            "Classical ground state is degenerate: "
            "configurations %d and %d differ by %.3g",
            c0,
            c1,
            gap1,
        )

    return ClassicalGroundState(
        s_plus=s_plus,
        D=SubsetKey(c0),
        E_cl=e0,
        gap1=gap1,
        unique=unique,
        excited=SubsetKey(c0 ^ c1),
        bond_values=bond_values,
    )


def excitation_energy(
    gs: ClassicalGroundState, dis: DisorderSample, lat: Lattice, X: SubsetKey
) -> float:
    """
    Energy cost 2 sum_{b in dX} J_b s+_b of flipping the spins in X.

    Args:
        gs: The classical ground state
        dis: The couplings
        lat: The lattice
        X: Nonempty interior subset

    Returns:
        E(s+ flipped on X) - E_cl
    """
    if not X:
        raise LatticeError("Excitation energy needs a nonempty set")
    return 2.0 * sum(dis.coupling(b) * gs.bond_value(b) for b in bond_boundary(lat, X))


def local_fields(
    lat: Lattice, dis: DisorderSample, gs: ClassicalGroundState
) -> np.ndarray:
    """Per interior site, sum_{b containing i} J_b s+_b (half the single-flip cost)."""
    weighted = dis.values * gs.bond_values
    out = np.zeros(lat.n_interior)
    for k, site in enumerate(lat.interior):
        out[k] = weighted[list(lat.adjacency[site])].sum()
    return out


def thermal_bond_expectations(
    lat: Lattice, dis: DisorderSample, beta: float, max_interior: Optional[int] = None
) -> np.ndarray:
    """
    Gibbs averages <sigma_b> at h = 0 by exhaustive summation.

    Args:
        lat: The lattice
        dis: The couplings
        beta: Inverse temperature
        max_interior: Interior size cap (defaults to TFEA_CLASSICAL_MAX_INTERIOR)

    Returns:
        One expectation per bond
    """
    cap = CLASSICAL_MAX_INTERIOR if max_interior is None else max_interior
    n = lat.n_interior
    if n > cap:
        raise SizeCapError(
            f"Thermal sum over {n} interior spins exceeds the cap of {cap}"
        )

    terms = IsingTerms.build(lat, dis)
    total = 1 << n
    block, starts = _block_starts(n)

    e_min = np.inf
    for start in starts:
        configs = np.arange(start, min(start + block, total), dtype=np.int64)
        e_min = min(e_min, float(terms.energies(configs).min()))

    z = 0.0
    acc = np.zeros(lat.n_bonds)
    for start in starts:
        configs = np.arange(start, min(start + block, total), dtype=np.int64)
        weights = np.exp(-beta * (terms.energies(configs) - e_min))
        z += weights.sum()
        acc += weights @ terms.bond_spins(configs, lat.n_bonds)
    return acc / z


def verify_bond_consistency(
    gs: ClassicalGroundState,
    lat: Lattice,
    dis: DisorderSample,
    beta: Optional[float] = None,
    tolerance: float = 1e-6,
) -> BondConsistencyReport:
    """
    Check the bond values of s+ on plaquettes and against low-temperature averages.

    Every plaquette product of s+_b must be +1, and <sigma_b> at large beta
    must approach s+_b. The default beta is max(50, 40 / gap1).

    Args:
        gs: A unique classical ground state
        lat: The lattice
        dis: The couplings
        beta: Inverse temperature for the Gibbs check
        tolerance: Allowed |<sigma_b> - s+_b|

    Returns:
        The report; plaquette violations are listed rather than raised
    """
    if not gs.unique:
        raise DegenerateGroundStateError(
            f"Bond consistency needs a unique ground state (gap {gs.gap1:.3g})"
        )
    beta = max(50.0, 40.0 / gs.gap1) if beta is None else beta

    cycles = np.array(plaquettes(lat), dtype=np.int64).reshape(-1, 4)
    products = np.prod(gs.bond_values[cycles].astype(np.int64), axis=1)
    violations = [int(k) for k in np.nonzero(products != 1)[0]]
    if violations:
        logger.error(
            "Plaquette products of s+ are -1 on %d plaquettes", len(violations)
        )

    thermal = thermal_bond_expectations(lat, dis, beta)
    deviation = float(np.max(np.abs(thermal - gs.bond_values))) if lat.n_bonds else 0.0
    gibbs_products = np.prod(thermal[cycles], axis=1) if len(cycles) else np.ones(0)
    gibbs_deviation = 0.0
    if len(cycles):
        gibbs_deviation = float(np.max(np.abs(1.0 - gibbs_products)))

    return BondConsistencyReport(
        beta=float(beta),
        plaquette_count=int(len(cycles)),
        plaquette_violations=violations,
        bond_deviation=deviation,
        gibbs_plaquette_deviation=gibbs_deviation,
        tolerance=tolerance,
    )
