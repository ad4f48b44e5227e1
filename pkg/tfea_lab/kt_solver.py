"""
Kirkwood-Thomas fixed-point solver for the transverse-field EA ground state.

The ground state in the rotated frame is written as

    |GS> = sum_sigma sigma_D exp(-1/2 sum_X g(X) sigma_X) |sigma>

and g solves g = F(g). Coefficients live on a truncation: all nonempty
interior sets X with connected weight w(X) <= w_max, stored as a sorted
uint64 mask array. Polynomials in sigma are vectors over the "allowed"
index space [empty set] + truncation, so the product sigma_X sigma_Y =
sigma_{X^Y} becomes an XOR of masks followed by an index lookup.
On interiors of up to DENSE_SERIES_MAX_INTERIOR sites exp2 is evaluated
pointwise on the Walsh-Hadamard spectrum of each bond polynomial instead.
"""

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import csr_matrix

from .classical_ground import ClassicalGroundState, local_fields
from .config import (
    DENOMINATOR_FLOOR,
    KT_K_MAX,
    KT_MAX_ITER,
    KT_PLATEAU_RTOL,
    KT_PLATEAU_WINDOW,
    KT_SERIES_FLOOR,
    KT_SERIES_TERM_CAP,
    KT_TOL,
    KT_W_MAX,
    WAVEFUNCTION_MAX_INTERIOR,
    WORKERS,
)
from .disorder import DisorderSample
from .errors import (
    ConvergenceError,
    DegenerateGroundStateError,
    FieldBoundError,
    LatticeError,
    SizeCapError,
)
from .lattice import Lattice, SubsetKey, truncation_table, walsh_hadamard

logger = logging.getLogger(__name__)

DENSE_LOOKUP_MAX_INTERIOR = 22
DENSE_SERIES_MAX_INTERIOR = 16
DENSE_SERIES_BLOCK = 1 << 22
DIVERGENCE_FACTOR = 100.0


@dataclass(frozen=True)
class SolverConfig:
    """
    Iteration parameters. M = None means "auto": 1/(2|h|), or 1 at h = 0.

    The iteration stops when a step falls below tol, or when plateau_window
    steps in a row bring no decrease while the step is already below
    plateau_rtol times ||g||. The second case is the rounding floor of the norm.
    """

    M: Optional[float] = None
    tol: float = KT_TOL
    max_iter: int = KT_MAX_ITER
    w_max: int = KT_W_MAX
    k_max: int = KT_K_MAX
    workers: int = WORKERS
    plateau_rtol: float = KT_PLATEAU_RTOL
    plateau_window: int = KT_PLATEAU_WINDOW

    def __post_init__(self):
        if self.M is not None and self.M <= 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.k_max < 2:
            raise ValueError(f"k_max must be at least 2, got {self.k_max}")
        if self.w_max < 1:
            raise ValueError(f"w_max must be at least 1, got {self.w_max}")
        if self.plateau_window < 2:
            raise ValueError(
                f"plateau_window must be at least 2, got {self.plateau_window}"
            )

    def resolve(self, h: float) -> "SolverConfig":
        """Copy with M fixed for field h."""
        if self.M is not None:
            return self
        return replace(self, M=1.0 / (2.0 * abs(h)) if h else 1.0)

    @property
    def delta(self) -> float:
        """Radius of the admissible ball, 4/M."""
        if self.M is None:
            raise ValueError("M is unresolved; call resolve(h) first")
        return 4.0 / self.M

    def check_field(self, h: float) -> None:
        """Raise FieldBoundError unless |h| M <= 1."""
        M = self.resolve(h).M
        assert M is not None
        if abs(h) * M > 1.0:
            raise FieldBoundError(f"|h| M = {abs(h) * M:.6g} exceeds 1 (h={h}, M={M})")


def _bit(keys: np.ndarray, site: int) -> np.ndarray:
    if site < 0:
        return np.zeros_like(keys)
    return (keys >> np.uint64(site)) & np.uint64(1)


@dataclass(frozen=True, eq=False)
class KTContext:
    """
    Everything about a problem instance that does not change during iteration.

    Attributes:
        keys: Truncation masks, ascending
        weights: Connected weight of each key
        denominators: sum_{b in dX} J_b s+_b per key
        incidence: Sparse (bond x key) matrix, 1 where the bond is in dX
        active: Per bond, key indices whose boundary contains it
        bond_weights: J_b s+_b per bond
        series_floor: Partial products of exp2 that can add less than this
            to any coefficient are dropped; 0 keeps every tuple
    """

    lat: Lattice
    dis: DisorderSample
    gs: ClassicalGroundState
    h: float
    w_max: int
    k_max: int
    keys: np.ndarray
    weights: np.ndarray
    denominators: np.ndarray
    incidence: csr_matrix
    active: Tuple[np.ndarray, ...]
    bond_weights: np.ndarray
    allowed: np.ndarray = field(repr=False)
    singletons: np.ndarray = field(repr=False)
    _table: Optional[np.ndarray] = field(default=None, repr=False)
    series_floor: float = KT_SERIES_FLOOR
    term_cap: int = KT_SERIES_TERM_CAP

    @classmethod
    def build(
        cls,
        lat: Lattice,
        dis: DisorderSample,
        gs: ClassicalGroundState,
        h: float,
        w_max: int = KT_W_MAX,
        k_max: int = KT_K_MAX,
        cap: Optional[int] = None,
        series_floor: float = KT_SERIES_FLOOR,
    ) -> "KTContext":
        """
        Enumerate the truncation and precompute denominators and incidences.

        Args:
            lat: The lattice
            dis: The couplings
            gs: Unique classical ground state
            h: Transverse field
            w_max: Truncation weight
            k_max: Highest order kept in exp2
            cap: Truncation size cap
            series_floor: Smallest contribution kept inside exp2

        Returns:
            The context
        """
        if not gs.unique:
            raise DegenerateGroundStateError(
                f"The classical ground state is degenerate (gap {gs.gap1:.3g})"
            )
        if series_floor < 0:
            raise ValueError(f"series_floor must be >= 0, got {series_floor}")
        if lat.n_interior > 64:
            raise SizeCapError("The solver supports at most 64 interior sites")

        masks, weights = truncation_table(lat, w_max, cap)
        order = np.argsort(np.array(masks, dtype=np.uint64), kind="stable")
        keys = np.array(masks, dtype=np.uint64)[order]
        weight_array = np.array(weights, dtype=np.int64)[order]

        rows, cols = [], []
        for bond in lat.bonds:
            a = int(lat.site_to_interior[bond.i])
            b = int(lat.site_to_interior[bond.j])
            if a < 0 and b < 0:
                continue
            has_a = _bit(keys, a)
            has_b = _bit(keys, b)
            members = np.nonzero(has_a ^ has_b)[0]
            rows.extend([bond.index] * len(members))
            cols.extend(members.tolist())
        incidence = csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(lat.n_bonds, len(keys))
        )
        bond_weights = dis.values * gs.bond_values
        denominators = incidence.T @ bond_weights

        weak = np.nonzero(denominators <= DENOMINATOR_FLOOR)[0]
        if len(weak):
            X = SubsetKey(int(keys[weak[0]]))
            raise DegenerateGroundStateError(
                f"Excitation {X!r} has non-positive cost {denominators[weak[0]]:.3g}"
            )

        active = tuple(
            incidence.indices[incidence.indptr[c] : incidence.indptr[c + 1]].copy()
            for c in range(lat.n_bonds)
        )
        singletons = (keys & (keys - np.uint64(1))) == 0

        table = None
        if lat.n_interior <= DENSE_LOOKUP_MAX_INTERIOR:
            table = np.full(1 << lat.n_interior, -1, dtype=np.int64)
            table[0] = 0
            table[keys.astype(np.int64)] = np.arange(1, len(keys) + 1)

        logger.debug(
            "KT context: %d keys (w_max=%d), min excitation %.4g",
            len(keys),
            w_max,
            float(denominators.min()) if len(keys) else 0.0,
        )
        return cls(
            lat=lat,
            dis=dis,
            gs=gs,
            h=float(h),
            w_max=w_max,
            k_max=k_max,
            keys=keys,
            weights=weight_array,
            denominators=denominators,
            incidence=incidence,
            active=active,
            bond_weights=bond_weights,
            allowed=np.concatenate([np.zeros(1, dtype=np.uint64), keys]),
            singletons=singletons,
            _table=table,
            series_floor=series_floor,
        )

    @property
    def n_keys(self) -> int:
        return int(self.keys.shape[0])

    @property
    def dense_series(self) -> bool:
        """Whether exp2 is evaluated on the full Walsh-Hadamard spectrum."""
        return self.lat.n_interior <= DENSE_SERIES_MAX_INTERIOR

    def with_field(self, h: float) -> "KTContext":
        """The same truncation at another field."""
        return replace(self, h=float(h))

    def lookup(self, masks: np.ndarray) -> np.ndarray:
        """Allowed-space index of each mask, -1 where the mask is not allowed."""
        if self._table is not None:
            return self._table[masks.astype(np.int64)]
        pos = np.searchsorted(self.allowed, masks)
        pos = np.minimum(pos, len(self.allowed) - 1)
        return np.where(self.allowed[pos] == masks, pos, -1)

    def index_of(self, X: SubsetKey) -> int:
        """Position of X among the keys, or -1."""
        if X.mask >> 64:
            return -1
        found = int(self.lookup(np.array([X.mask], dtype=np.uint64))[0])
        return found - 1 if found > 0 else -1


@dataclass(frozen=True, eq=False)
class KTState:
    """Coefficients g(X) on the truncation of a context (absent keys are 0)."""

    context: KTContext
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.context.n_keys,):
            raise ValueError("State values must have one entry per truncation key")
        if not np.isrealobj(self.values):
            raise ValueError("Coefficients must be real")

    @classmethod
    def zeros(cls, context: KTContext) -> "KTState":
        return cls(context, np.zeros(context.n_keys))

    @classmethod
    def from_mapping(
        cls, context: KTContext, g: Mapping[SubsetKey, float]
    ) -> "KTState":
        """Build a state from explicit coefficients; keys must lie in the truncation."""
        values = np.zeros(context.n_keys)
        for X, value in g.items():
            k = context.index_of(X)
            if k < 0:
                raise LatticeError(
                    f"{X!r} is not in the truncation with w_max={context.w_max}"
                )
            values[k] = value
        return cls(context, values)

    @property
    def h(self) -> float:
        return self.context.h

    @property
    def w_max(self) -> int:
        return self.context.w_max

    @property
    def k_max(self) -> int:
        return self.context.k_max

    @property
    def g(self) -> Dict[SubsetKey, float]:
        """Nonzero coefficients keyed by subset."""
        nonzero = np.nonzero(self.values)[0]
        keys = self.context.keys
        return {SubsetKey(int(keys[k])): float(self.values[k]) for k in nonzero}

    @property
    def active_count(self) -> int:
        return int(np.count_nonzero(self.values))

    def __getitem__(self, X: SubsetKey) -> float:
        k = self.context.index_of(X)
        return float(self.values[k]) if k >= 0 else 0.0

    def with_values(self, values: np.ndarray) -> "KTState":
        return KTState(self.context, np.asarray(values, dtype=np.float64))


class TraceRow(NamedTuple):
    iteration: int
    step: float
    energy: float
    norm: float
    active: int


@dataclass
class ContractionDiagnostics:
    """Convergence record and the contraction constants of a solve."""

    M: float
    delta: float
    norm_g: float
    Delta: float
    K: float
    empirical_lipschitz: float
    iterations: List[float]
    trace: List[TraceRow]
    residual: float
    energy: float
    converged: bool
    within_ball: bool
    stagnated: bool = False


def _exp2_polynomial(x: np.ndarray, k_max: int) -> np.ndarray:
    """sum_{k=2}^{k_max} x^k / k!, in Horner form."""
    result = np.full_like(x, 1.0 / math.factorial(k_max))
    for k in range(k_max - 1, 1, -1):
        result = result * x + 1.0 / math.factorial(k)
    return result * x * x


def _dense_bond_spectra(
    context: KTContext, bonds: Sequence[int], values: np.ndarray
) -> np.ndarray:
    """
    Rows of exp2 evaluated on the Walsh-Hadamard spectrum of each bond polynomial.

    The sigma_X commute and square to one, so every product sigma_{X_1} ...
    sigma_{X_k} is a character of the spectrum and exp2 acts pointwise on it.
    """
    dense = np.zeros((len(bonds), 1 << context.lat.n_interior))
    for row, c in enumerate(bonds):
        active = context.active[c]
        dense[row, context.keys[active].astype(np.int64)] = values[active]
    return _exp2_polynomial(walsh_hadamard(dense), context.k_max)


def _dense_bond_sums(
    context: KTContext, bonds: Sequence[int], values: np.ndarray
) -> np.ndarray:
    size = 1 << context.lat.n_interior
    spectrum = np.zeros(size)
    chunk = max(1, DENSE_SERIES_BLOCK // size)
    for start in range(0, len(bonds), chunk):
        rows = list(bonds[start : start + chunk])
        spectra = _dense_bond_spectra(context, rows, values)
        spectrum += context.bond_weights[rows] @ spectra
    return walsh_hadamard(spectrum)[context.allowed.astype(np.int64)] / size


def _bond_series(
    context: KTContext, c: int, values: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """exp2 of the bond-c polynomial as (allowed indices, coefficients)."""
    if context.dense_series:
        size = 1 << context.lat.n_interior
        spectra = _dense_bond_spectra(context, [c], values)
        total = walsh_hadamard(spectra[0])[context.allowed.astype(np.int64)] / size
        support = np.nonzero(total)[0]
        return support, total[support]
    return _sparse_bond_series(context, c, values)


def _sparse_bond_series(
    context: KTContext, c: int, values: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    exp2 of the bond-c polynomial by repeated XOR convolution.

    Powers are carried over arbitrary masks and only the accumulated sum is
    restricted to the allowed space. A partial product is dropped once the
    most it can still add to any coefficient falls below context.series_floor.
    """
    active = context.active[c]
    coeffs = values[active]
    nonzero = coeffs != 0
    if not np.any(nonzero):
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    order = np.argsort(-np.abs(coeffs[nonzero]), kind="stable")
    act_masks = context.keys[active[nonzero]][order]
    act_vals = coeffs[nonzero][order]
    descending = -np.abs(act_vals)

    k_max = context.k_max
    spread = float(np.abs(act_vals).sum())
    # reach[k]: the most a unit term of order k adds over orders k..k_max
    reach = [
        sum(spread**m / math.factorial(k + m) for m in range(k_max - k + 1))
        for k in range(k_max + 1)
    ]

    total = np.zeros(len(context.allowed))
    cur_masks, cur_vals = act_masks, act_vals
    for k in range(2, k_max + 1):
        needed = (context.series_floor / reach[k]) / np.abs(cur_vals)
        counts = np.searchsorted(descending, -needed, side="right")
        n_products = int(counts.sum())
        if n_products > context.term_cap:
            raise SizeCapError(
                f"exp2 of bond {c} needs {n_products} products at order {k}, "
                f"more than the cap of {context.term_cap}"
            )
        if not n_products:
            break
        rows = np.repeat(np.arange(len(cur_vals)), counts)
        cols = np.arange(n_products) - np.repeat(np.cumsum(counts) - counts, counts)
        products = cur_masks[rows] ^ act_masks[cols]
        cur_masks, inverse = np.unique(products, return_inverse=True)
        cur_vals = np.bincount(
            inverse.ravel(),
            weights=cur_vals[rows] * act_vals[cols],
            minlength=len(cur_masks),
        )
        kept = cur_vals != 0
        cur_masks, cur_vals = cur_masks[kept], cur_vals[kept]
        target = context.lookup(cur_masks)
        inside = target >= 0
        total[target[inside]] += cur_vals[inside] / math.factorial(k)
        if not len(cur_vals):
            break
    support = np.nonzero(total)[0]
    return support, total[support]


def _bond_sums(state: KTState, workers: int = 1) -> np.ndarray:
    """sum_c J_c s+_c exp2_c over the allowed space; index 0 is the empty set."""
    context = state.context
    bonds = [c for c in range(context.lat.n_bonds) if len(context.active[c])]
    if context.dense_series:
        return _dense_bond_sums(context, bonds, state.values)

    def one(c: int) -> Tuple[np.ndarray, np.ndarray]:
        return _bond_series(context, c, state.values)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            series = list(pool.map(one, bonds))
    else:
        series = [one(c) for c in bonds]

    total = np.zeros(len(context.allowed))
    for c, (idx, vals) in zip(bonds, series):
        total[idx] += context.bond_weights[c] * vals
    return total


def _F_from_sums(context: KTContext, sums: np.ndarray) -> np.ndarray:
    numerator = sums[1:] + context.h * context.singletons
    return -numerator / context.denominators


def bond_local_exponential(c: int, state: KTState) -> Dict[SubsetKey, float]:
    """
    Coefficients of exp2(sum_{X: c in dX} g(X) sigma_X) as a set-indexed polynomial.

    Powers up to k_max are accumulated by repeated XOR convolution over all
    masks. Only the resulting keys are restricted to the empty set and the
    truncation.

    Args:
        c: Bond index with at least one interior endpoint
        state: The current coefficients

    Returns:
        Map from subset (EMPTY included) to coefficient
    """
    lat = state.context.lat
    if not lat.bond_mask(c):
        raise LatticeError(f"Bond {c} has no interior endpoint")
    idx, vals = _bond_series(state.context, c, state.values)
    allowed = state.context.allowed
    return {SubsetKey(int(allowed[i])): float(v) for i, v in zip(idx, vals)}


def apply_F(state: KTState, cfg: Optional[SolverConfig] = None) -> KTState:
    """
    One application of the Kirkwood-Thomas map.

    F(g)(X) = -[sum_c J_c s+_c exp2_c(X) + h delta_{|X|,1}] / sum_{b in dX} J_b s+_b

    Args:
        state: Coefficients g
        cfg: Solver configuration; only workers is used here

    Returns:
        The state F(g)
    """
    workers = cfg.workers if cfg is not None else 1
    sums = _bond_sums(state, workers)
    return state.with_values(_F_from_sums(state.context, sums))


def ground_energy(state: KTState) -> float:
    """E0 = -sum_b J_b s+_b - sum_c J_c s+_c exp2_c(empty)."""
    sums = _bond_sums(state)
    return state.context.gs.E_cl - float(sums[0])


def _scales(context: KTContext, M: float) -> np.ndarray:
    return (abs(context.h) * M) ** (-context.weights.astype(np.float64))


def _norm(context: KTContext, values: np.ndarray, M: float) -> float:
    if not np.any(values):
        return 0.0
    if context.h == 0:
        return float("inf")
    terms = context.denominators * np.abs(values) * _scales(context, M)
    return float((context.incidence @ terms).max())


def kt_norm(state: KTState, M: float) -> float:
    """
    sup over bonds c of
    sum_{X: c in dX} (sum_{b in dX} J_b s+_b) |g(X)| (|h| M)^(-w(X)).

    At h = 0 the zero state has norm 0 and any other state infinite norm.
    """
    if M <= 0:
        raise ValueError(f"M must be positive, got {M}")
    return _norm(state.context, state.values, M)


def weakest_excitation(context: KTContext) -> float:
    """Smallest sum_{b in dX} J_b s+_b over the truncation."""
    return float(context.denominators.min())


def averaged_gap(state: KTState, M: float) -> float:
    """
    Delta(g): the |g|-weighted average of excitation energies that the norm sees.

    Delta(g) = ||g|| / sup_c sum_{X: c in dX} |g(X)| (|h| M)^(-w(X)). For g = 0
    the weakest excitation in the truncation is returned.
    """
    context = state.context
    if not np.any(state.values):
        return weakest_excitation(context)
    scales = _scales(context, M) if context.h else np.ones(context.n_keys)
    magnitude = np.abs(state.values) * scales
    weighted = float((context.incidence @ (context.denominators * magnitude)).max())
    plain = float((context.incidence @ magnitude).max())
    return weighted / plain


def lipschitz_bound(x: float) -> float:
    """K(x) = e^x (1 + x) - 1 for x = delta / Delta."""
    return math.exp(x) * (1.0 + x) - 1.0


def delta_over_Delta_root() -> float:
    """The positive root of e^x (1 + x) = 3/2, i.e. K(x) = 1/2."""
    return float(
        brentq(lambda x: math.exp(x) * (1.0 + x) - 1.5, 0.0, 1.0, xtol=1e-15)
    )


def residual(state: KTState, cfg: SolverConfig) -> float:
    """||F(g) - g|| in the solver norm."""
    cfg = cfg.resolve(state.h)
    assert cfg.M is not None
    image = apply_F(state, cfg)
    return _norm(state.context, image.values - state.values, cfg.M)


def contraction_check(g: KTState, g_prime: KTState, cfg: SolverConfig) -> float:
    """
    Ratio ||F(g) - F(g')|| / ||g - g'|| for two admissible states.

    Args:
        g: First probe, ||g|| <= delta
        g_prime: Second probe, ||g'|| <= delta
        cfg: Solver configuration

    Returns:
        The empirical Lipschitz ratio
    """
    if g.context is not g_prime.context:
        raise ValueError("Probes must share a context")
    cfg = cfg.resolve(g.h)
    assert cfg.M is not None
    difference = _norm(g.context, g.values - g_prime.values, cfg.M)
    if difference == 0:
        raise ValueError("Contraction ratio is undefined for identical states")
    for probe in (g, g_prime):
        if kt_norm(probe, cfg.M) > cfg.delta * (1 + 1e-9):
            raise FieldBoundError("Probe lies outside the admissible ball")
    image = apply_F(g, cfg).values - apply_F(g_prime, cfg).values
    return _norm(g.context, image, cfg.M) / difference


def random_admissible(
    context: KTContext, cfg: SolverConfig, radius: float, rng: np.random.Generator
) -> KTState:
    """
    A random state with norm exactly radius.

    Coefficients are Gaussian with the natural size (|h| M)^w(X) / J(X)
    before rescaling.
    """
    if context.h == 0:
        raise FieldBoundError("Admissible probes need a nonzero field")
    cfg = cfg.resolve(context.h)
    assert cfg.M is not None
    weights = context.denominators * _scales(context, cfg.M)
    raw = rng.standard_normal(context.n_keys) / weights
    norm = _norm(context, raw, cfg.M)
    return KTState(context, raw * (radius / norm))


def perturbative_energy_shift(
    lat: Lattice, dis: DisorderSample, gs: ClassicalGroundState, h: float
) -> float:
    """Second-order shift -sum_i h^2 / (2 sum_{b containing i} J_b s+_b)."""
    fields = local_fields(lat, dis, gs)
    if np.any(fields <= 0):
        raise DegenerateGroundStateError("A single-site flip has non-positive cost")
    return float(-np.sum(h * h / (2.0 * fields)))


def _stagnated(steps: List[float], norm_g: float, cfg: SolverConfig) -> bool:
    """No decrease over the last plateau_window steps, at a step below rtol ||g||."""
    window = cfg.plateau_window
    if len(steps) <= window or steps[-1] > cfg.plateau_rtol * norm_g:
        return False
    return min(steps[-window:]) >= min(steps[:-window])


def solve_fixed_point(
    cfg: SolverConfig, context: KTContext
) -> Tuple[KTState, ContractionDiagnostics]:
    """
    Iterate g <- F(g) from g = 0 until successive iterates are within tol.

    A run whose steps stall at the rounding floor of the norm also counts as
    converged (diagnostics.stagnated). Iterates with norm above
    DIVERGENCE_FACTOR * delta are treated as divergent.

    Args:
        cfg: Solver configuration (M = None picks 1/(2|h|))
        context: Problem instance and truncation

    Returns:
        The converged state and its diagnostics
    """
    h = context.h
    cfg.check_field(h)
    cfg = cfg.resolve(h)
    assert cfg.M is not None

    state = KTState.zeros(context)
    sums = _bond_sums(state, cfg.workers)
    steps: List[float] = []
    trace: List[TraceRow] = []
    converged = stagnated = False

    with np.errstate(over="ignore", invalid="ignore"):
        for iteration in range(1, cfg.max_iter + 1):
            new = state.with_values(_F_from_sums(context, sums))
            if not np.all(np.isfinite(new.values)):
                steps.append(float("inf"))
                break
            step = _norm(context, new.values - state.values, cfg.M)
            norm_new = _norm(context, new.values, cfg.M)
            if norm_new > DIVERGENCE_FACTOR * cfg.delta:
                steps.append(step)
                break
            sums = _bond_sums(new, cfg.workers)
            energy = context.gs.E_cl - float(sums[0])
            steps.append(step)
            trace.append(TraceRow(iteration, step, energy, norm_new, new.active_count))
            state = new
            logger.debug("Iteration %d: step %.3e, E0 %.12g", iteration, step, energy)
            if not np.isfinite(energy):
                break
            if step < cfg.tol:
                converged = True
                break
            if _stagnated(steps, norm_new, cfg):
                converged = stagnated = True
                logger.info(
                    "KT step stalled at %.3e after %d iterations; "
                    "accepting the rounding floor",
                    step,
                    iteration,
                )
                break

    if not converged:
        logger.warning(
            "KT iteration did not converge at h=%g after %d steps", h, len(steps)
        )
        raise ConvergenceError(
            f"No convergence at h={h} within {cfg.max_iter} iterations "
            f"(last step {steps[-1]:.3e})",
            trace=steps,
        )

    final_residual = _norm(context, _F_from_sums(context, sums) - state.values, cfg.M)
    norm_g = _norm(context, state.values, cfg.M)
    within_ball = norm_g <= cfg.delta
    if not within_ball:
        logger.warning("Fixed point norm %.4g exceeds delta = %.4g", norm_g, cfg.delta)

    ratios = [b / a for a, b in zip(steps, steps[1:]) if a > 0]
    Delta = averaged_gap(state, cfg.M)
    diagnostics = ContractionDiagnostics(
        M=cfg.M,
        delta=cfg.delta,
        norm_g=norm_g,
        Delta=Delta,
        K=lipschitz_bound(cfg.delta / Delta),
        empirical_lipschitz=max(ratios, default=0.0),
        iterations=steps,
        trace=trace,
        residual=final_residual,
        energy=trace[-1].energy,
        converged=True,
        within_ball=within_ball,
        stagnated=stagnated,
    )
    logger.info(
        "KT converged at h=%g in %d iterations: E0=%.12g, ||g||=%.4g",
        h,
        len(steps),
        diagnostics.energy,
        norm_g,
    )
    return state, diagnostics


@dataclass(frozen=True, eq=False)
class WavefunctionAmplitudes:
    """Amplitudes sigma_D psi(sigma) over bit-encoded rotated-frame configurations."""

    basis: np.ndarray
    values: np.ndarray

    def __getitem__(self, config: int) -> float:
        return float(self.values[config])

    def items(self):
        return zip(self.basis.tolist(), self.values.tolist())

    def normalized(self) -> np.ndarray:
        return self.values / np.linalg.norm(self.values)


def wavefunction_amplitudes(
    state: KTState, gs: ClassicalGroundState, max_interior: Optional[int] = None
) -> WavefunctionAmplitudes:
    """
    Evaluate sigma_D exp(-1/2 sum_X g(X) sigma_X) for every interior configuration.

    sum_X g(X) sigma_X over all configurations is one Walsh-Hadamard transform
    of g laid out on the full mask space.

    Args:
        state: Coefficients g
        gs: Classical ground state supplying D
        max_interior: Size cap (defaults to TFEA_WAVEFUNCTION_MAX_INTERIOR)

    Returns:
        Unnormalized amplitudes with a normalized() view
    """
    cap = WAVEFUNCTION_MAX_INTERIOR if max_interior is None else max_interior
    n = state.context.lat.n_interior
    if n > cap:
        raise SizeCapError(
            f"Wavefunction over {n} interior spins exceeds the cap of {cap}"
        )

    dense = np.zeros(1 << n)
    dense[state.context.keys.astype(np.int64)] = state.values
    exponent = walsh_hadamard(dense)

    basis = np.arange(1 << n, dtype=np.int64)
    sign = np.ones(1 << n)
    for k in gs.D.sites:
        sign *= 1 - 2 * ((basis >> k) & 1)
    return WavefunctionAmplitudes(basis=basis, values=sign * np.exp(-0.5 * exponent))


def write_trace(diagnostics: ContractionDiagnostics, path: str) -> None:
    """Write per-iteration rows (iteration, step, E0, norm, active keys) as CSV."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "step", "E0", "norm", "active"])
        for row in diagnostics.trace:
            writer.writerow(
                [
                    row.iteration,
                    repr(row.step),
                    repr(row.energy),
                    repr(row.norm),
                    row.active,
                ]
            )


def single_site_fixed_point(J_local: float, h: float) -> Tuple[float, float]:
    """Isolated site in closed form: g = asinh(-h/J), E0 shift J - sqrt(J^2 + h^2)."""
    return math.asinh(-h / J_local), J_local - math.hypot(J_local, h)
