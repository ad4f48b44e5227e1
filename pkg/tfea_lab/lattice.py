"""
Finite hypercubic lattice geometry and the subset algebra used by the
Kirkwood-Thomas map: bond boundaries, symmetric differences and the
connected weight w(X).

Sites are the integer points of (-L/2, L/2]^d in lexicographic order. The
interior is the box with the outer shell removed. Subsets of the interior
are bit masks over interior indices (bit k set means interior site k is in
the set); the same bit pattern is used for interior spin configurations,
where a set bit means sigma = -1.
"""

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    NamedTuple,
    Optional,
    Tuple,
)

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .config import TRUNCATION_CAP
from .errors import LatticeError, SizeCapError

logger = logging.getLogger(__name__)

BRUTEFORCE_MAX_INTERIOR = 20


@dataclass(frozen=True, order=True)
class SubsetKey:
    """A subset of interior sites, stored canonically as a bit mask."""

    mask: int = 0

    @classmethod
    def from_sites(cls, sites: Iterable[int]) -> "SubsetKey":
        """
        Build a key from interior-site indices.

        Args:
            sites: Interior indices (duplicates cancel pairwise, as for sigma_X)

        Returns:
            The canonical key
        """
        mask = 0
        for site in sites:
            if site < 0:
                raise LatticeError(f"Negative interior index {site}")
            mask ^= 1 << int(site)
        return cls(mask)

    @property
    def sites(self) -> Tuple[int, ...]:
        """Sorted interior indices contained in the subset."""
        out = []
        mask = self.mask
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return tuple(out)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __bool__(self) -> bool:
        return self.mask != 0

    def __iter__(self) -> Iterator[int]:
        return iter(self.sites)

    def __contains__(self, site: object) -> bool:
        return isinstance(site, int) and site >= 0 and bool(self.mask >> site & 1)

    def __xor__(self, other: "SubsetKey") -> "SubsetKey":
        return SubsetKey(self.mask ^ other.mask)

    def __repr__(self) -> str:
        return f"SubsetKey({set(self.sites) or '{}'})"


EMPTY = SubsetKey(0)


class Bond(NamedTuple):
    """A nearest-neighbour bond between lattice sites i < j."""

    index: int
    i: int
    j: int
    frozen: bool


@dataclass(frozen=True, eq=False)
class Lattice:
    """
    Open-box hypercubic lattice with a frozen outer shell.

    Instances are immutable apart from the connected-weight cache, which is
    guarded by a lock so one lattice can be shared between worker threads.
    """

    d: int
    L: int
    coords: np.ndarray
    interior: Tuple[int, ...]
    site_to_interior: np.ndarray
    bonds: Tuple[Bond, ...]
    adjacency: Tuple[Tuple[int, ...], ...]
    _bond_lookup: Dict[Tuple[int, int], int] = field(repr=False)
    _weight_cache: Dict[int, int] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _memo: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def n_sites(self) -> int:
        return int(self.coords.shape[0])

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @property
    def sites(self) -> List[Tuple[int, ...]]:
        """Coordinate vectors in site order."""
        return [tuple(int(c) for c in row) for row in self.coords]

    def is_interior(self, site: int) -> bool:
        return self.site_to_interior[site] >= 0

    def bond_index(self, i: int, j: int) -> int:
        """Index of the bond joining sites i and j."""
        key = (min(i, j), max(i, j))
        if key not in self._bond_lookup:
            raise LatticeError(f"Sites {i} and {j} are not nearest neighbours")
        return self._bond_lookup[key]

    def bond_mask(self, b: int) -> int:
        """Interior bit mask of the endpoints of bond b (0, 1 or 2 bits)."""
        bond = self.bonds[b]
        mask = 0
        for site in (bond.i, bond.j):
            k = int(self.site_to_interior[site])
            if k >= 0:
                mask |= 1 << k
        return mask

    def bond_mask_array(self) -> np.ndarray:
        """Bond endpoint masks as uint64; requires at most 64 interior sites."""
        if self.n_interior > 64:
            raise SizeCapError(
                f"Interior has {self.n_interior} sites; "
                "bit-array paths support at most 64"
            )
        cached = self._memo.get("bond_masks")
        if cached is None:
            cached = np.array(
                [self.bond_mask(b) for b in range(self.n_bonds)], dtype=np.uint64
            )
            self._memo["bond_masks"] = cached
        return cached  # type: ignore[return-value]

    def interior_neighbours(self) -> Tuple[int, ...]:
        """Per interior index, the bit mask of interior nearest neighbours."""
        cached = self._memo.get("interior_neighbours")
        if cached is None:
            masks = [0] * self.n_interior
            for bond in self.bonds:
                a = int(self.site_to_interior[bond.i])
                b = int(self.site_to_interior[bond.j])
                if a >= 0 and b >= 0:
                    masks[a] |= 1 << b
                    masks[b] |= 1 << a
            cached = tuple(masks)
            self._memo["interior_neighbours"] = cached
        return cached  # type: ignore[return-value]

    def interior_distances(self) -> np.ndarray:
        """All-pairs hop distances on the interior grid graph."""
        cached = self._memo.get("interior_distances")
        if cached is None:
            cached = shortest_path(interior_grid(self), method="D", unweighted=True)
            self._memo["interior_distances"] = cached
        return cached  # type: ignore[return-value]

    def validate_subset(self, X: SubsetKey) -> None:
        """Raise LatticeError if X contains anything outside the interior."""
        if X.mask < 0 or X.mask >> self.n_interior:
            raise LatticeError(f"{X!r} is not a subset of the interior")


def build_lattice(d: int, L: int) -> Lattice:
    """
    Build the box lattice Z^d intersected with (-L/2, L/2]^d.

    Args:
        d: Spatial dimension, at least 1
        L: Even linear size, at least 4

    Returns:
        The lattice with its interior, bonds and adjacency populated
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise LatticeError(f"Dimension must be an integer >= 1, got {d!r}")
    if not isinstance(L, (int, np.integer)) or L < 4 or L % 2:
        raise LatticeError(f"L must be an even integer >= 4, got {L!r}")
    d, L = int(d), int(L)

    axis = np.arange(-L // 2 + 1, L // 2 + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    coords = np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int64)
    n_sites = coords.shape[0]

    inner = np.all((coords > -L // 2 + 1) & (coords < L // 2), axis=1)
    interior = tuple(int(s) for s in np.nonzero(inner)[0])
    site_to_interior = np.full(n_sites, -1, dtype=np.int64)
    site_to_interior[list(interior)] = np.arange(len(interior))

    pairs = []
    index = np.arange(n_sites).reshape((L,) * d)
    for k in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[k] = slice(0, L - 1)
        hi[k] = slice(1, L)
        pairs.append(
            np.stack(
                [index[tuple(lo)].reshape(-1), index[tuple(hi)].reshape(-1)], axis=1
            )
        )
    pair_array = np.concatenate(pairs, axis=0)
    order = np.lexsort((pair_array[:, 1], pair_array[:, 0]))
    pair_array = pair_array[order]

    bonds = []
    lookup = {}
    incident: List[List[int]] = [[] for _ in range(n_sites)]
    for b, (i, j) in enumerate(pair_array.tolist()):
        frozen = not inner[i] and not inner[j]
        bonds.append(Bond(b, i, j, frozen))
        lookup[(i, j)] = b
        incident[i].append(b)
        incident[j].append(b)

    logger.debug(
        "Built lattice d=%d L=%d: %d sites, %d interior, %d bonds",
        d,
        L,
        n_sites,
        len(interior),
        len(bonds),
    )
    return Lattice(
        d=d,
        L=L,
        coords=coords,
        interior=interior,
        site_to_interior=site_to_interior,
        bonds=tuple(bonds),
        adjacency=tuple(tuple(x) for x in incident),
        _bond_lookup=lookup,
    )


def interior_grid(lat: Lattice) -> csr_matrix:
    """Symmetric 0/1 adjacency matrix of the interior sites, in interior order."""
    rows, cols = [], []
    for a, nbrs in enumerate(lat.interior_neighbours()):
        for b in SubsetKey(nbrs).sites:
            rows.append(a)
            cols.append(b)
    n = lat.n_interior
    data = np.ones(len(rows))
    return csr_matrix((data, (rows, cols)), shape=(n, n), dtype=np.float64)


def bond_boundary(lat: Lattice, X: SubsetKey) -> FrozenSet[int]:
    """
    Bonds with exactly one endpoint in X.

    Boundary-shell endpoints are never in X, so a bond from X to the shell
    always belongs to the boundary.
    """
    lat.validate_subset(X)
    out = set()
    for k in X.sites:
        site = lat.interior[k]
        for b in lat.adjacency[site]:
            if bin(lat.bond_mask(b) & X.mask).count("1") == 1:
                out.add(b)
    return frozenset(out)


def sym_diff(X: SubsetKey, Y: SubsetKey) -> SubsetKey:
    """Symmetric difference, the group law behind sigma_X sigma_Y = sigma_{X^Y}."""
    return X ^ Y


def _steiner_edges(dist: np.ndarray, terminals: List[int]) -> float:
    # Dreyfus-Wagner: dp[S][v] = cheapest tree spanning terminals S plus v
    k = len(terminals)
    full = (1 << k) - 1
    n = dist.shape[0]
    dp = np.full((full + 1, n), np.inf)
    for t_idx, t in enumerate(terminals):
        dp[1 << t_idx] = dist[t]
    for mask in range(3, full + 1):
        if mask & (mask - 1) == 0:
            continue
        low = mask & -mask
        merge = np.full(n, np.inf)
        sub = (mask - 1) & mask
        while sub:
            if sub & low:
                np.minimum(merge, dp[sub] + dp[mask ^ sub], out=merge)
            sub = (sub - 1) & mask
        dp[mask] = (dist + merge[None, :]).min(axis=1)
    return float(dp[full].min())


def connected_weight(lat: Lattice, X: SubsetKey) -> int:
    """
    Size of the smallest connected interior set containing X.

    Computed as the minimum Steiner tree edge count plus one, with paths
    restricted to the interior grid. Results are cached on the lattice.

    Args:
        lat: The lattice
        X: Nonempty interior subset

    Returns:
        w(X)
    """
    if not X:
        raise LatticeError("connected_weight is undefined for the empty set")
    lat.validate_subset(X)

    cached = lat._weight_cache.get(X.mask)
    if cached is not None:
        return cached

    terminals = list(X.sites)
    if len(terminals) == 1:
        weight = 1
    else:
        edges = _steiner_edges(lat.interior_distances(), terminals)
        if not np.isfinite(edges):
            raise LatticeError(f"{X!r} is not connected within the interior")
        weight = int(round(edges)) + 1

    with lat._lock:
        lat._weight_cache[X.mask] = weight
    return weight


def connected_subsets(lat: Lattice, max_size: int) -> List[List[int]]:
    """
    Connected interior subsets (lattice animals) grouped by size.

    Args:
        lat: The lattice
        max_size: Largest animal size to generate

    Returns:
        levels[s - 1] is the sorted list of masks of animals with s sites
    """
    nbrs = lat.interior_neighbours()
    level = sorted({1 << k for k in range(lat.n_interior)})
    levels = []
    for size in range(1, max_size + 1):
        if not level:
            break
        levels.append(level)
        if size == max_size:
            break
        grown = set()
        for animal in level:
            reach = 0
            rest = animal
            while rest:
                low = rest & -rest
                reach |= nbrs[low.bit_length() - 1]
                rest ^= low
            reach &= ~animal
            while reach:
                low = reach & -reach
                grown.add(animal | low)
                reach ^= low
        level = sorted(grown)
    return levels


def connected_weight_bruteforce(lat: Lattice, X: SubsetKey) -> int:
    """
    Reference w(X): scan every connected interior subset in order of size.

    Only feasible for small interiors; used as an oracle for connected_weight.
    """
    if not X:
        raise LatticeError("connected_weight is undefined for the empty set")
    lat.validate_subset(X)
    if lat.n_interior > BRUTEFORCE_MAX_INTERIOR:
        raise SizeCapError(
            f"Brute-force weight needs at most {BRUTEFORCE_MAX_INTERIOR} interior sites"
        )
    animals = lat._memo.get("all_animals")
    if animals is None:
        levels = connected_subsets(lat, lat.n_interior)
        masks = np.array([m for level in levels for m in level], dtype=np.uint64)
        sizes = np.array(
            [s + 1 for s, level in enumerate(levels) for _ in level], dtype=np.int64
        )
        animals = (masks, sizes)
        lat._memo["all_animals"] = animals
    masks, sizes = animals  # type: ignore[misc]
    x = np.uint64(X.mask)
    hits = np.nonzero((masks & x) == x)[0]
    return int(sizes[hits[0]])


def enumerate_truncation(
    lat: Lattice, w_max: int, cap: Optional[int] = None
) -> List[SubsetKey]:
    """
    All nonempty interior subsets with connected weight at most w_max.

    Every such X is a subset of some connected set of size w(X), so the
    sequence is generated from lattice animals of size <= w_max.

    Args:
        lat: The lattice
        w_max: Weight cutoff
        cap: Maximum number of subsets (defaults to TFEA_TRUNCATION_CAP)

    Returns:
        Keys ordered by (weight, mask)
    """
    masks, _ = truncation_table(lat, w_max, cap)
    return [SubsetKey(int(m)) for m in masks]


def truncation_table(
    lat: Lattice, w_max: int, cap: Optional[int] = None
) -> Tuple[List[int], List[int]]:
    """Masks and weights of the truncation, ordered by (weight, mask)."""
    cap = TRUNCATION_CAP if cap is None else cap
    if w_max < 1:
        return [], []

    weights: Dict[int, int] = {}
    for size, level in enumerate(connected_subsets(lat, w_max), start=1):
        for animal in level:
            sub = animal
            while sub:
                if sub not in weights:
                    weights[sub] = size
                    if len(weights) > cap:
                        raise SizeCapError(
                            f"Truncation with w_max={w_max} "
                            f"exceeds the cap of {cap} subsets"
                        )
                sub = (sub - 1) & animal

    with lat._lock:
        for mask, weight in weights.items():
            lat._weight_cache.setdefault(mask, weight)

    ordered = sorted(weights.items(), key=lambda item: (item[1], item[0]))
    logger.debug("Truncation w_max=%d holds %d subsets", w_max, len(ordered))
    return [m for m, _ in ordered], [w for _, w in ordered]


def plaquettes(lat: Lattice) -> List[Tuple[int, int, int, int]]:
    """
    Elementary squares as cycles of four bond indices.

    Each plaquette (i, i+e, i+e+e', i+e') is returned as the bonds
    {i,i+e}, {i+e,i+e+e'}, {i+e',i+e+e'}, {i,i+e'}.
    """
    if lat.d < 2:
        return []
    L = lat.L
    strides = [L ** (lat.d - 1 - k) for k in range(lat.d)]
    shifted = lat.coords + L // 2 - 1
    out = []
    for site in range(lat.n_sites):
        for k, l in itertools.combinations(range(lat.d), 2):
            if shifted[site, k] == L - 1 or shifted[site, l] == L - 1:
                continue
            a = site + strides[k]
            b = site + strides[l]
            c = a + strides[l]
            out.append(
                (
                    lat.bond_index(site, a),
                    lat.bond_index(a, c),
                    lat.bond_index(b, c),
                    lat.bond_index(site, b),
                )
            )
    return out


def spins_from_configs(configs: np.ndarray, n_interior: int) -> np.ndarray:
    """
    Map bit-encoded interior configurations to +/-1 spins.

    Args:
        configs: Integer array of configurations
        n_interior: Number of interior sites

    Returns:
        int8 array of shape (len(configs), n_interior)
    """
    configs = np.asarray(configs, dtype=np.int64)
    bits = (configs[:, None] >> np.arange(n_interior, dtype=np.int64)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def walsh_hadamard(values: np.ndarray) -> np.ndarray:
    """
    Fast Walsh-Hadamard transform over bit-indexed configurations.

    out[k] = sum_j (-1)^{popcount(j & k)} values[j]; the transform is its own
    inverse up to a factor of len(values). A 2-d input is transformed row by row.
    """
    out = np.array(values, dtype=np.result_type(values, np.float64), copy=True)
    n = out.shape[-1]
    if n & (n - 1):
        raise ValueError(f"Length {n} is not a power of two")
    half = 1
    while half < n:
        blocks = out.reshape(out.shape[:-1] + (-1, 2, half))
        a = blocks[..., 0, :].copy()
        b = blocks[..., 1, :]
        blocks[..., 0, :] += b
        blocks[..., 1, :] = a - b
        half *= 2
    return out
