"""
Exact diagonalization of the frozen-boundary transverse-field EA Hamiltonian.

Boundary spins are pinned to +1, so the Hilbert space is spanned by the
2^n interior configurations (bit k set means interior spin k is down).
Two frames are supported:

    classical: H  = E_cl(sigma) on the diagonal, -h flipping one interior spin
    rotated:   H~ = C - h sum_i sigma^z_i on the diagonal, -J_b flipping the
               interior endpoints of bond b

They are related by a Hadamard rotation of every interior spin and share
a spectrum. The rotated frame is the basis of the Kirkwood-Thomas expansion.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .classical_ground import IsingTerms
from .config import DUHAMEL_MAX_STATES, ED_DENSE_MAX_STATES, ED_MAX_INTERIOR
from .disorder import DisorderSample
from .errors import ConvergenceError, SizeCapError
from .kt_solver import WavefunctionAmplitudes
from .lattice import Lattice, walsh_hadamard

logger = logging.getLogger(__name__)

FRAMES = ("classical", "rotated")
RESIDUAL_TOL = 1e-10


def _parity(basis: np.ndarray, mask: int) -> np.ndarray:
    """(-1)^{popcount(basis & mask)} as float64."""
    sign = np.ones(basis.shape[0])
    k = 0
    while mask >> k:
        if mask >> k & 1:
            sign *= 1 - 2 * ((basis >> k) & 1)
        k += 1
    return sign


@dataclass(frozen=True, eq=False)
class FrozenHamiltonian:
    """
    H as a diagonal plus spin-flip terms.

    Attributes:
        diagonal: Diagonal entries over the basis
        flips: (flip mask, coefficient) pairs; each maps sigma to sigma ^ mask
        constant: Energy of the frozen-frozen bonds, included in the diagonal
    """

    lat: Lattice
    dis: DisorderSample
    h: float
    frame: str
    diagonal: np.ndarray
    flips: Tuple[Tuple[int, float], ...]
    constant: float
    _cache: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def n_interior(self) -> int:
        return self.lat.n_interior

    @property
    def dim(self) -> int:
        return int(self.diagonal.shape[0])

    @property
    def basis(self) -> np.ndarray:
        return np.arange(self.dim, dtype=np.int64)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Matrix-free H v."""
        v = np.asarray(v, dtype=np.float64).reshape(self.dim)
        out = self.diagonal * v
        basis = self.basis
        for mask, coefficient in self.flips:
            out += coefficient * v[basis ^ mask]
        return out

    def to_sparse(self) -> csr_matrix:
        cached = self._cache.get("sparse")
        if cached is None:
            basis = self.basis
            rows = [basis]
            cols = [basis]
            data = [self.diagonal]
            for mask, coefficient in self.flips:
                rows.append(basis)
                cols.append(basis ^ mask)
                data.append(np.full(self.dim, coefficient))
            cached = coo_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.dim, self.dim),
            ).tocsr()
            self._cache["sparse"] = cached
        return cached  # type: ignore[return-value]

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def as_operator(self) -> LinearOperator:
        return LinearOperator(
            (self.dim, self.dim),
            matvec=self.matvec,
            rmatvec=self.matvec,
            dtype=np.float64,
        )


def build_hamiltonian(
    lat: Lattice,
    dis: DisorderSample,
    h: float,
    frame: str = "rotated",
    max_interior: Optional[int] = None,
) -> FrozenHamiltonian:
    """
    Assemble the frozen-boundary Hamiltonian on the interior configurations.

    Args:
        lat: The lattice
        dis: The couplings
        h: Transverse field
        frame: "rotated" (default) or "classical"
        max_interior: Interior size cap (defaults to TFEA_ED_MAX_INTERIOR)

    Returns:
        The Hamiltonian
    """
    if frame not in FRAMES:
        raise ValueError(f"Unknown frame {frame!r}; expected one of {FRAMES}")
    cap = ED_MAX_INTERIOR if max_interior is None else max_interior
    n = lat.n_interior
    if n > cap:
        raise SizeCapError(
            f"Exact diagonalization over {n} interior spins exceeds the cap of {cap}"
        )

    terms = IsingTerms.build(lat, dis)
    basis = np.arange(1 << n, dtype=np.int64)
    flips: Dict[int, float] = {}

    if frame == "classical":
        diagonal = terms.energies(basis)
        if h:
            for k in range(n):
                flips[1 << k] = -float(h)
    else:
        down = np.zeros(1 << n, dtype=np.int64)
        for k in range(n):
            down += (basis >> k) & 1
        diagonal = terms.constant - float(h) * (n - 2 * down).astype(np.float64)
        for a, b, J in zip(terms.pair_a, terms.pair_b, terms.pair_J):
            mask = (1 << int(a)) | (1 << int(b))
            flips[mask] = flips.get(mask, 0.0) - float(J)
        for a, J in zip(terms.edge_site, terms.edge_J):
            mask = 1 << int(a)
            flips[mask] = flips.get(mask, 0.0) - float(J)

    logger.debug(
        "Built %s-frame Hamiltonian: dim %d, %d flip terms", frame, 1 << n, len(flips)
    )
    return FrozenHamiltonian(
        lat=lat,
        dis=dis,
        h=float(h),
        frame=frame,
        diagonal=diagonal,
        flips=tuple(sorted((m, c) for m, c in flips.items() if c != 0.0)),
        constant=terms.constant,
    )


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Lowest eigenpairs, plus the full spectrum when it was computed densely."""

    E0: float
    E1: float
    ground_vector: np.ndarray
    frame: str
    spectrum: Optional[np.ndarray] = None
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return self.E1 - self.E0


def _check_residual(Hf: FrozenHamiltonian, energy: float, vector: np.ndarray) -> None:
    residual = float(np.linalg.norm(Hf.matvec(vector) - energy * vector))
    if residual > RESIDUAL_TOL * max(1.0, abs(energy)):
        raise ConvergenceError(f"Eigenpair residual {residual:.3e} is above tolerance")


def ground_state_ed(
    Hf: FrozenHamiltonian, dense_max: Optional[int] = None
) -> SpectralResult:
    """
    Two lowest eigenpairs of the Hamiltonian.

    Purely diagonal matrices are sorted directly, small ones go through a dense
    symmetric solver, larger ones through ARPACK with the matrix-free operator.

    Args:
        Hf: The Hamiltonian
        dense_max: Largest dimension for the dense path
            (defaults to TFEA_ED_DENSE_MAX_STATES)

    Returns:
        The spectral result with a unit-norm ground vector
    """
    dense_max = ED_DENSE_MAX_STATES if dense_max is None else dense_max

    if not Hf.flips:
        order = np.argsort(Hf.diagonal, kind="stable")
        vector = np.zeros(Hf.dim)
        vector[order[0]] = 1.0
        return SpectralResult(
            E0=float(Hf.diagonal[order[0]]),
            E1=float(Hf.diagonal[order[1]]),
            ground_vector=vector,
            frame=Hf.frame,
        )

    if Hf.dim <= dense_max:
        return full_spectrum(Hf, max_states=Hf.dim)

    v0 = np.random.default_rng(0).standard_normal(Hf.dim)
    try:
        values, vectors = eigsh(Hf.as_operator(), k=2, which="SA", tol=0, v0=v0)
    except ArpackNoConvergence as e:
        raise ConvergenceError(f"Iterative eigensolver did not converge: {e}") from e
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    ground = vectors[:, 0] / np.linalg.norm(vectors[:, 0])
    _check_residual(Hf, float(values[0]), ground)
    logger.debug("ARPACK: E0=%.12g gap=%.6g", values[0], values[1] - values[0])
    return SpectralResult(
        E0=float(values[0]), E1=float(values[1]), ground_vector=ground, frame=Hf.frame
    )


def full_spectrum(
    Hf: FrozenHamiltonian, max_states: Optional[int] = None
) -> SpectralResult:
    """Complete eigendecomposition, capped at TFEA_DUHAMEL_MAX_STATES."""
    cap = DUHAMEL_MAX_STATES if max_states is None else max_states
    if Hf.dim > cap:
        raise SizeCapError(
            f"Dense spectrum of dimension {Hf.dim} exceeds the cap of {cap}"
        )
    cached = Hf._cache.get("spectrum")
    if cached is not None:
        return cached  # type: ignore[return-value]
    values, vectors = scipy.linalg.eigh(Hf.to_dense())
    ground = vectors[:, 0] / np.linalg.norm(vectors[:, 0])
    _check_residual(Hf, float(values[0]), ground)
    result = SpectralResult(
        E0=float(values[0]),
        E1=float(values[1]),
        ground_vector=ground,
        frame=Hf.frame,
        spectrum=values,
        eigenvectors=vectors,
    )
    Hf._cache["spectrum"] = result
    return result


@dataclass(frozen=True)
class ZString:
    """The observable prod_{k in mask} sigma^z_k over interior spins.

    Mask 0 is the identity.
    """

    mask: int
    label: str = ""

    def apply(self, Hf: FrozenHamiltonian, vectors: np.ndarray) -> np.ndarray:
        """A @ vectors in the frame of Hf."""
        basis = Hf.basis
        if Hf.frame == "classical":
            return _parity(basis, self.mask)[:, None] * vectors
        return vectors[basis ^ self.mask]


def identity() -> ZString:
    return ZString(0, "1")


def site_z(lat: Lattice, site: int) -> ZString:
    """sigma^z at a lattice site; boundary sites are the constant +1."""
    k = int(lat.site_to_interior[site])
    return ZString(1 << k if k >= 0 else 0, f"z{site}")


def bond_z(lat: Lattice, b: int) -> ZString:
    """sigma^z_i sigma^z_j for bond b."""
    return ZString(lat.bond_mask(b), f"zz{b}")


def z_product(lat: Lattice, sites: Iterable[int]) -> ZString:
    mask = 0
    for site in sites:
        mask ^= site_z(lat, site).mask
    return ZString(mask, "z" + "_".join(str(s) for s in sites))


def observables(lat: Lattice) -> Dict[str, ZString]:
    """Identity, every site sigma^z and every bond sigma^z_b, keyed by label."""
    out = {"1": identity()}
    for k, site in enumerate(lat.interior):
        out[f"z{site}"] = ZString(1 << k, f"z{site}")
    for b in range(lat.n_bonds):
        out[f"zz{b}"] = bond_z(lat, b)
    return out


def _eigenbasis(
    Hf: FrozenHamiltonian, A: ZString, spectral: SpectralResult
) -> np.ndarray:
    V = spectral.eigenvectors
    assert V is not None
    return V.T @ A.apply(Hf, V)


def _boltzmann(
    spectral: SpectralResult, beta: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    assert spectral.spectrum is not None
    shifted = spectral.spectrum - spectral.spectrum[0]
    weights = np.exp(-beta * shifted)
    return shifted, weights, float(weights.sum())


def thermal_expectation(
    Hf: FrozenHamiltonian,
    A: ZString,
    beta: float,
    spectral: Optional[SpectralResult] = None,
) -> float:
    """<A> = Tr(A e^{-beta H}) / Z on the dense spectrum."""
    spectral = spectral or full_spectrum(Hf)
    V = spectral.eigenvectors
    assert V is not None
    _, weights, z = _boltzmann(spectral, beta)
    diagonal = np.einsum("cn,cn->n", V, A.apply(Hf, V))
    return float(weights @ diagonal / z)


def duhamel(
    Hf: FrozenHamiltonian,
    A: ZString,
    B: ZString,
    beta: float,
    spectral: Optional[SpectralResult] = None,
) -> float:
    """
    Duhamel two-point function (A, B) at inverse temperature beta.

    (A, B) = Z^-1 sum_{m,n} A_mn B_nm
             * (e^{-beta E_n} - e^{-beta E_m}) / (beta (E_m - E_n)),
    with e^{-beta E_m} on degenerate pairs.

    Args:
        Hf: The Hamiltonian
        A: First observable
        B: Second observable
        beta: Inverse temperature, positive
        spectral: Precomputed full spectrum

    Returns:
        (A, B)
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    spectral = spectral or full_spectrum(Hf)
    energies, _, z = _boltzmann(spectral, beta)
    a = _eigenbasis(Hf, A, spectral)
    b = a if B == A else _eigenbasis(Hf, B, spectral)

    x = beta * np.abs(energies[:, None] - energies[None, :])
    small = x < 1e-12
    phi = np.where(small, 1.0 - 0.5 * x, -np.expm1(-x) / np.where(small, 1.0, x))
    kernel = np.exp(-beta * np.minimum(energies[:, None], energies[None, :])) * phi
    return float(np.sum(a * b.T * kernel) / z)


def duhamel_decay_check(
    Hf: FrozenHamiltonian,
    b: int,
    f: ZString,
    beta_schedule: Sequence[float],
    spectral: Optional[SpectralResult] = None,
) -> List[float]:
    """
    Connected Duhamel correlation (sigma^z_b, f) - <sigma^z_b><f> along a beta schedule.

    Args:
        Hf: The Hamiltonian (dense path)
        b: Bond index
        f: Second observable
        beta_schedule: Inverse temperatures
        spectral: Precomputed full spectrum

    Returns:
        One value per beta
    """
    spectral = spectral or full_spectrum(Hf)
    bond = bond_z(Hf.lat, b)
    values = []
    for beta in beta_schedule:
        connected = duhamel(Hf, bond, f, beta, spectral) - thermal_expectation(
            Hf, bond, beta, spectral
        ) * thermal_expectation(Hf, f, beta, spectral)
        values.append(connected)
    return values


def rotate_to_kt_frame(vector: np.ndarray) -> np.ndarray:
    """Hadamard-rotate a classical-frame vector into the rotated frame."""
    return walsh_hadamard(vector) / np.sqrt(vector.shape[0])


def overlap(
    sr: SpectralResult, amplitudes: Union[WavefunctionAmplitudes, np.ndarray]
) -> float:
    """
    |<v_ED | v_KT>| after normalizing both.

    Args:
        sr: ED result; a classical-frame vector is rotated first
        amplitudes: Rotated-frame amplitudes over the same basis

    Returns:
        A number in [0, 1]
    """
    if isinstance(amplitudes, WavefunctionAmplitudes):
        amplitudes = amplitudes.values
    values = np.asarray(amplitudes, dtype=np.float64)
    reference = sr.ground_vector
    if values.shape != reference.shape:
        raise ValueError(
            f"Dimension mismatch: {values.shape[0]} vs {reference.shape[0]}"
        )
    if sr.frame == "classical":
        reference = rotate_to_kt_frame(reference)
    value = abs(float(reference @ values)) / (
        float(np.linalg.norm(reference)) * float(np.linalg.norm(values))
    )
    return min(1.0, value)


def write_spectrum(sr: SpectralResult, path: str) -> None:
    """Dump eigenvalues (or the lowest two) as index,energy rows."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    energies = sr.spectrum if sr.spectrum is not None else np.array([sr.E0, sr.E1])
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["index", "energy"])
        for k, energy in enumerate(energies):
            writer.writerow([k, repr(float(energy))])
