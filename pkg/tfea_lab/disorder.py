"""
Random coupling realizations J = (J_b) on a lattice.

Values are drawn from a counter-based generator: coupling k is a function of
(seed, k) only, so samples are reproducible and can be generated in any
order or in parallel.
"""

import csv
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .errors import DisorderFileError
from .lattice import Lattice

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DISTRIBUTIONS = ("gaussian", "uniform", "constant", "fixed")
HEADER_KEYS = ("schema_version", "d", "L", "seed", "distribution", "J0", "J")
ROW_HEADER = ["bond", "site_i", "site_j", "J_b"]


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """One realization of the couplings, indexed by bond index."""

    seed: int
    distribution: str
    J0: float
    J: float
    d: int
    L: int
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    def coupling(self, b: int) -> float:
        return float(self.values[b])

    def matches(self, lat: Lattice) -> bool:
        same_lattice = self.d == lat.d and self.L == lat.L
        return same_lattice and self.values.shape == (lat.n_bonds,)

    @classmethod
    def from_values(
        cls, lat: Lattice, values: Sequence[float], J: float = 1.0
    ) -> "DisorderSample":
        """
        Wrap hand-specified couplings, e.g. for test fixtures.

        Args:
            lat: The lattice the couplings belong to
            values: One coupling per bond, in bond order
            J: Energy scale recorded with the sample

        Returns:
            A sample tagged with distribution "fixed"
        """
        array = np.array(values, dtype=np.float64)
        if array.shape != (lat.n_bonds,):
            raise DisorderFileError(
                f"Expected {lat.n_bonds} couplings, got {array.shape[0]}"
            )
        return cls(
            seed=0,
            distribution="fixed",
            J0=float(array.mean()),
            J=J,
            d=lat.d,
            L=lat.L,
            values=array,
        )


def draw_couplings(
    seed: int, n: int, distribution: str = "gaussian", J0: float = 0.0, J: float = 1.0
) -> np.ndarray:
    """
    Draw n couplings; element k depends only on (seed, k).

    Args:
        seed: Non-negative 64-bit seed, used as the Philox key
        n: Number of couplings
        distribution: "gaussian", "uniform" or "constant"
        J0: Mean
        J: Standard deviation, must be positive

    Returns:
        Array of n couplings with mean J0 and variance J^2
    """
    if J <= 0:
        raise ValueError(f"J must be positive, got {J}")
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    if distribution == "constant":
        return np.full(n, float(J0))
    if distribution not in ("gaussian", "uniform"):
        raise ValueError(f"Unknown distribution {distribution!r}")

    # random() consumes one 64-bit word per value, so index k reads counter word k
    generator = np.random.Generator(np.random.Philox(key=int(seed)))
    u = generator.random(n) + 2.0**-54
    if distribution == "gaussian":
        return J0 + J * ndtri(u)
    return J0 + J * np.sqrt(12.0) * (u - 0.5)


def sample_disorder(
    lat: Lattice,
    seed: int = 0,
    distribution: str = "gaussian",
    J0: float = 0.0,
    J: float = 1.0,
) -> DisorderSample:
    """
    Sample i.i.d. couplings for every bond of the lattice.

    Args:
        lat: The lattice
        seed: 64-bit seed
        distribution: "gaussian" (default), "uniform" or "constant"
        J0: Mean coupling
        J: Standard deviation of the couplings

    Returns:
        The disorder sample
    """
    values = draw_couplings(seed, lat.n_bonds, distribution, J0, J)
    logger.debug(
        "Sampled %s disorder seed=%d on %d bonds", distribution, seed, lat.n_bonds
    )
    return DisorderSample(
        seed=int(seed),
        distribution=distribution,
        J0=float(J0),
        J=float(J),
        d=lat.d,
        L=lat.L,
        values=values,
    )


def save_sample(sample: DisorderSample, lat: Lattice, path: str) -> None:
    """
    Write a sample as a key-value header followed by comma-separated bond rows.

    Floats are written with repr, which round-trips bit-exactly.
    """
    if not sample.matches(lat):
        raise DisorderFileError("Sample does not belong to this lattice")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("# tfea-lab disorder sample\n")
        f.write(f"schema_version: {SCHEMA_VERSION}\n")
        f.write(f"d: {sample.d}\n")
        f.write(f"L: {sample.L}\n")
        f.write(f"seed: {sample.seed}\n")
        f.write(f"distribution: {sample.distribution}\n")
        f.write(f"J0: {sample.J0!r}\n")
        f.write(f"J: {sample.J!r}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ROW_HEADER)
        for bond in lat.bonds:
            writer.writerow(
                [bond.index, bond.i, bond.j, repr(float(sample.values[bond.index]))]
            )


def load_sample(path: str, lat: Optional[Lattice] = None) -> DisorderSample:
    """
    Read a sample written by save_sample.

    Args:
        path: File to read
        lat: If given, the lattice the file must match (shape and bond endpoints)

    Returns:
        The disorder sample
    """
    header = {}
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.strip() for line in f]
    except OSError as e:
        raise DisorderFileError(f"Cannot read disorder file {path}: {e}") from e

    body_start = None
    for number, line in enumerate(lines):
        if not line or line.startswith("#"):
            continue
        if line.replace(" ", "") == ",".join(ROW_HEADER):
            body_start = number + 1
            break
        if ":" not in line:
            raise DisorderFileError(f"{path}:{number + 1}: expected 'key: value'")
        key, value = (part.strip() for part in line.split(":", 1))
        header[key] = value
    if body_start is None:
        raise DisorderFileError(f"{path}: missing bond table header")

    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise DisorderFileError(f"{path}: missing header keys {missing}")

    try:
        version = int(header["schema_version"])
        d = int(header["d"])
        L = int(header["L"])
        seed = int(header["seed"])
        J0 = float(header["J0"])
        J = float(header["J"])
    except ValueError as e:
        raise DisorderFileError(f"{path}: malformed header value: {e}") from e
    if version != SCHEMA_VERSION:
        raise DisorderFileError(f"{path}: unsupported schema version {version}")
    distribution = header["distribution"]
    if distribution not in DISTRIBUTIONS:
        raise DisorderFileError(f"{path}: unknown distribution {distribution!r}")

    body = [line for line in lines[body_start:] if line and not line.startswith("#")]
    rows: List[Tuple[int, int, int, float]] = []
    for line in csv.reader(body):
        if len(line) != 4:
            raise DisorderFileError(f"{path}: bond rows need 4 fields, got {line}")
        try:
            rows.append((int(line[0]), int(line[1]), int(line[2]), float(line[3])))
        except ValueError as e:
            raise DisorderFileError(f"{path}: malformed bond row {line}: {e}") from e

    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise DisorderFileError(f"{path}: bond indices must be 0..n-1 without gaps")

    if lat is not None:
        if (d, L) != (lat.d, lat.L) or len(rows) != lat.n_bonds:
            raise DisorderFileError(
                f"{path}: shape mismatch, file has d={d} L={L} with {len(rows)} bonds, "
                f"lattice has d={lat.d} L={lat.L} with {lat.n_bonds} bonds"
            )
        for index, i, j, _ in rows:
            bond = lat.bonds[index]
            if (bond.i, bond.j) != (i, j):
                raise DisorderFileError(
                    f"{path}: bond {index} joins {i}-{j}, lattice has {bond.i}-{bond.j}"
                )

    return DisorderSample(
        seed=seed,
        distribution=distribution,
        J0=J0,
        J=J,
        d=d,
        L=L,
        values=np.array([r[3] for r in rows], dtype=np.float64),
    )
