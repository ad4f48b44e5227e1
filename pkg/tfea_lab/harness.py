"""
Experiment driver: disorder ensembles, KT solves, ED comparisons, field
sweeps and the verification suite.

A RunManifest fixes every input of a run. Cells (seed, h) are independent
and may run on a thread pool; results are merged in manifest order so the
same manifest always produces the same report.
"""

import csv
import hashlib
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from tqdm import tqdm

from .classical_ground import (
    ClassicalGroundState,
    local_fields,
    solve_classical,
    verify_bond_consistency,
)
from .config import (
    DUHAMEL_MAX_STATES,
    KT_K_MAX,
    KT_MAX_ITER,
    KT_TOL,
    KT_W_MAX,
    WAVEFUNCTION_MAX_INTERIOR,
    WORKERS,
)
from .disorder import DisorderSample, load_sample, sample_disorder
from .ed_oracle import (
    bond_z,
    build_hamiltonian,
    duhamel_decay_check,
    full_spectrum,
    ground_state_ed,
    overlap,
)
from .errors import (
    ConvergenceError,
    DegenerateGroundStateError,
    FieldBoundError,
    SizeCapError,
    TfeaError,
)
from .kt_solver import (
    KTContext,
    KTState,
    SolverConfig,
    apply_F,
    contraction_check,
    kt_norm,
    random_admissible,
    solve_fixed_point,
    wavefunction_amplitudes,
)
from .lattice import Lattice, build_lattice

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
DEFAULT_BETAS = (1.0, 5.0, 10.0, 25.0, 50.0)
VOLATILE_KEYS = ("out", "timestamp")
DUHAMEL_ZERO_FIELD_BOUND = 1e-6

COMPARE_COLUMNS = [
    "manifest_hash",
    "seed",
    "h",
    "status",
    "E_cl",
    "gap1",
    "E0_kt",
    "E0_ed",
    "abs_error",
    "rel_error",
    "E0_isolated",
    "overlap",
    "iterations",
    "norm_g",
    "empirical_lipschitz",
    "within_ball",
    "ed_gap",
    "message",
]
SWEEP_COLUMNS = [
    "manifest_hash",
    "seed",
    "h",
    "status",
    "iterations",
    "E0_kt",
    "ed_gap",
    "radius",
]
VERIFY_COLUMNS = ["manifest_hash", "seed", "h", "check", "status", "detail"]

T = TypeVar("T")


def parse_seeds(text: str) -> List[int]:
    """Parse "0,3,5" or "0-19" (inclusive ranges may be mixed with commas)."""
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("No seeds given")
    if any(seed < 0 for seed in seeds):
        raise ValueError("Seeds must be non-negative")
    return seeds


def _format(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class RunManifest:
    """Every input of a run; the manifest text is the reproducibility record."""

    d: int = 2
    L: int = 6
    seeds: List[int] = field(default_factory=lambda: [0])
    distribution: str = "gaussian"
    J0: float = 0.0
    J: float = 1.0
    h: List[float] = field(default_factory=lambda: [0.05])
    w_max: int = KT_W_MAX
    k_max: int = KT_K_MAX
    M: Optional[float] = None
    tol: float = KT_TOL
    max_iter: int = KT_MAX_ITER
    beta: List[float] = field(default_factory=lambda: list(DEFAULT_BETAS))
    probes: int = 20
    disorder_file: Optional[str] = None
    out: Optional[str] = None
    timestamp: str = ""
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def validate(self) -> None:
        """Raise ValueError on inputs no module would accept."""
        if self.schema_version != MANIFEST_SCHEMA_VERSION:
            raise ValueError(
                f"Unsupported manifest schema version {self.schema_version}"
            )
        if not self.seeds or any(seed < 0 for seed in self.seeds):
            raise ValueError("Seeds must be a non-empty list of non-negative integers")
        if not self.h:
            raise ValueError("At least one field value is required")
        if self.J <= 0:
            raise ValueError("J must be positive")
        if self.M is not None and self.M <= 0:
            raise ValueError("M must be positive or auto")
        if any(beta <= 0 for beta in self.beta):
            raise ValueError("Inverse temperatures must be positive")
        if self.probes < 1:
            raise ValueError("probes must be positive")
        self.solver_config()

    def solver_config(self, workers: int = 1) -> SolverConfig:
        return SolverConfig(
            M=self.M,
            tol=self.tol,
            max_iter=self.max_iter,
            w_max=self.w_max,
            k_max=self.k_max,
            workers=workers,
        )

    def items(self, include_volatile: bool = True) -> List[Tuple[str, str]]:
        pairs = [
            ("schema_version", str(self.schema_version)),
            ("d", str(self.d)),
            ("L", str(self.L)),
            ("seeds", ",".join(str(s) for s in self.seeds)),
            ("distribution", self.distribution),
            ("J0", repr(float(self.J0))),
            ("J", repr(float(self.J))),
            ("h", ",".join(repr(float(x)) for x in self.h)),
            ("w_max", str(self.w_max)),
            ("k_max", str(self.k_max)),
            ("M", "auto" if self.M is None else repr(float(self.M))),
            ("tol", repr(float(self.tol))),
            ("max_iter", str(self.max_iter)),
            ("beta", ",".join(repr(float(x)) for x in self.beta)),
            ("probes", str(self.probes)),
            ("disorder_file", self.disorder_file or ""),
            ("out", self.out or ""),
            ("timestamp", self.timestamp),
        ]
        if include_volatile:
            return pairs
        return [(key, value) for key, value in pairs if key not in VOLATILE_KEYS]

    def to_text(self, include_volatile: bool = True) -> str:
        lines = ["# tfea-lab run manifest"]
        lines.extend(f"{key}: {value}" for key, value in self.items(include_volatile))
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical text, without output path and timestamp."""
        canonical = self.to_text(include_volatile=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_text(cls, text: str) -> "RunManifest":
        values: Dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValueError(f"Manifest line {number}: expected 'key: value'")
            key, value = (part.strip() for part in line.split(":", 1))
            values[key] = value

        def floats(key: str, default: Sequence[float]) -> List[float]:
            if key not in values:
                return list(default)
            return [float(x) for x in values[key].split(",") if x.strip()]

        defaults = cls(timestamp="-")
        M_text = values.get("M", "auto")
        manifest = cls(
            schema_version=int(values.get("schema_version", MANIFEST_SCHEMA_VERSION)),
            d=int(values.get("d", defaults.d)),
            L=int(values.get("L", defaults.L)),
            seeds=parse_seeds(values["seeds"]) if "seeds" in values else defaults.seeds,
            distribution=values.get("distribution", defaults.distribution),
            J0=float(values.get("J0", defaults.J0)),
            J=float(values.get("J", defaults.J)),
            h=floats("h", defaults.h),
            w_max=int(values.get("w_max", defaults.w_max)),
            k_max=int(values.get("k_max", defaults.k_max)),
            M=None if M_text == "auto" else float(M_text),
            tol=float(values.get("tol", defaults.tol)),
            max_iter=int(values.get("max_iter", defaults.max_iter)),
            beta=floats("beta", defaults.beta),
            probes=int(values.get("probes", defaults.probes)),
            disorder_file=values.get("disorder_file") or None,
            out=values.get("out") or None,
            timestamp=values.get("timestamp", ""),
        )
        manifest.validate()
        return manifest

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())


@dataclass
class SeedSetup:
    """Per-seed inputs shared by all field values."""

    seed: int
    dis: Optional[DisorderSample] = None
    gs: Optional[ClassicalGroundState] = None
    context: Optional[KTContext] = None
    error: Optional[TfeaError] = None


def status_of(error: Exception) -> str:
    """Map an exception to the report's status column."""
    if isinstance(error, DegenerateGroundStateError):
        return "degenerate"
    if isinstance(error, ConvergenceError):
        return "no-convergence"
    if isinstance(error, SizeCapError):
        return "size-cap"
    if isinstance(error, FieldBoundError):
        return "field-bound"
    return "error"


def disorder_for(manifest: RunManifest, lat: Lattice, seed: int) -> DisorderSample:
    if manifest.disorder_file:
        return load_sample(manifest.disorder_file, lat)
    return sample_disorder(lat, seed, manifest.distribution, manifest.J0, manifest.J)


def seed_list(manifest: RunManifest) -> List[int]:
    if manifest.disorder_file:
        return [load_sample(manifest.disorder_file).seed]
    return list(manifest.seeds)


def prepare_seeds(
    manifest: RunManifest, lat: Lattice, workers: int = 1
) -> List[SeedSetup]:
    """Disorder, classical ground state and KT truncation for every seed."""

    def prepare(seed: int) -> SeedSetup:
        setup = SeedSetup(seed=seed)
        try:
            setup.dis = disorder_for(manifest, lat, seed)
            setup.gs = solve_classical(lat, setup.dis, workers=1)
            setup.context = KTContext.build(
                lat, setup.dis, setup.gs, 0.0, manifest.w_max, manifest.k_max
            )
        except TfeaError as e:
            logger.warning("Seed %d: %s", seed, e)
            setup.error = e
        return setup

    return _ordered_map(prepare, seed_list(manifest), workers, "Classical solves")


def _ordered_map(
    func: Callable[..., T], items: Sequence, workers: int, desc: str
) -> List[T]:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(func, items)
            return list(tqdm(results, total=len(items), desc=desc, leave=False))
    return [func(item) for item in tqdm(items, desc=desc, leave=False)]


def isolated_site_energy(
    lat: Lattice, dis: DisorderSample, gs: ClassicalGroundState, h: float
) -> float:
    """E_cl + sum_i (J_i - sqrt(J_i^2 + h^2)): exact when interior sites decouple."""
    fields = local_fields(lat, dis, gs)
    return gs.E_cl + float(np.sum(fields - np.hypot(fields, h)))


def _compare_cell(
    manifest: RunManifest, lat: Lattice, setup: SeedSetup, h: float, digest: str
) -> Dict[str, object]:
    row: Dict[str, object] = {
        "manifest_hash": digest,
        "seed": setup.seed,
        "h": float(h),
    }
    if setup.error is not None:
        row.update(status=status_of(setup.error), message=str(setup.error))
        return row
    assert setup.dis is not None and setup.gs is not None and setup.context is not None
    row.update(E_cl=setup.gs.E_cl, gap1=setup.gs.gap1)
    try:
        context = setup.context.with_field(h)
        state, diagnostics = solve_fixed_point(manifest.solver_config(), context)
        row.update(
            E0_kt=diagnostics.energy,
            iterations=len(diagnostics.iterations),
            norm_g=diagnostics.norm_g,
            empirical_lipschitz=diagnostics.empirical_lipschitz,
            within_ball=diagnostics.within_ball,
            E0_isolated=isolated_site_energy(lat, setup.dis, setup.gs, h),
        )
        frame = "rotated" if h else "classical"
        spectral = ground_state_ed(build_hamiltonian(lat, setup.dis, h, frame=frame))
        error = abs(diagnostics.energy - spectral.E0)
        row.update(
            E0_ed=spectral.E0,
            ed_gap=spectral.gap,
            abs_error=error,
            rel_error=error / abs(spectral.E0) if spectral.E0 else error,
        )
        if lat.n_interior <= WAVEFUNCTION_MAX_INTERIOR:
            row["overlap"] = overlap(spectral, wavefunction_amplitudes(state, setup.gs))
        row.update(status="ok", message="")
    except TfeaError as e:
        logger.warning("Seed %d, h=%g: %s", setup.seed, h, e)
        row.update(status=status_of(e), message=str(e))
    except Exception as e:  # pylint: disable=broad-except
        logger.exception("Seed %d, h=%g failed", setup.seed, h)
        row.update(status="error", message=f"Unexpected error: {e}")
    return row


def run_compare(
    manifest: RunManifest, workers: Optional[int] = None
) -> List[Dict[str, object]]:
    """
    KT versus ED for every (seed, h) cell of the manifest.

    Args:
        manifest: Run inputs
        workers: Thread pool size (defaults to TFEA_WORKERS)

    Returns:
        One row per cell in manifest order; failures carry a status and message
    """
    manifest.validate()
    workers = WORKERS if workers is None else workers
    lat = build_lattice(manifest.d, manifest.L)
    digest = manifest.hash
    setups = prepare_seeds(manifest, lat, workers)
    cells = [(setup, h) for setup in setups for h in manifest.h]
    return _ordered_map(
        lambda cell: _compare_cell(manifest, lat, cell[0], cell[1], digest),
        cells,
        workers,
        "Compare",
    )


def _sweep_cell(
    manifest: RunManifest, lat: Lattice, setup: SeedSetup, h: float, digest: str
) -> Dict[str, object]:
    row: Dict[str, object] = {
        "manifest_hash": digest,
        "seed": setup.seed,
        "h": float(h),
    }
    if setup.error is not None:
        row["status"] = status_of(setup.error)
        return row
    assert setup.dis is not None and setup.context is not None
    try:
        row["ed_gap"] = ground_state_ed(build_hamiltonian(lat, setup.dis, h)).gap
    except TfeaError as e:
        logger.warning("ED failed for seed %d, h=%g: %s", setup.seed, h, e)
    try:
        context = setup.context.with_field(h)
        _, diagnostics = solve_fixed_point(manifest.solver_config(), context)
        row.update(
            status="ok",
            iterations=len(diagnostics.iterations),
            E0_kt=diagnostics.energy,
        )
    except ConvergenceError as e:
        row.update(status="no-convergence", iterations=len(e.trace))
    except TfeaError as e:
        row["status"] = status_of(e)
    return row


def sweep_h(
    manifest: RunManifest, workers: Optional[int] = None
) -> List[Dict[str, object]]:
    """
    Empirical convergence radius per seed over an ascending field grid.

    Each row reports the KT outcome and ED gap at one (seed, h); the radius
    column holds the largest grid h at which the iteration converged for
    that seed (empty if none did).
    """
    manifest.validate()
    if list(manifest.h) != sorted(manifest.h):
        raise ValueError("The field grid of a sweep must be ascending")
    workers = WORKERS if workers is None else workers
    lat = build_lattice(manifest.d, manifest.L)
    digest = manifest.hash
    setups = prepare_seeds(manifest, lat, workers)
    cells = [(setup, h) for setup in setups for h in manifest.h]
    rows = _ordered_map(
        lambda cell: _sweep_cell(manifest, lat, cell[0], cell[1], digest),
        cells,
        workers,
        "Sweep",
    )
    radius: Dict[int, Optional[float]] = {}
    for row in rows:
        seed = int(row["seed"])  # type: ignore[call-overload]
        if row["status"] == "ok":
            h = abs(float(row["h"]))  # type: ignore[arg-type]
            radius[seed] = max(radius.get(seed) or 0.0, h)
        else:
            radius.setdefault(seed, None)
    for row in rows:
        row["radius"] = radius[int(row["seed"])]  # type: ignore[call-overload]
    return rows


@dataclass
class CheckResult:
    seed: int
    h: Optional[float]
    check: str
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"


@dataclass
class VerifySummary:
    manifest_hash: str
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def rows(self) -> List[Dict[str, object]]:
        return [
            {
                "manifest_hash": self.manifest_hash,
                "seed": c.seed,
                "h": c.h,
                "check": c.check,
                "status": c.status,
                "detail": c.detail,
            }
            for c in self.checks
        ]


def _duhamel_checks(
    manifest: RunManifest, lat: Lattice, setup: SeedSetup, h: float
) -> List[CheckResult]:
    assert setup.dis is not None
    if (1 << lat.n_interior) > DUHAMEL_MAX_STATES:
        detail = f"dimension 2^{lat.n_interior}"
        return [CheckResult(setup.seed, h, "duhamel", "skip", detail)]
    Hf = build_hamiltonian(lat, setup.dis, h)
    spectral = full_spectrum(Hf)
    betas = sorted(manifest.beta)
    worst = 0.0
    failures = []
    for bond in lat.bonds:
        if not lat.bond_mask(bond.index):
            continue
        f = bond_z(lat, bond.index)
        values = np.abs(duhamel_decay_check(Hf, bond.index, f, betas, spectral))
        worst = max(worst, float(values[-1]))
        if h == 0:
            if values[-1] >= DUHAMEL_ZERO_FIELD_BOUND:
                failures.append(bond.index)
        elif np.any(np.diff(values) > 1e-12):
            failures.append(bond.index)
    detail = f"max |connected| at beta={betas[-1]:g}: {worst:.3e}"
    if failures:
        detail = f"bonds {failures}; {detail}"
        return [CheckResult(setup.seed, h, "duhamel", "fail", detail)]
    return [CheckResult(setup.seed, h, "duhamel", "pass", detail)]


def _contraction_checks(
    manifest: RunManifest, setup: SeedSetup, h: float, rng: np.random.Generator
) -> List[CheckResult]:
    assert setup.context is not None
    if manifest.M is not None and abs(h) * manifest.M > 1.0:
        return [
            CheckResult(
                setup.seed,
                h,
                "field-bound",
                "fail",
                f"|h| M = {abs(h) * manifest.M:.4g} > 1",
            )
        ]
    context = setup.context.with_field(h)
    cfg = manifest.solver_config().resolve(h)
    assert cfg.M is not None

    results = []
    lat = context.lat
    pair_bonds = any(bin(lat.bond_mask(b)).count("1") == 2 for b in range(lat.n_bonds))
    expected = (2.0 if pair_bonds else 1.0) / cfg.M
    f0 = kt_norm(apply_F(KTState.zeros(context), cfg), cfg.M)
    results.append(
        CheckResult(
            setup.seed,
            h,
            "F(0) norm",
            "pass" if math.isclose(f0, expected, rel_tol=1e-12) else "fail",
            f"{f0:.15g} vs {expected:.15g}",
        )
    )

    worst_ratio = 0.0
    worst_image = 0.0
    for _ in range(manifest.probes):
        g = random_admissible(context, cfg, cfg.delta * rng.uniform(0.05, 1.0), rng)
        radius = cfg.delta * rng.uniform(0.05, 1.0)
        g_prime = random_admissible(context, cfg, radius, rng)
        worst_ratio = max(worst_ratio, contraction_check(g, g_prime, cfg))
        worst_image = max(worst_image, kt_norm(apply_F(g, cfg), cfg.M))
    results.append(
        CheckResult(
            setup.seed,
            h,
            "contraction",
            "pass" if worst_ratio <= 0.5 else "fail",
            f"max ratio {worst_ratio:.4g} over {manifest.probes} probes",
        )
    )
    results.append(
        CheckResult(
            setup.seed,
            h,
            "ball",
            "pass" if worst_image <= cfg.delta else "fail",
            f"max ||F(g)|| {worst_image:.4g}, delta {cfg.delta:.4g}",
        )
    )
    results.append(_fixed_point_check(setup.seed, h, context, cfg))
    return results


def _fixed_point_check(
    seed: int, h: float, context: KTContext, cfg: SolverConfig
) -> CheckResult:
    """The solved g* must converge and stay inside the admissible ball."""
    try:
        _, diagnostics = solve_fixed_point(cfg, context)
    except ConvergenceError as e:
        return CheckResult(seed, h, "fixed-point", "fail", str(e))
    detail = (
        f"||g*|| {diagnostics.norm_g:.4g}, delta {diagnostics.delta:.4g}, "
        f"{len(diagnostics.iterations)} iterations"
    )
    status = "pass" if diagnostics.within_ball else "fail"
    return CheckResult(seed, h, "fixed-point", status, detail)


def _verify_seed(
    manifest: RunManifest, lat: Lattice, setup: SeedSetup
) -> List[CheckResult]:
    seed = setup.seed
    if setup.gs is None:
        return [CheckResult(seed, None, "setup", "fail", str(setup.error))]
    gs = setup.gs
    checks = [
        CheckResult(
            seed,
            None,
            "uniqueness",
            "pass" if gs.unique else "fail",
            f"gap1 = {gs.gap1:.6g}",
        )
    ]
    if setup.context is None:
        checks.append(CheckResult(seed, None, "positivity", "fail", str(setup.error)))
        return checks

    minimum = float(setup.context.denominators.min())
    checks.append(
        CheckResult(
            seed,
            None,
            "positivity",
            "pass" if minimum > 0 else "fail",
            f"min excitation {2 * minimum:.6g} over {setup.context.n_keys} sets",
        )
    )

    report = verify_bond_consistency(gs, lat, setup.context.dis)
    checks.append(
        CheckResult(
            seed,
            None,
            "bond-consistency",
            "pass" if report.passed else "fail",
            f"{len(report.plaquette_violations)} plaquette violations, "
            f"bond deviation {report.bond_deviation:.3e} at beta={report.beta:.4g}",
        )
    )

    rng = np.random.default_rng(seed)
    for h in manifest.h:
        try:
            checks.extend(_duhamel_checks(manifest, lat, setup, h))
            if h:
                checks.extend(_contraction_checks(manifest, setup, h, rng))
        except TfeaError as e:
            checks.append(CheckResult(seed, h, "error", "fail", str(e)))
    return checks


def verify_suite(manifest: RunManifest, workers: Optional[int] = None) -> VerifySummary:
    """
    Run the structural checks on every seed and field of the manifest.

    Per seed: classical uniqueness, positivity of excitation energies over the
    truncation and bond/plaquette consistency. Per field: Duhamel connected
    correlations along the beta schedule (dense sizes only), the F(0) norm
    identity, random contraction probes, ball preservation and the solved
    fixed point lying inside the ball.

    Args:
        manifest: Run inputs
        workers: Thread pool size (defaults to TFEA_WORKERS)

    Returns:
        All check results; passed is False if any check failed
    """
    manifest.validate()
    workers = WORKERS if workers is None else workers
    lat = build_lattice(manifest.d, manifest.L)
    setups = prepare_seeds(manifest, lat, workers)
    per_seed = _ordered_map(
        lambda s: _verify_seed(manifest, lat, s), setups, workers, "Verify"
    )
    summary = VerifySummary(manifest.hash, [c for checks in per_seed for c in checks])
    for failure in summary.failures:
        logger.warning(
            "Check %s failed for seed %d: %s",
            failure.check,
            failure.seed,
            failure.detail,
        )
    return summary


def render_report(
    rows: Sequence[Dict[str, object]], columns: Sequence[str], manifest: RunManifest
) -> str:
    """CSV text preceded by the manifest as '#' comment lines."""
    buffer = io.StringIO()
    for line in manifest.to_text().splitlines():
        buffer.write(line if line.startswith("#") else f"# {line}")
        buffer.write("\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format(row.get(column)) for column in columns])
    return buffer.getvalue()


def write_report(
    rows: Sequence[Dict[str, object]],
    columns: Sequence[str],
    manifest: RunManifest,
    path: str,
) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(render_report(rows, columns, manifest))
