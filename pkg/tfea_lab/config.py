"""
Configuration module for the transverse-field EA laboratory.
Handles environment variables and numerical defaults.
"""

import os
import sys

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        print(f"Error: {name} is not a valid integer in your .env file.")
        sys.exit(1)


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None:
        return default
    try:
        return float(value)
    except ValueError:
        print(f"Error: {name} is not a valid number in your .env file.")
        sys.exit(1)


LOG_LEVEL = os.getenv("TFEA_LOG_LEVEL", "INFO").upper()

# Size caps (exhaustive enumeration and exact diagonalization)
CLASSICAL_MAX_INTERIOR = _env_int("TFEA_CLASSICAL_MAX_INTERIOR", 24)
CLASSICAL_BLOCK_BITS = _env_int("TFEA_CLASSICAL_BLOCK_BITS", 16)
TRUNCATION_CAP = _env_int("TFEA_TRUNCATION_CAP", 200_000)
ED_MAX_INTERIOR = _env_int("TFEA_ED_MAX_INTERIOR", 26)
ED_DENSE_MAX_STATES = _env_int("TFEA_ED_DENSE_MAX_STATES", 1024)
DUHAMEL_MAX_STATES = _env_int("TFEA_DUHAMEL_MAX_STATES", 2**14)
WAVEFUNCTION_MAX_INTERIOR = _env_int("TFEA_WAVEFUNCTION_MAX_INTERIOR", 20)

# Tolerances, in units of J
TIE_TOLERANCE = _env_float("TFEA_TIE_TOLERANCE", 1e-12)
DENOMINATOR_FLOOR = _env_float("TFEA_DENOMINATOR_FLOOR", 1e-10)

# Kirkwood-Thomas iteration defaults
KT_TOL = _env_float("TFEA_KT_TOL", 1e-12)
KT_MAX_ITER = _env_int("TFEA_KT_MAX_ITER", 200)
KT_W_MAX = _env_int("TFEA_KT_W_MAX", 4)
KT_K_MAX = _env_int("TFEA_KT_K_MAX", 6)
KT_SERIES_FLOOR = _env_float("TFEA_KT_SERIES_FLOOR", 1e-20)
KT_SERIES_TERM_CAP = _env_int("TFEA_KT_SERIES_TERM_CAP", 4_000_000)
KT_PLATEAU_RTOL = _env_float("TFEA_KT_PLATEAU_RTOL", 1e-8)
KT_PLATEAU_WINDOW = _env_int("TFEA_KT_PLATEAU_WINDOW", 5)

# Thread pool size for ensemble drivers and classical enumeration
WORKERS = _env_int("TFEA_WORKERS", 1)


def validate_config():
    """
    Validates that all numerical settings are in range.
    Exits the program if any setting is invalid.
    """
    problems = []

    if CLASSICAL_MAX_INTERIOR < 1 or CLASSICAL_MAX_INTERIOR > 40:
        problems.append("TFEA_CLASSICAL_MAX_INTERIOR must be in [1, 40]")
    if CLASSICAL_BLOCK_BITS < 1 or CLASSICAL_BLOCK_BITS > 24:
        problems.append("TFEA_CLASSICAL_BLOCK_BITS must be in [1, 24]")
    if TRUNCATION_CAP < 1:
        problems.append("TFEA_TRUNCATION_CAP must be positive")
    if ED_MAX_INTERIOR < 1 or ED_MAX_INTERIOR > 30:
        problems.append("TFEA_ED_MAX_INTERIOR must be in [1, 30]")
    if ED_DENSE_MAX_STATES < 2:
        problems.append("TFEA_ED_DENSE_MAX_STATES must be >= 2")
    if DUHAMEL_MAX_STATES < 2:
        problems.append("TFEA_DUHAMEL_MAX_STATES must be >= 2")
    if WAVEFUNCTION_MAX_INTERIOR < 1 or WAVEFUNCTION_MAX_INTERIOR > 26:
        problems.append("TFEA_WAVEFUNCTION_MAX_INTERIOR must be in [1, 26]")
    for name, value in (
        ("TFEA_TIE_TOLERANCE", TIE_TOLERANCE),
        ("TFEA_DENOMINATOR_FLOOR", DENOMINATOR_FLOOR),
        ("TFEA_KT_TOL", KT_TOL),
    ):
        if value <= 0:
            problems.append(f"{name} must be positive")
    if KT_MAX_ITER < 1 or KT_W_MAX < 1:
        problems.append("TFEA_KT_MAX_ITER and TFEA_KT_W_MAX must be >= 1")
    if KT_K_MAX < 2:
        problems.append("TFEA_KT_K_MAX must be >= 2")
    if KT_SERIES_FLOOR < 0 or KT_PLATEAU_RTOL < 0:
        problems.append("TFEA_KT_SERIES_FLOOR and TFEA_KT_PLATEAU_RTOL must be >= 0")
    if KT_SERIES_TERM_CAP < 1 or KT_PLATEAU_WINDOW < 2:
        problems.append(
            "TFEA_KT_SERIES_TERM_CAP must be >= 1 and TFEA_KT_PLATEAU_WINDOW >= 2"
        )
    if WORKERS < 1:
        problems.append("TFEA_WORKERS must be >= 1")

    if problems:
        print("Error: One or more settings are invalid. Please check your .env file.")
        for problem in problems:
            print(f"  - {problem}")
        sys.exit(1)

    return True
