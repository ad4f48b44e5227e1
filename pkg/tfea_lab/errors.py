"""
Exception hierarchy for the transverse-field EA laboratory.
"""

from typing import List, Optional


class TfeaError(Exception):
    """Base class for all errors raised by the package."""


class LatticeError(TfeaError, ValueError):
    """Invalid lattice parameters or subsets outside the interior."""


class SizeCapError(TfeaError, ValueError):
    """A configured size cap would be exceeded."""


class DisorderFileError(TfeaError, ValueError):
    """Malformed disorder file or one that does not match the lattice."""


class DegenerateGroundStateError(TfeaError):
    """The classical ground state is not unique or an excitation is not positive."""


class FieldBoundError(TfeaError, ValueError):
    """The field violates |h| M <= 1."""


class ConvergenceError(TfeaError):
    """An iterative solver did not converge."""

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(message)
        self.trace = list(trace or [])
