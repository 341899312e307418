"""
Exception hierarchy shared by every ionstrobe module.

The CLI maps ConfigError to exit code 2 and NumericalError (with all of its
subclasses) to exit code 3. Plain argument-precondition violations raise
ValueError and are not part of this hierarchy.
"""

from __future__ import annotations

from typing import Optional


class IonStrobeError(Exception):
    """Base class for all ionstrobe errors."""


class ConfigError(IonStrobeError):
    """Invalid run configuration. `key` is the dotted path of the offending entry."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class NumericalError(IonStrobeError):
    """Base class for failures of the numerics (exit code 3)."""


class TruncationError(NumericalError):
    """Fock-space truncation is inadequate for the requested state."""


class FitError(NumericalError):
    """A fit could not be carried out or did not converge."""


class TuningError(NumericalError):
    """Pulse-train search failed within its evaluation budget."""


class DecodeError(NumericalError):
    """Decode tables are unusable or a fit lies outside their domain."""


class ScanPointError(NumericalError):
    """A scan point failed; carries its grid coordinates."""

    def __init__(self, outer: float, phi: float, cause: Exception):
        self.outer = outer
        self.phi = phi
        self.cause = cause
        super().__init__(
            f"scan point (outer={outer:.6g}, phi={phi:.6g} rad) failed: "
            f"{type(cause).__name__}: {cause}"
        )
