"""
Exception hierarchy for the block-matrix perturbation toolkit.
Every public operation raises one of these; callers (the CLI) map them to exit codes.
"""
from typing import Any, Optional


class BlockPertError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(BlockPertError, ValueError):
    """Shape mismatch, non-square input, wrong vector length or index out of range."""


class PreconditionError(BlockPertError, ValueError):
    """Input violates a numerical precondition (Hermiticity, finiteness, unit norm, |lambda| < 1)."""


class DegeneracyError(BlockPertError):
    """Rayleigh-Schrodinger formulas are invalid: two unperturbed levels collide."""

    def __init__(self, levels: tuple[int, int], gap: float, tol: float):
        self.levels = levels
        self.gap = gap
        self.tol = tol
        super().__init__(
            f"Degenerate levels {levels[0]} and {levels[1]}: "
            f"|E_{levels[0]} - E_{levels[1]}| = {gap:.3e} <= degeneracy_tol {tol:.3e}; "
            "a degenerate treatment is needed"
        )


class CapabilityError(BlockPertError):
    """Request exceeds a configured cap (correction order, Dyson order)."""


class TruncationError(BlockPertError):
    """State or level too close to the Fock truncation edge."""


class ConfigError(BlockPertError):
    """Invalid configuration; `field` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalFailure(BlockPertError):
    """A required oracle agreement breached its threshold."""

    def __init__(self, message: str, rows: Optional[list[Any]] = None):
        self.rows = rows or []
        super().__init__(message)
