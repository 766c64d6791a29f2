"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class BpsaError(Exception):
    """Base class for all runtime failures raised by this package."""


class DataError(BpsaError):
    """Invalid dataset content. Carries the offending location when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(message + (f" ({', '.join(loc)})" if loc else ""))


class SeparationError(BpsaError):
    """The logistic likelihood has no finite maximizer (perfect separation)."""


class ChainError(BpsaError):
    """The posterior sampler failed (divergence or pathological acceptance)."""


class DesignError(BpsaError):
    """A propensity score implementation produced no usable design."""


class AnalysisError(BpsaError):
    """Effect estimation cannot proceed on the given design."""
