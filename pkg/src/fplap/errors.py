"""Exception hierarchy.

Every exception carries a stable ``code`` string so the CLI can surface
module-qualified error codes without string matching on messages.
"""

from __future__ import annotations


class FplapError(Exception):
    """Base class for all toolkit errors."""

    code = "ERROR"


class EmptyInteriorError(FplapError):
    code = "EMPTY_INTERIOR"


class BadGeometryError(FplapError):
    code = "BAD_GEOMETRY"


class NonFiniteValueError(FplapError):
    code = "NON_FINITE_VALUE"


class NonpositiveExponentError(FplapError, ValueError):
    code = "NONPOSITIVE_EXPONENT"


class DomainError(FplapError, ValueError):
    code = "DOMAIN"


class OutOfRangeError(FplapError, ValueError):
    code = "OUT_OF_RANGE"


class SearchDivergedError(FplapError):
    code = "SEARCH_DIVERGED"


class TruncationTooSmallError(FplapError):
    code = "TRUNCATION_TOO_SMALL"


class ExteriorMismatchError(FplapError):
    code = "EXTERIOR_MISMATCH"


class GridMismatchError(FplapError):
    code = "GRID_MISMATCH"


class NotInteriorError(FplapError):
    code = "NOT_INTERIOR"


class MaskOverlapsInteriorError(FplapError):
    code = "MASK_OVERLAPS_INTERIOR"


class NotP2Error(FplapError):
    code = "NOT_P2"


class NonconvexDetectedError(FplapError):
    code = "NONCONVEX_DETECTED"


class DataNotOrderedError(FplapError):
    code = "DATA_NOT_ORDERED"


class NegativeInputError(FplapError):
    code = "NEGATIVE_INPUT"


class DataNotStarshapedError(FplapError):
    code = "DATA_NOT_STARSHAPED"


class QNotMonotoneError(FplapError):
    code = "Q_NOT_MONOTONE"


class ParseError(FplapError):
    code = "PARSE_ERROR"


class ValidationError(FplapError):
    """Config validation failure; ``field_errors`` maps field paths to messages."""

    code = "VALIDATION_ERROR"

    def __init__(self, field_errors: dict[str, str]):
        self.field_errors = dict(field_errors)
        lines = "; ".join(f"{k}: {v}" for k, v in sorted(self.field_errors.items()))
        super().__init__(lines)
