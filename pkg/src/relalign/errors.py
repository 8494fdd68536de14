"""Exception types raised across the pipeline.

Validation errors that point at a specific record carry its index in
``.index`` so callers can report the offending row, not just a message.
"""

from __future__ import annotations


class RelalignError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


# --- embedding store / binary format ---

class MalformedHeader(RelalignError):
    """File does not start with a valid EMB1 header."""


class DimensionMismatch(RelalignError):
    """Payload or sidecar size disagrees with the header's count x dim."""


class NonFiniteValue(RelalignError):
    """A vector contains NaN or infinity."""


class ZeroVector(RelalignError):
    """A vector is all-zero; cosine against it is undefined."""


class DuplicateId(RelalignError):
    """Two records share the same ID."""


class UnknownRecord(RelalignError):
    """A referenced record ID does not exist in the store."""


# --- relative representations ---

class AnchorStoreMismatch(RelalignError):
    """Anchor IDs are not present in the supplied store."""


class DimMismatch(RelalignError):
    """Two relative representations have different anchor counts."""


class ZeroRelRep(RelalignError):
    """A relative representation has zero norm; the record is degenerate."""


# --- anchor selection ---

class PoolTooSmall(RelalignError):
    """The aligned pool has fewer pairs than the requested anchor count."""


class EmptyEmbeddings(RelalignError):
    """Selection requires embeddings but the store is empty."""


# --- caption pipeline ---

class ShapeMismatch(RelalignError):
    """Matrix or vector shapes are inconsistent."""


class CandidateImageMismatch(RelalignError):
    """A candidate caption targets a different image than the retrieved pair."""


# --- orchestration ---

class SpecInvalid(RelalignError):
    """A synthetic-benchmark or pipeline configuration is contradictory."""


class StageError(RelalignError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
