"""Exception hierarchy.

The three top-level families map onto CLI exit codes: ``UsageError`` -> 1,
``DataError`` -> 2, ``BackendError`` -> 3.
"""

from __future__ import annotations


class GliomaSegError(Exception):
    """Base class for all package errors."""


class UsageError(GliomaSegError):
    pass


class DataError(GliomaSegError):
    """Bad or missing input data."""


class BackendError(GliomaSegError):
    """A detector or segmenter backend could not be loaded or run."""


# ingest
class NiftiNotFound(DataError, FileNotFoundError):
    pass


class MalformedHeader(DataError):
    pass


class UnsupportedDatatype(DataError):
    pass


class DimensionalityError(DataError):
    pass


class WrongModality(DataError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class UnknownLabel(DataError, ValueError):
    pass


# preprocess / augment / geometry / eval
class DomainError(DataError, ValueError):
    pass


class NonNormalizedInput(DataError, ValueError):
    pass


class EmptyRegion(DataError, ValueError):
    pass


class ZeroBackgroundVariance(DataError, ValueError):
    pass


class EmptyMask(DataError, ValueError):
    pass


class DimMismatch(DataError, ValueError):
    pass


class GeometryError(DataError, ValueError):
    pass


class CaseManifestError(DataError):
    pass


class CaseError(DataError):
    """A per-case failure, tagged with the case it came from."""

    def __init__(self, case: str | int, cause: BaseException):
        self.case = case
        self.cause = cause
        super().__init__(f"case {case}: {type(cause).__name__}: {cause}")


# pipeline
class NoDetection(GliomaSegError):
    pass


class PromptOutOfBounds(BackendError, ValueError):
    pass


class BackendFailure(BackendError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage} stage failed: {type(cause).__name__}: {cause}")


class ModelLoadError(BackendError):
    pass


class ModelManifestError(BackendError):
    pass


class ShapeMismatch(BackendError):
    pass
