"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class AreteError(Exception):
    """Base class for all errors raised by this package."""


# ingest


class IngestError(AreteError):
    pass


class UnsupportedFormatError(IngestError):
    pass


class PdfNoTextLayerError(IngestError):
    """The PDF has no embedded text; it must be OCRed before extraction."""


class ExtractorError(IngestError):
    """The external PDF text extractor could not be run."""


class EmptyDocumentError(IngestError, ValueError):
    pass


# llm gateway


class GatewayError(AreteError):
    pass


class AuthError(GatewayError):
    pass


class RateLimitExhaustedError(GatewayError):
    pass


class RequestTimeoutError(GatewayError, TimeoutError):
    pass


class MalformedResponseError(GatewayError):
    pass


class ApiError(GatewayError):
    """Non-success HTTP status that is not retried or ran out of retries."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class NetworkError(GatewayError):
    pass


class FixtureMissingError(GatewayError, LookupError):
    pass


# extraction


class NoTableFoundError(AreteError):
    """A model reply contained no parseable table rows."""

    def __init__(self, message: str, skipped: int = 0):
        super().__init__(message)
        self.skipped = skipped


class OutOfRangeError(AreteError, ValueError):
    pass


# geo


class GeoError(AreteError):
    pass


class EmptyInputError(GeoError, ValueError):
    pass


class LongitudeSpanError(GeoError, ValueError):
    """Point set spans 180 degrees of longitude or more."""


class EmptyGridError(GeoError, ValueError):
    pass


class GridStateError(GeoError):
    """Grid is in the wrong normalization state for the requested operation."""


class GridFormatError(GeoError, ValueError):
    pass


class OutsideGridError(GeoError, LookupError):
    pass


# outlier


class OutlierError(AreteError):
    pass


class DimensionMismatchError(OutlierError, ValueError):
    pass


class DegenerateClassesError(OutlierError, ValueError):
    pass


class InsufficientPointsError(OutlierError, ValueError):
    pass


class MissingGridError(OutlierError, ValueError):
    pass


# validation


class ValidationError(AreteError):
    pass


class EmptyReferenceError(ValidationError, ValueError):
    pass


class NoCoordinateDataError(ValidationError, ValueError):
    pass


class ScoreOutOfRangeError(ValidationError, ValueError):
    pass


class ReportIoError(ValidationError, OSError):
    pass


class SchemaError(AreteError, ValueError):
    """A CSV file does not carry the expected header."""
