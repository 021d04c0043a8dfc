"""Exception hierarchy. Everything raised on purpose derives from LakejoinError."""


class LakejoinError(Exception):
    """Base class for all lakejoin errors."""


class IngestError(LakejoinError):
    """Table source could not be parsed or a selector was out of bounds."""


class DuplicateColumnError(LakejoinError):
    """Two columns with the same id were offered to one repository."""


class RepositoryFormatError(LakejoinError):
    """Persisted file has the wrong magic, version, or is truncated/corrupt."""


class EmptyColumnError(LakejoinError):
    """An operation that requires at least one cell got an empty column."""


class DimensionMismatchError(LakejoinError):
    """Vectors of different dimensionality were combined."""


class SketchCompatibilityError(LakejoinError):
    """MinHash sketches built with different length or seed were compared."""


class TransportError(LakejoinError):
    """External embedder connection failed or was closed mid-request."""


class EmbedderProtocolError(LakejoinError):
    """External embedder sent a malformed or unexpected message."""


class MissingEmbeddingError(EmbedderProtocolError):
    """External embedder response did not cover every requested id."""
