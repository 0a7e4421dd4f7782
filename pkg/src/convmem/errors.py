"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ConvmemError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(ConvmemError):
    """Caller passed data that violates an operation's precondition."""


class InvalidName(InvalidInput):
    """Entity name is empty after normalization."""


class DimensionError(InvalidInput):
    """Embeddings of different dimensionality were mixed."""


class IntegrityError(ConvmemError):
    """A graph mutation would break referential integrity."""


class EmptyGraph(ConvmemError):
    """Retrieval was attempted against a graph with no nodes."""


class ProviderUnavailable(ConvmemError):
    """Transport-level provider failure (network, timeout, 5xx).

    ``retryable`` distinguishes transient faults from permanent ones such
    as a missing endpoint configuration.
    """

    def __init__(self, message: str, *, retryable: bool = True) -> None:
        super().__init__(message)
        self.retryable = retryable


class ProviderRejected(ConvmemError):
    """Provider answered with an error body (bad request, auth, quota)."""


class StructuredOutputError(ConvmemError):
    """Model output failed the structured-output gate.

    ``kind`` is "malformed" for unparseable syntax and "schema" for
    syntactically valid output that violates the expected shape.
    """

    def __init__(self, kind: str, message: str) -> None:
        if kind not in ("malformed", "schema"):
            raise ValueError(f"unknown StructuredOutputError kind: {kind}")
        super().__init__(message)
        self.kind = kind


class JudgeUnparseable(StructuredOutputError):
    """Judge response contained neither a [[yes]] nor a [[no]] marker."""

    def __init__(self, message: str) -> None:
        super().__init__("schema", message)


class SnapshotVersionError(ConvmemError):
    """Snapshot file declares an unsupported format version."""


class SnapshotCorrupt(ConvmemError):
    """Snapshot file is unreadable or fails structural validation."""


class CorpusFormatError(ConvmemError):
    """Corpus document violates the evaluation corpus schema.

    ``path`` points at the offending field, e.g.
    "conversations[0].sessions[1].turns[3].text".
    """

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class InternalInvariantError(ConvmemError):
    """An internal numeric or structural invariant was violated."""
