"""Exception hierarchy shared across the package.

Grouped by layer: record validation, backend transport, retrieval,
agent-level parse failures, and dataset construction. Exit-code mapping in
the CLI relies on the two broad bases (ValidationError vs BackendError).
"""

from __future__ import annotations


class MasRvqaError(Exception):
    """Base class for every error raised by this package."""


# --- record / config validation -------------------------------------------


class ValidationError(MasRvqaError):
    """Invalid input data or configuration."""


class MissingFieldError(ValidationError):
    def __init__(self, record_id: str, field: str):
        super().__init__(f"record {record_id!r}: missing or empty field {field!r}")
        self.record_id = record_id
        self.field = field


class DuplicateOptionError(ValidationError):
    def __init__(self, record_id: str, detail: str):
        super().__init__(f"record {record_id!r}: malformed options: {detail}")
        self.record_id = record_id
        self.detail = detail


class GoldAnswerNotInOptionsError(ValidationError):
    def __init__(self, record_id: str, gold: str):
        super().__init__(f"record {record_id!r}: gold answer {gold!r} is not one of the options")
        self.record_id = record_id
        self.gold = gold


class DuplicateIdError(ValidationError):
    def __init__(self, record_id: str):
        super().__init__(f"duplicate example id {record_id!r}")
        self.record_id = record_id


class ConfigError(ValidationError):
    """Bad pipeline or run-file configuration."""


class DatasetError(ValidationError):
    """Dataset file failed to load; message carries per-line details."""


# --- backends ---------------------------------------------------------------


class BackendError(MasRvqaError):
    """Base class for model-backend failures."""

    retryable = False


class TransportError(BackendError):
    """Network-level failure (connection refused, timeout, 5xx)."""

    retryable = True


class RateLimitedError(BackendError):
    """Provider asked us to back off (HTTP 429)."""

    retryable = True


class ProtocolError(BackendError):
    """Response was structurally malformed; retrying will not help."""


class ExhaustedRetriesError(BackendError):
    def __init__(self, attempts: int, last: BaseException):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


class ImageUnreadableError(BackendError):
    def __init__(self, path: str):
        super().__init__(f"image not readable: {path}")
        self.path = path


class DimensionMismatchError(BackendError):
    def __init__(self, detail: str):
        super().__init__(f"embedding batch returned ragged vectors: {detail}")
        self.detail = detail


# --- retrieval ---------------------------------------------------------------


class EmbeddingFailedError(MasRvqaError):
    def __init__(self, example_id: str, cause: BaseException):
        super().__init__(f"embedding failed for {example_id!r}: {cause}")
        self.example_id = example_id
        self.cause = cause


class ZeroVectorError(MasRvqaError):
    def __init__(self, example_id: str):
        super().__init__(f"embedding for {example_id!r} is the zero vector")
        self.example_id = example_id


class IndexFormatError(MasRvqaError):
    """Persisted index file has a bad magic, dimension, or is truncated."""


# --- agents -------------------------------------------------------------------


class ScoreParseFailureError(MasRvqaError):
    def __init__(self, candidate_id: str, raw: str):
        super().__init__(f"no usable relevance score for candidate {candidate_id!r}: {raw!r}")
        self.candidate_id = candidate_id
        self.raw = raw


class UnparseableAnswerError(MasRvqaError):
    def __init__(self, raw: str):
        super().__init__(f"no answer letter found in reply: {raw!r}")
        self.raw = raw


class ReasoningFailedError(MasRvqaError):
    """Reasoning backend never produced a parseable answer."""


class ConfidenceParseFailureError(MasRvqaError):
    def __init__(self, raw: str):
        super().__init__(f"no confidence value found in reply: {raw!r}")
        self.raw = raw


class ReviseFailedError(MasRvqaError):
    """Revision never produced a parseable answer; caller keeps the original."""


# --- dataset construction ------------------------------------------------------


class InsufficientTaskError(ValidationError):
    def __init__(self, task: str, available: int, requested: int):
        super().__init__(
            f"task {task!r} has {available} examples, {requested} requested"
        )
        self.task = task
        self.available = available
        self.requested = requested


class IncompleteMatrixError(ValidationError):
    def __init__(self, example_id: str, model: str):
        super().__init__(f"result matrix missing cell ({example_id!r}, {model!r})")
        self.example_id = example_id
        self.model = model


class InsufficientRemainderError(ValidationError):
    def __init__(self, available: int, requested: int):
        super().__init__(
            f"only {available} examples remain outside the pool, {requested} requested"
        )
        self.available = available
        self.requested = requested
