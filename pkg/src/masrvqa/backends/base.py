"""Backend abstractions: prompt parts, generation params, retry and gating.

A backend is anything implementing one of the three protocols below. The
retry primitive lives here so both the standalone retrying wrapper and the
orchestrator's call recorder share one implementation.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence, TypeVar, runtime_checkable

from ..errors import BackendError, ExhaustedRetriesError
from ..types import ImageRef

T = TypeVar("T")


@dataclass(frozen=True)
class GenParams:
    """Generation parameters; temperature defaults to 0 for determinism."""

    max_tokens: int = 512
    temperature: float = 0.0
    stop: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class PromptPart:
    """One prompt element: exactly one of text / image is set."""

    kind: str  # "text" | "image"
    text: Optional[str] = None
    image: Optional[ImageRef] = None

    def __post_init__(self) -> None:
        if self.kind == "text":
            if self.text is None or self.image is not None:
                raise ValueError("text part must carry text only")
        elif self.kind == "image":
            if self.image is None or self.text is not None:
                raise ValueError("image part must carry an image only")
        else:
            raise ValueError(f"unknown part kind: {self.kind!r}")

    @classmethod
    def of_text(cls, text: str) -> "PromptPart":
        return cls(kind="text", text=text)

    @classmethod
    def of_image(cls, image: ImageRef) -> "PromptPart":
        return cls(kind="image", image=image)


def text_of_parts(parts: Sequence[PromptPart]) -> str:
    """Concatenated text content of a part list (image parts skipped)."""
    return "\n".join(p.text or "" for p in parts if p.kind == "text")


@runtime_checkable
class TextBackend(Protocol):
    def complete_text(self, prompt: str, params: GenParams) -> str: ...


@runtime_checkable
class MultimodalBackend(Protocol):
    def complete_multimodal(self, parts: Sequence[PromptPart], params: GenParams) -> str: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff: base * 2^i between attempts, jitter optional.

    Total attempts are capped at retry_limit + 1.
    """

    retry_limit: int = 1
    base_delay: float = 0.25
    jitter: bool = False

    def delay(self, attempt_index: int) -> float:
        delay = self.base_delay * (2**attempt_index)
        if self.jitter:
            # Cheap decorrelation; disabled under test configuration.
            delay *= 0.5 + (time.monotonic() * 997.0) % 1.0
        return delay


def call_with_retries(fn: Callable[[], T], policy: RetryPolicy) -> tuple[T, int]:
    """Run ``fn`` retrying retryable BackendErrors; returns (result, attempts).

    Raises ExhaustedRetriesError once retry_limit + 1 attempts failed;
    non-retryable errors propagate immediately.
    """
    attempts = 0
    last: BackendError | None = None
    while attempts <= policy.retry_limit:
        attempts += 1
        try:
            return fn(), attempts
        except BackendError as err:
            if not err.retryable:
                raise
            last = err
            if attempts <= policy.retry_limit:
                delay = policy.delay(attempts - 1)
                if delay > 0:
                    time.sleep(delay)
    assert last is not None
    raise ExhaustedRetriesError(attempts, last)


class RetryingBackend:
    """Wrap any backend so transient failures are retried with backoff."""

    def __init__(self, inner, policy: RetryPolicy):
        self.inner = inner
        self.policy = policy
        self._local = threading.local()

    @property
    def last_attempts(self) -> int:
        """Attempts used by this thread's most recent call (1 if clean)."""
        return getattr(self._local, "attempts", 1)

    def _run(self, fn: Callable[[], T]) -> T:
        result, attempts = call_with_retries(fn, self.policy)
        self._local.attempts = attempts
        return result

    def complete_text(self, prompt: str, params: GenParams) -> str:
        return self._run(lambda: self.inner.complete_text(prompt, params))

    def complete_multimodal(self, parts: Sequence[PromptPart], params: GenParams) -> str:
        return self._run(lambda: self.inner.complete_multimodal(parts, params))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return self._run(lambda: self.inner.embed(texts))


def check_uniform_dimensions(vectors: Sequence[Sequence[float]]) -> None:
    from ..errors import DimensionMismatchError

    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatchError(f"got dimensions {sorted(dims)}")
