"""Uniform abstraction over generative and embedding model backends."""

from .base import (
    EmbeddingBackend,
    GenParams,
    MultimodalBackend,
    PromptPart,
    RetryingBackend,
    RetryPolicy,
    TextBackend,
    call_with_retries,
    text_of_parts,
)
from .http import (
    API_KEY_ENV,
    HttpClient,
    HttpEmbeddingBackend,
    HttpMultimodalBackend,
    HttpTextBackend,
)
from .mock import (
    FaultInjectingBackend,
    HashingEmbedder,
    MockMultimodalBackend,
    MockScript,
    MockTextBackend,
    normalize_prompt,
    prompt_digest,
)

__all__ = [
    "API_KEY_ENV",
    "EmbeddingBackend",
    "FaultInjectingBackend",
    "GenParams",
    "HashingEmbedder",
    "HttpClient",
    "HttpEmbeddingBackend",
    "HttpMultimodalBackend",
    "HttpTextBackend",
    "MockMultimodalBackend",
    "MockScript",
    "MockTextBackend",
    "MultimodalBackend",
    "PromptPart",
    "RetryingBackend",
    "RetryPolicy",
    "TextBackend",
    "call_with_retries",
    "normalize_prompt",
    "prompt_digest",
    "text_of_parts",
]
