"""Networked backend speaking the de-facto chat-completions wire protocol.

Requests go to ``{base_url}/v1/chat/completions`` and ``/v1/embeddings``;
auth is a bearer token read from the MAS_RVQA_API_KEY environment variable.
Each method performs a single attempt — retry behaviour is layered on via
``RetryingBackend`` or the orchestrator's call recorder.
"""

from __future__ import annotations

import base64
import os
from pathlib import Path
from typing import Any, Optional, Sequence

import requests

from ..errors import (
    ImageUnreadableError,
    ProtocolError,
    RateLimitedError,
    TransportError,
)
from ..types import ImageRef, MediaKind
from .base import GenParams, PromptPart, check_uniform_dimensions

API_KEY_ENV = "MAS_RVQA_API_KEY"

_MIME = {
    MediaKind.PNG: "image/png",
    MediaKind.JPEG: "image/jpeg",
    MediaKind.DICOM_RENDERED: "image/png",  # rendered DICOM is shipped as PNG
}


class HttpClient:
    """Thin JSON-POST helper shared by the three backend roles."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        api_key_env: str = API_KEY_ENV,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.api_key_env = api_key_env
        self.session = session or requests.Session()

    def post_json(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = self.session.post(
                f"{self.base_url}{path}", json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as err:
            raise TransportError(f"request to {path} failed: {err}") from err
        if resp.status_code == 429:
            raise RateLimitedError(f"rate limited on {path}")
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code} on {path}")
        if resp.status_code >= 400:
            raise ProtocolError(f"client error {resp.status_code} on {path}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as err:
            raise ProtocolError(f"non-JSON response from {path}") from err


def _image_url(ref: ImageRef) -> str:
    if ref.locator.startswith(("http://", "https://")):
        return ref.locator
    path = Path(ref.locator)
    try:
        raw = path.read_bytes()
    except OSError:
        raise ImageUnreadableError(ref.locator) from None
    encoded = base64.b64encode(raw).decode("ascii")
    return f"data:{_MIME[ref.media_kind]};base64,{encoded}"


def _content_parts(parts: Sequence[PromptPart]) -> list[dict[str, Any]]:
    content: list[dict[str, Any]] = []
    for part in parts:
        if part.kind == "text":
            content.append({"type": "text", "text": part.text})
        else:
            content.append({"type": "image_url", "image_url": {"url": _image_url(part.image)}})
    return content


def _extract_completion(data: dict[str, Any]) -> str:
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as err:
        raise ProtocolError(f"malformed completion response: {err}") from err
    if not isinstance(content, str):
        raise ProtocolError(f"completion content is not text: {type(content).__name__}")
    return content


class HttpTextBackend:
    def __init__(self, client: HttpClient, model: str):
        self.client = client
        self.model = model

    def complete_text(self, prompt: str, params: GenParams) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        parts = [PromptPart.of_text(prompt)]
        return _chat(self.client, self.model, parts, params)


class HttpMultimodalBackend:
    def __init__(self, client: HttpClient, model: str):
        self.client = client
        self.model = model

    def complete_multimodal(self, parts: Sequence[PromptPart], params: GenParams) -> str:
        if not any(p.kind == "text" for p in parts):
            raise ValueError("at least one text part required")
        return _chat(self.client, self.model, parts, params)


def _chat(
    client: HttpClient, model: str, parts: Sequence[PromptPart], params: GenParams
) -> str:
    payload: dict[str, Any] = {
        "model": model,
        "messages": [{"role": "user", "content": _content_parts(parts)}],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    }
    if params.stop:
        payload["stop"] = list(params.stop)
    return _extract_completion(client.post_json("/v1/chat/completions", payload))


class HttpEmbeddingBackend:
    def __init__(self, client: HttpClient, model: str):
        self.client = client
        self.model = model

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        data = self.client.post_json(
            "/v1/embeddings", {"model": self.model, "input": list(texts)}
        )
        try:
            vectors = [[float(x) for x in row["embedding"]] for row in data["data"]]
        except (KeyError, TypeError, ValueError) as err:
            raise ProtocolError(f"malformed embeddings response: {err}") from err
        if len(vectors) != len(texts):
            raise ProtocolError(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        check_uniform_dimensions(vectors)
        return vectors
