"""Deterministic scripted backends for tests and offline runs.

Scripting is keyed by (role tag, normalized prompt digest) with regex rules
as a fallback; an unscripted prompt is a hard error so tests can never pass
silently on an unintended path. Replies depend only on request content, so
behaviour is identical under any thread interleaving.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..errors import ImageUnreadableError, ProtocolError, TransportError
from .base import GenParams, PromptPart, text_of_parts


def normalize_prompt(prompt: str) -> str:
    """Collapse whitespace runs so scripting keys survive reformatting."""
    return " ".join(prompt.split())


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(normalize_prompt(prompt).encode("utf-8")).hexdigest()[:16]


@dataclass
class _Rule:
    role: str
    replies: list[str]
    exact: Optional[str] = None  # normalized text to match exactly
    pattern: Optional[re.Pattern] = None  # searched against the normalized prompt
    hits: int = 0

    def matches(self, normalized: str) -> bool:
        if self.exact is not None:
            return normalized == self.exact
        assert self.pattern is not None
        return self.pattern.search(normalized) is not None

    def next_reply(self) -> str:
        # Multi-reply rules are consumed in order; the last reply repeats.
        reply = self.replies[min(self.hits, len(self.replies) - 1)]
        self.hits += 1
        return reply


class MockScript:
    """Ordered reply rules shared by all mock backends of one run."""

    def __init__(self) -> None:
        self._rules: list[_Rule] = []
        self._lock = threading.Lock()
        self._calls: list[str] = []

    def add_text(self, role: str, text: str, reply: str | Sequence[str]) -> "MockScript":
        self._rules.append(_Rule(role=role, exact=normalize_prompt(text), replies=_replies(reply)))
        return self

    def add_pattern(self, role: str, pattern: str, reply: str | Sequence[str]) -> "MockScript":
        self._rules.append(
            _Rule(role=role, pattern=re.compile(pattern), replies=_replies(reply))
        )
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        """Load rules from JSON: {"rules": [{role, text|pattern, reply|replies}]}."""
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        script = cls()
        for rule in spec.get("rules", []):
            reply = rule["replies"] if "replies" in rule else rule["reply"]
            if "text" in rule:
                script.add_text(rule["role"], rule["text"], reply)
            elif "pattern" in rule:
                script.add_pattern(rule["role"], rule["pattern"], reply)
            else:
                raise ValueError(f"mock rule needs 'text' or 'pattern': {rule}")
        return script

    def reply(self, role: str, prompt: str) -> str:
        normalized = normalize_prompt(prompt)
        with self._lock:
            self._calls.append(role)
            for rule in self._rules:
                if rule.role == role and rule.matches(normalized):
                    return rule.next_reply()
        raise ProtocolError(
            f"no scripted reply for role={role!r} digest={prompt_digest(prompt)} "
            f"(prompt starts: {normalized[:80]!r})"
        )

    def call_count(self, role: str | None = None) -> int:
        with self._lock:
            if role is None:
                return len(self._calls)
            return sum(1 for r in self._calls if r == role)

    def __deepcopy__(self, memo) -> "MockScript":
        # locks cannot be copied; rebuild with fresh synchronization
        clone = MockScript()
        clone._rules = copy.deepcopy(self._rules, memo)
        clone._calls = list(self._calls)
        return clone


def _replies(reply: str | Sequence[str]) -> list[str]:
    if isinstance(reply, str):
        return [reply]
    replies = [str(r) for r in reply]
    if not replies:
        raise ValueError("mock rule has an empty reply list")
    return replies


class MockTextBackend:
    def __init__(self, script: MockScript, role: str):
        self.script = script
        self.role = role

    def complete_text(self, prompt: str, params: GenParams) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        return self.script.reply(self.role, prompt)


class MockMultimodalBackend:
    """Scripted multimodal backend keyed on the concatenated text parts."""

    def __init__(self, script: MockScript, role: str):
        self.script = script
        self.role = role

    def complete_multimodal(self, parts: Sequence[PromptPart], params: GenParams) -> str:
        if not any(p.kind == "text" for p in parts):
            raise ValueError("at least one text part required")
        for part in parts:
            if part.kind != "image":
                continue
            locator = part.image.locator
            if not locator.startswith(("http://", "https://")) and not Path(locator).is_file():
                raise ImageUnreadableError(locator)
        return self.script.reply(self.role, text_of_parts(parts))


class HashingEmbedder:
    """Seeded feature-hashing of the token multiset; identical texts map to
    identical vectors, and the mapping is stable across processes."""

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed

    def _token_slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            f"{self.seed}|{token}".encode("utf-8"), digest_size=9
        ).digest()
        index = int.from_bytes(digest[:8], "little") % self.dim
        sign = 1.0 if digest[8] & 1 else -1.0
        return index, sign

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        vectors = []
        for text in texts:
            vec = [0.0] * self.dim
            for token in text.lower().split():
                index, sign = self._token_slot(token)
                vec[index] += sign
            vectors.append(vec)
        return vectors


class FaultInjectingBackend:
    """Raise deterministic TransportErrors at a configured rate.

    The decision for each attempt depends only on (seed, request content,
    how many times that exact request has been seen), so reruns reproduce
    the same fault sequence regardless of interleaving.
    """

    def __init__(self, inner, rate: float, seed: int = 0):
        if not 0.0 <= rate <= 1.0:
            raise ValueError("rate must be in [0,1]")
        self.inner = inner
        self.rate = rate
        self.seed = seed
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def _maybe_fail(self, key: str) -> None:
        with self._lock:
            nth = self._counts.get(key, 0)
            self._counts[key] = nth + 1
        digest = hashlib.blake2b(
            f"{self.seed}|{key}|{nth}".encode("utf-8"), digest_size=8
        ).digest()
        draw = int.from_bytes(digest, "little") / 2**64
        if draw < self.rate:
            raise TransportError(f"injected fault (attempt {nth + 1})")

    def complete_text(self, prompt: str, params: GenParams) -> str:
        self._maybe_fail(normalize_prompt(prompt))
        return self.inner.complete_text(prompt, params)

    def complete_multimodal(self, parts: Sequence[PromptPart], params: GenParams) -> str:
        self._maybe_fail(normalize_prompt(text_of_parts(parts)))
        return self.inner.complete_multimodal(parts, params)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self._maybe_fail(normalize_prompt("\x1f".join(texts)))
        return self.inner.embed(texts)

    def __deepcopy__(self, memo) -> "FaultInjectingBackend":
        clone = FaultInjectingBackend(
            copy.deepcopy(self.inner, memo), rate=self.rate, seed=self.seed
        )
        clone._counts = dict(self._counts)
        return clone
