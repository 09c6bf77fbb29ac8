"""Per-example call recording: one StageRecord per logical backend call.

The recorder owns transport retries and concurrency gating so that every
call made inside a pipeline, including failed ones, lands in the trace
exactly once. A frozen clock makes whole runs byte-reproducible.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .backends.base import GenParams, PromptPart, RetryPolicy, call_with_retries, text_of_parts
from .errors import BackendError, ExhaustedRetriesError
from .types import StageRecord


class RealClock:
    """Wall-clock time; the default outside deterministic runs."""

    def now(self) -> float:
        return time.time()


class FrozenClock:
    """Constant time source: every timestamp and duration collapses to the
    same value, so repeated runs serialize byte-identically."""

    def __init__(self, at: float = 0.0):
        self.at = at

    def now(self) -> float:
        return self.at


@dataclass
class CallRecorder:
    """Routes backend calls through retry + gate and appends StageRecords.

    ``records`` and ``flags`` normally alias a PipelineTrace's lists. Only
    sequential code may add flags; concurrent helpers use ``child()``
    recorders whose records are merged back in a deterministic order.
    """

    clock: object
    policy: RetryPolicy
    gate: Optional[threading.Semaphore] = None
    records: list[StageRecord] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    _flag_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def child(self) -> "CallRecorder":
        """Fresh sink sharing clock/policy/gate; merge with ``absorb``."""
        return CallRecorder(clock=self.clock, policy=self.policy, gate=self.gate)

    def absorb(self, children: Sequence["CallRecorder"]) -> None:
        for child in children:
            self.records.extend(child.records)

    def add_flag(self, flag: str) -> None:
        with self._flag_lock:
            if flag not in self.flags:
                self.flags.append(flag)

    # -- call wrappers ------------------------------------------------------

    def complete_text(
        self,
        stage: str,
        backend,
        prompt: str,
        params: GenParams,
        summarize: Optional[Callable[[str], str]] = None,
    ) -> str:
        return self._call(
            stage, prompt, lambda: backend.complete_text(prompt, params), summarize
        )

    def complete_multimodal(
        self,
        stage: str,
        backend,
        parts: Sequence[PromptPart],
        params: GenParams,
        summarize: Optional[Callable[[str], str]] = None,
    ) -> str:
        n_images = sum(1 for p in parts if p.kind == "image")
        rendered = text_of_parts(parts) + (
            f"\n[{n_images} image part(s)]" if n_images else ""
        )
        return self._call(
            stage, rendered, lambda: backend.complete_multimodal(parts, params), summarize
        )

    def embed(self, stage: str, backend, texts: Sequence[str]) -> list[list[float]]:
        rendered = f"embed {len(texts)} text(s): " + " | ".join(t[:60] for t in texts[:4])
        return self._call(
            stage, rendered, lambda: backend.embed(texts), lambda v: f"vectors={len(v)}"
        )

    def _call(self, stage, rendered, fn, summarize):
        def attempt():
            if self.gate is None:
                return fn()
            with self.gate:
                return fn()

        started = self.clock.now()
        try:
            result, attempts = call_with_retries(attempt, self.policy)
        except BackendError as err:
            attempts = err.attempts if isinstance(err, ExhaustedRetriesError) else 1
            self.records.append(
                StageRecord(
                    stage_name=stage,
                    prompt_rendered=rendered,
                    raw_model_output="",
                    parsed_result_summary="",
                    started_at=started,
                    duration=self.clock.now() - started,
                    attempts=attempts,
                    error=f"{type(err).__name__}: {err}",
                )
            )
            raise
        raw = result if isinstance(result, str) else ""
        summary = summarize(result) if summarize else ""
        self.records.append(
            StageRecord(
                stage_name=stage,
                prompt_rendered=rendered,
                raw_model_output=raw,
                parsed_result_summary=summary,
                started_at=started,
                duration=self.clock.now() - started,
                attempts=attempts,
                error=None,
            )
        )
        return result


class TracedEmbedder:
    """Adapter so index queries record their embedding calls in the trace."""

    def __init__(self, recorder: CallRecorder, embedder, stage: str):
        self.recorder = recorder
        self.embedder = embedder
        self.stage = stage

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return self.recorder.embed(self.stage, self.embedder, texts)
