"""Domain types shared by every other module.

All types are immutable after construction and safe to share between
concurrent workers. Each has a ``to_record``/``from_record`` pair so the
serialization round-trip is field-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from .errors import (
    ConfigError,
    DuplicateIdError,
    DuplicateOptionError,
    GoldAnswerNotInOptionsError,
    MissingFieldError,
)


class AnswerLetter(str, Enum):
    """One of the four option letters."""

    A = "A"
    B = "B"
    C = "C"
    D = "D"

    @classmethod
    def parse(cls, value: str) -> "AnswerLetter":
        try:
            return cls(value.strip().upper())
        except (ValueError, AttributeError):
            raise ValueError(f"not an answer letter: {value!r}") from None

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.value


LETTERS = (AnswerLetter.A, AnswerLetter.B, AnswerLetter.C, AnswerLetter.D)


class MediaKind(str, Enum):
    PNG = "png"
    JPEG = "jpeg"
    DICOM_RENDERED = "dicom-rendered"


class PipelineMode(str, Enum):
    """Which agents participate in a run (the three ablation configurations)."""

    MRA_ONLY = "mra_only"
    CUA_MRA = "cua_mra"
    FULL = "full"

    @property
    def uses_context(self) -> bool:
        return self is not PipelineMode.MRA_ONLY

    @property
    def uses_validation(self) -> bool:
        return self is PipelineMode.FULL


@dataclass(frozen=True)
class ImageRef:
    """Opaque pointer to an X-ray image; pixels are never decoded here."""

    locator: str
    media_kind: MediaKind = MediaKind.PNG

    def __post_init__(self) -> None:
        if not self.locator:
            raise ValueError("ImageRef.locator must be non-empty")

    def to_record(self) -> dict[str, str]:
        return {"path": self.locator, "kind": self.media_kind.value}

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "ImageRef":
        return cls(locator=str(rec["path"]), media_kind=MediaKind(rec["kind"]))


@dataclass(frozen=True)
class McqExample:
    """One benchmark item: question, four options, gold answer, labels, images.

    ``gold_explanation`` may be empty for unlabeled inference inputs; the
    metrics layer skips explanation scoring for such items.
    """

    id: str
    question: str
    options: Mapping[AnswerLetter, str]
    gold_answer: AnswerLetter
    gold_explanation: str = ""
    task_name: str = ""
    category: str = ""
    images: tuple[ImageRef, ...] = ()

    def option_text(self, letter: AnswerLetter) -> str:
        return self.options[letter]

    def options_block(self) -> str:
        """The four options rendered one per line in letter order."""
        return "\n".join(f"{l.value}. {self.options[l]}" for l in LETTERS)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question": self.question,
            "options": {l.value: self.options[l] for l in LETTERS},
            "answer": self.gold_answer.value,
            "explanation": self.gold_explanation,
            "task": self.task_name,
            "category": self.category,
            "images": [img.to_record() for img in self.images],
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "McqExample":
        return validate_example(rec)


def validate_example(raw: Mapping[str, Any]) -> McqExample:
    """Build a McqExample from a decoded record, enforcing every invariant.

    Raises MissingFieldError, DuplicateOptionError, or
    GoldAnswerNotInOptionsError, each naming the offending field and record id.
    """
    record_id = str(raw.get("id") or "")
    if not record_id:
        raise MissingFieldError(record_id="<unknown>", field="id")
    question = raw.get("question")
    if not isinstance(question, str) or not question.strip():
        raise MissingFieldError(record_id, "question")

    options_raw = raw.get("options")
    if not isinstance(options_raw, Mapping) or not options_raw:
        raise MissingFieldError(record_id, "options")
    options: dict[AnswerLetter, str] = {}
    for key, text in options_raw.items():
        try:
            letter = AnswerLetter.parse(str(key))
        except ValueError:
            raise DuplicateOptionError(record_id, f"unknown option letter {key!r}") from None
        if letter in options:
            raise DuplicateOptionError(record_id, f"option {letter.value} appears twice")
        if not isinstance(text, str) or not text.strip():
            raise MissingFieldError(record_id, f"options.{letter.value}")
        options[letter] = text
    missing = [l.value for l in LETTERS if l not in options]
    if missing:
        raise DuplicateOptionError(record_id, f"missing option(s) {', '.join(missing)}")

    answer_raw = raw.get("answer")
    if answer_raw is None or str(answer_raw).strip() == "":
        raise MissingFieldError(record_id, "answer")
    try:
        gold = AnswerLetter.parse(str(answer_raw))
    except ValueError:
        raise GoldAnswerNotInOptionsError(record_id, str(answer_raw)) from None
    if gold not in options:  # unreachable with the four-letter check above, kept for safety
        raise GoldAnswerNotInOptionsError(record_id, gold.value)

    images = tuple(ImageRef.from_record(r) for r in raw.get("images") or ())
    return McqExample(
        id=record_id,
        question=question,
        options=options,
        gold_answer=gold,
        gold_explanation=str(raw.get("explanation") or ""),
        task_name=str(raw.get("task") or ""),
        category=str(raw.get("category") or ""),
        images=images,
    )


@dataclass(frozen=True)
class RetrievalCandidate:
    """A QA-bank entry paired with its retrieval and rerank standing."""

    example_id: str
    similarity: float
    rank: int
    rerank_score: Optional[float] = None

    def __post_init__(self) -> None:
        if not -1.0 - 1e-9 <= self.similarity <= 1.0 + 1e-9:
            raise ValueError(f"similarity out of range: {self.similarity}")
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.rerank_score is not None and not 0.0 <= self.rerank_score <= 1.0:
            raise ValueError(f"rerank_score out of range: {self.rerank_score}")

    def to_record(self) -> dict[str, Any]:
        return {
            "example_id": self.example_id,
            "similarity": self.similarity,
            "rank": self.rank,
            "rerank_score": self.rerank_score,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RetrievalCandidate":
        return cls(
            example_id=str(rec["example_id"]),
            similarity=float(rec["similarity"]),
            rank=int(rec["rank"]),
            rerank_score=None if rec.get("rerank_score") is None else float(rec["rerank_score"]),
        )


@dataclass(frozen=True)
class RetrievedExample:
    """One reranked context member: the bank example plus its candidate row."""

    example: McqExample
    candidate: RetrievalCandidate

    def to_record(self) -> dict[str, Any]:
        return {"example": self.example.to_record(), "candidate": self.candidate.to_record()}

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RetrievedExample":
        return cls(
            example=McqExample.from_record(rec["example"]),
            candidate=RetrievalCandidate.from_record(rec["candidate"]),
        )


@dataclass(frozen=True)
class ContextBundle:
    """Context-agent output: predicted labels plus the top-k reranked examples."""

    predicted_task: str
    predicted_category: str
    top_k: tuple[RetrievedExample, ...]

    def __post_init__(self) -> None:
        ranks = [m.candidate.rank for m in self.top_k]
        if ranks != sorted(ranks):
            raise ValueError("top_k must be sorted by rank ascending")
        if self.top_k:
            tasks = {m.example.task_name for m in self.top_k}
            cats = {m.example.category for m in self.top_k}
            if self.predicted_task not in tasks:
                raise ValueError("predicted_task does not occur among top_k labels")
            if self.predicted_category not in cats:
                raise ValueError("predicted_category does not occur among top_k labels")

    def to_record(self) -> dict[str, Any]:
        return {
            "predicted_task": self.predicted_task,
            "predicted_category": self.predicted_category,
            "top_k": [m.to_record() for m in self.top_k],
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "ContextBundle":
        return cls(
            predicted_task=str(rec["predicted_task"]),
            predicted_category=str(rec["predicted_category"]),
            top_k=tuple(RetrievedExample.from_record(m) for m in rec["top_k"]),
        )


@dataclass(frozen=True)
class Prediction:
    """An answer letter with its free-text rationale and validator metadata."""

    answer: AnswerLetter
    explanation: str
    confidence: Optional[float] = None
    revised: bool = False

    def __post_init__(self) -> None:
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")

    def with_confidence(self, confidence: float) -> "Prediction":
        return replace(self, confidence=confidence)

    def to_record(self) -> dict[str, Any]:
        return {
            "answer": self.answer.value,
            "explanation": self.explanation,
            "confidence": self.confidence,
            "revised": self.revised,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Prediction":
        return cls(
            answer=AnswerLetter.parse(rec["answer"]),
            explanation=str(rec["explanation"]),
            confidence=None if rec.get("confidence") is None else float(rec["confidence"]),
            revised=bool(rec.get("revised", False)),
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Run-time knobs: retrieval breadth, rerank depth, validation threshold.

    ``n_retrieve`` and ``k_rerank`` default to the breadth/depth the pipeline
    was tuned with (10 and 5); the validator accepts only answers whose
    confidence strictly exceeds ``confidence_threshold`` (default 0.7).
    """

    n_retrieve: int = 10
    k_rerank: int = 5
    confidence_threshold: float = 0.7
    mode: PipelineMode = PipelineMode.FULL
    max_in_flight: int = 4
    retry_limit: int = 1
    seed: int = 0
    include_context_explanations: bool = True
    show_prior_answer_on_revise: bool = False

    def __post_init__(self) -> None:
        if self.n_retrieve < 1:
            raise ConfigError(f"n_retrieve must be positive, got {self.n_retrieve}")
        if self.k_rerank < 1:
            raise ConfigError(f"k_rerank must be positive, got {self.k_rerank}")
        if self.k_rerank > self.n_retrieve:
            raise ConfigError(
                f"k_rerank ({self.k_rerank}) must not exceed n_retrieve ({self.n_retrieve})"
            )
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError(
                f"confidence_threshold must be in [0,1], got {self.confidence_threshold}"
            )
        if self.max_in_flight < 1:
            raise ConfigError(f"max_in_flight must be positive, got {self.max_in_flight}")
        if self.retry_limit < 0:
            raise ConfigError(f"retry_limit must be >= 0, got {self.retry_limit}")

    def to_record(self) -> dict[str, Any]:
        return {
            "n_retrieve": self.n_retrieve,
            "k_rerank": self.k_rerank,
            "confidence_threshold": self.confidence_threshold,
            "mode": self.mode.value,
            "max_in_flight": self.max_in_flight,
            "retry_limit": self.retry_limit,
            "seed": self.seed,
            "include_context_explanations": self.include_context_explanations,
            "show_prior_answer_on_revise": self.show_prior_answer_on_revise,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "PipelineConfig":
        return cls(
            n_retrieve=int(rec["n_retrieve"]),
            k_rerank=int(rec["k_rerank"]),
            confidence_threshold=float(rec["confidence_threshold"]),
            mode=PipelineMode(rec["mode"]),
            max_in_flight=int(rec["max_in_flight"]),
            retry_limit=int(rec["retry_limit"]),
            seed=int(rec["seed"]),
            include_context_explanations=bool(rec.get("include_context_explanations", True)),
            show_prior_answer_on_revise=bool(rec.get("show_prior_answer_on_revise", False)),
        )


@dataclass(frozen=True)
class StageRecord:
    """One model call inside a pipeline run (failed calls included).

    ``attempts`` counts physical transport attempts inside this logical call,
    so transient retried faults stay visible in traces.
    """

    stage_name: str
    prompt_rendered: str
    raw_model_output: str
    parsed_result_summary: str
    started_at: float
    duration: float
    attempts: int = 1
    error: Optional[str] = None

    def to_record(self) -> dict[str, Any]:
        return {
            "stage_name": self.stage_name,
            "prompt_rendered": self.prompt_rendered,
            "raw_model_output": self.raw_model_output,
            "parsed_result_summary": self.parsed_result_summary,
            "started_at": self.started_at,
            "duration": self.duration,
            "attempts": self.attempts,
            "error": self.error,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "StageRecord":
        return cls(
            stage_name=str(rec["stage_name"]),
            prompt_rendered=str(rec["prompt_rendered"]),
            raw_model_output=str(rec["raw_model_output"]),
            parsed_result_summary=str(rec["parsed_result_summary"]),
            started_at=float(rec["started_at"]),
            duration=float(rec["duration"]),
            attempts=int(rec.get("attempts", 1)),
            error=None if rec.get("error") is None else str(rec["error"]),
        )


@dataclass
class PipelineTrace:
    """Ordered per-stage records for one example, plus degradation flags.

    Built by a single worker while its example runs, then treated as
    read-only. Stage names follow pipeline order (context.*, reasoning.*,
    validation.*); ``template_ids`` pins the prompt versions the run used.
    """

    example_id: str
    stages: list[StageRecord] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    template_ids: dict[str, str] = field(default_factory=dict)

    def add_flag(self, flag: str) -> None:
        if flag not in self.flags:
            self.flags.append(flag)

    @property
    def degraded(self) -> bool:
        return any(f.endswith("_degraded") or f.endswith("_failed") for f in self.flags)

    def to_record(self) -> dict[str, Any]:
        return {
            "example_id": self.example_id,
            "stages": [s.to_record() for s in self.stages],
            "flags": list(self.flags),
            "template_ids": dict(self.template_ids),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "PipelineTrace":
        return cls(
            example_id=str(rec["example_id"]),
            stages=[StageRecord.from_record(s) for s in rec["stages"]],
            flags=list(rec.get("flags", [])),
            template_ids=dict(rec.get("template_ids", {})),
        )


def check_unique_ids(examples: Sequence[McqExample]) -> None:
    """Reject duplicate example ids within one dataset container."""
    seen: set[str] = set()
    for ex in examples:
        if ex.id in seen:
            raise DuplicateIdError(ex.id)
        seen.add(ex.id)
