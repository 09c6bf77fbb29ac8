"""Validation agent: confidence gate plus revision of low-confidence answers.

The gate is strict: a prediction is accepted only when its confidence
strictly exceeds the threshold. Failure modes degrade toward revision (an
unparseable or unreachable confidence counts as 0.0), and a failed revision
falls back to the original prediction.
"""

from __future__ import annotations

import re
from dataclasses import replace
from typing import Optional, Sequence

from .backends.base import GenParams
from .errors import BackendError, ReviseFailedError, UnparseableAnswerError
from .prompts import PromptLibrary
from .reasoning_agent import FORMAT_REMINDER, parse_answer, render_example_block
from .tracing import CallRecorder
from .types import McqExample, PipelineConfig, Prediction, RetrievedExample

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_CONFIDENCE_REMINDER = "Reply with only one decimal number between 0 and 1."


def _parse_confidence(raw: str) -> Optional[float]:
    """First number on the last non-empty line, or None."""
    lines = [l for l in raw.splitlines() if l.strip()]
    if not lines:
        return None
    match = _NUMBER_RE.search(lines[-1])
    if match is None:
        return None
    return float(match.group())


def _context_block(top_k: Sequence[RetrievedExample]) -> str:
    if not top_k:
        return ""
    blocks = [
        render_example_block(m.example, m.candidate.rank, include_explanation=True)
        for m in top_k
    ]
    return "\n\n".join(blocks) + "\n\n"


def estimate_confidence(
    mcq: McqExample,
    prediction: Prediction,
    top_k: Sequence[RetrievedExample],
    llm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
    params: GenParams = GenParams(max_tokens=16),
) -> float:
    """Verbalized confidence in [0, 1], clamped.

    After exhausting re-asks (or losing the backend entirely) the value
    degrades to 0.0, which forces the revision path; the trace is flagged.
    """
    prompt = templates.confidence.render(
        context_block=_context_block(top_k),
        question=mcq.question,
        options_block=mcq.options_block(),
        answer=prediction.answer.value,
        answer_text=mcq.options[prediction.answer],
        explanation=prediction.explanation or "(none given)",
    )
    for _ in range(cfg.retry_limit + 1):
        try:
            raw = log.complete_text(
                "validation.confidence",
                llm,
                prompt,
                params,
                summarize=lambda r: f"confidence={_parse_confidence(r)}",
            )
        except BackendError:
            log.add_flag("confidence_backend_failed")
            return 0.0
        value = _parse_confidence(raw)
        if value is not None:
            return max(0.0, min(1.0, value))
        prompt = prompt + "\n" + _CONFIDENCE_REMINDER
    log.add_flag("confidence_parse_failed")
    return 0.0


def revise(
    mcq: McqExample,
    top_k: Sequence[RetrievedExample],
    llm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
    params: GenParams = GenParams(),
    prior: Optional[Prediction] = None,
) -> Prediction:
    """Fresh answer + explanation from the retrieved context, revised=True.

    The rejected answer is excluded from the prompt unless the config asks
    for it, to avoid anchoring the revision.
    """
    prompt = templates.revision.render(
        context_block=_context_block(top_k),
        question=mcq.question,
        options_block=mcq.options_block(),
    )
    if cfg.show_prior_answer_on_revise and prior is not None:
        prompt += f"\nA previous attempt chose {prior.answer.value}; judge it freshly."
    last_raw = ""
    for _ in range(cfg.retry_limit + 1):
        raw = log.complete_text(
            "validation.revise",
            llm,
            prompt,
            params,
            summarize=lambda r: _revise_summary(r),
        )
        try:
            letter, explanation = parse_answer(raw)
        except UnparseableAnswerError:
            last_raw = raw
            prompt = prompt + "\n" + FORMAT_REMINDER
            continue
        return Prediction(answer=letter, explanation=explanation, revised=True)
    raise ReviseFailedError(f"no parseable revision after retries; last reply: {last_raw!r}")


def _revise_summary(raw: str) -> str:
    try:
        letter, _ = parse_answer(raw)
        return f"revised_answer={letter.value}"
    except UnparseableAnswerError:
        return "revised_answer=unparseable"


def run_validation_agent(
    mcq: McqExample,
    prediction: Prediction,
    top_k: Sequence[RetrievedExample],
    llm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
) -> Prediction:
    """Accept iff confidence strictly exceeds the threshold, else revise.

    The final prediction always carries the measured confidence; a failed
    revision keeps the original answer (trace-flagged).
    """
    confidence = estimate_confidence(mcq, prediction, top_k, llm, cfg, log, templates)
    if confidence > cfg.confidence_threshold:
        return prediction.with_confidence(confidence)
    try:
        revised = revise(mcq, top_k, llm, cfg, log, templates, prior=prediction)
    except (ReviseFailedError, BackendError):
        log.add_flag("revise_failed")
        return prediction.with_confidence(confidence)
    return replace(revised, confidence=confidence)
