"""Reasoning agent: grounded prompt assembly, multimodal call, answer parse.

The model is asked for a rigid "ANSWER: <letter> / EXPLANATION: <text>"
format; extraction falls back through a lenient cascade so accuracy
accounting survives free-form replies.
"""

from __future__ import annotations

import re
from typing import Optional, Sequence

from .backends.base import GenParams, PromptPart
from .errors import ReasoningFailedError, UnparseableAnswerError
from .prompts import PromptLibrary
from .tracing import CallRecorder
from .types import AnswerLetter, ContextBundle, McqExample, PipelineConfig, Prediction

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Reply again using exactly:\n"
    "ANSWER: <letter>\nEXPLANATION: <text>"
)

_TAG_RE = re.compile(r"(?i)\banswer\s*:\s*\(?([a-d])\b")
_EXPLANATION_TAG_RE = re.compile(r"(?i)\bexplanation\s*:\s*")
# Fallback cascade, tried as one leftmost-first alternation:
# "answer is A" / "option A" / "(A)" / standalone "A."
_FALLBACK_RE = re.compile(
    r"(?i)\banswer\s+is\s+\(?([a-d])\)?\.?"
    r"|\boption\s+([a-d])\b"
    r"|\(([a-d])\)"
    r"|\b([a-d])\."
)


def parse_answer(raw: str) -> tuple[AnswerLetter, str]:
    """Extract (letter, explanation) from a model reply.

    Cascade: the ANSWER:-tagged letter if present, else the first standalone
    pattern among "answer is A" / "option A" / "(A)" / "A." (any letter,
    case-insensitive). The explanation is the text after the first
    EXPLANATION: tag, else the raw text with the matched answer token
    removed and whitespace normalized.
    """
    if not raw or not raw.strip():
        raise UnparseableAnswerError(raw)
    match = _TAG_RE.search(raw)
    if match is None:
        match = _FALLBACK_RE.search(raw)
    if match is None:
        raise UnparseableAnswerError(raw)
    letter = AnswerLetter.parse(next(g for g in match.groups() if g))

    expl_tag = _EXPLANATION_TAG_RE.search(raw)
    if expl_tag is not None:
        explanation = raw[expl_tag.end() :].strip()
    else:
        remainder = raw[: match.start()] + raw[match.end() :]
        explanation = " ".join(remainder.split())
    return letter, explanation


def _context_parts(bundle: ContextBundle, include_explanations: bool) -> list[PromptPart]:
    parts = [
        PromptPart.of_text(
            f"Predicted task: {bundle.predicted_task}\n"
            f"Predicted category: {bundle.predicted_category}"
        )
    ]
    for member in bundle.top_k:
        parts.append(
            PromptPart.of_text(
                render_example_block(member.example, member.candidate.rank, include_explanations)
            )
        )
    return parts


def render_example_block(example: McqExample, rank: int, include_explanation: bool) -> str:
    lines = [
        f"Reference example {rank}:",
        f"Question: {example.question}",
        example.options_block(),
        f"Answer: {example.gold_answer.value}. {example.options[example.gold_answer]}",
    ]
    if include_explanation and example.gold_explanation:
        lines.append(f"Explanation: {example.gold_explanation}")
    return "\n".join(lines)


def build_reasoning_prompt(
    mcq: McqExample,
    bundle: Optional[ContextBundle],
    templates: PromptLibrary,
    include_explanations: bool = True,
) -> list[PromptPart]:
    """Deterministic part list: instruction, optional context, question, images."""
    parts = [PromptPart.of_text(templates.reasoning.text.strip())]
    if bundle is not None:
        parts.extend(_context_parts(bundle, include_explanations))
    parts.append(PromptPart.of_text(f"Question:\n{mcq.question}\n{mcq.options_block()}"))
    parts.extend(PromptPart.of_image(img) for img in mcq.images)
    return parts


def _summarize(raw: str) -> str:
    try:
        letter, _ = parse_answer(raw)
        return f"answer={letter.value}"
    except UnparseableAnswerError:
        return "answer=unparseable"


def run_reasoning_agent(
    mcq: McqExample,
    bundle: Optional[ContextBundle],
    mllm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
    params: GenParams = GenParams(),
) -> Prediction:
    """Answer one MCQ; re-asks with a stricter format reminder on parse
    failure, then raises ReasoningFailedError."""
    parts = build_reasoning_prompt(
        mcq, bundle, templates, include_explanations=cfg.include_context_explanations
    )
    last_raw = ""
    for _ in range(cfg.retry_limit + 1):
        raw = log.complete_multimodal(
            "reasoning.generate", mllm, parts, params, summarize=_summarize
        )
        try:
            letter, explanation = parse_answer(raw)
        except UnparseableAnswerError:
            last_raw = raw
            parts = parts + [PromptPart.of_text(FORMAT_REMINDER)]
            continue
        return Prediction(answer=letter, explanation=explanation, revised=False)
    raise ReasoningFailedError(f"no parseable answer after retries; last reply: {last_raw!r}")
