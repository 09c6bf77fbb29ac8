"""Context agent: retrieve top-n, rerank to top-k, vote task and category.

Reranking is pointwise: each candidate is scored once by the LLM on a 0-100
integer scale, so scores are order-independent and trivially parseable.
Voting weights are linear in rank (w = k - rank + 1), the simplest rule that
gives higher-ranked members strictly greater weight.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Mapping, Optional, Sequence

from .backends.base import GenParams
from .errors import ExhaustedRetriesError, ProtocolError
from .prompts import PromptLibrary
from .retrieval import VectorIndex, embedded_text, query_top_n
from .tracing import CallRecorder, TracedEmbedder
from .types import ContextBundle, McqExample, PipelineConfig, RetrievedExample

_SCORE_REMINDER = "Reply with only one integer between 0 and 100."
_INT_RE = re.compile(r"[-+]?\d+")


def _parse_score(raw: str) -> Optional[int]:
    """Integer 0-100 from the last non-empty line, else None."""
    lines = [l for l in raw.splitlines() if l.strip()]
    if not lines:
        return None
    match = _INT_RE.search(lines[-1])
    if match is None:
        return None
    value = int(match.group())
    if not 0 <= value <= 100:
        return None
    return value


def _candidate_block(example: McqExample) -> str:
    lines = [f"Question: {example.question}", example.options_block()]
    answer_text = example.options[example.gold_answer]
    lines.append(f"Answer: {example.gold_answer.value}. {answer_text}")
    if example.gold_explanation:
        lines.append(f"Explanation: {example.gold_explanation}")
    return "\n".join(lines)


def _score_candidate(
    mcq: McqExample,
    member: RetrievedExample,
    llm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
    params: GenParams,
) -> Optional[float]:
    """One candidate's normalized rerank score, or None after all re-asks."""
    prompt = templates.rerank.render(
        question=mcq.question,
        options_block=mcq.options_block(),
        candidate_block=_candidate_block(member.example),
    )
    stage = f"context.rerank[{member.example.id}]"
    for _ in range(cfg.retry_limit + 1):
        try:
            raw = log.complete_text(
                stage,
                llm,
                prompt,
                params,
                summarize=lambda r: f"score={_parse_score(r)}",
            )
        except (ExhaustedRetriesError, ProtocolError):
            return None
        score = _parse_score(raw)
        if score is not None:
            return score / 100.0
        prompt = prompt + "\n" + _SCORE_REMINDER
    return None


def rerank(
    mcq: McqExample,
    candidates: Sequence[RetrievedExample],
    llm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
    params: GenParams = GenParams(max_tokens=16),
) -> list[RetrievedExample]:
    """Score each candidate and re-sort by score, ties by retrieval order.

    A candidate whose score never parses keeps its retrieval-order position
    with ``rerank_score`` absent. Per-candidate calls may run concurrently;
    results are merged by candidate identity, so output order does not
    depend on thread interleaving.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")

    children = [log.child() for _ in candidates]
    workers = min(cfg.max_in_flight, len(candidates))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(
                pool.map(
                    lambda pair: _score_candidate(
                        mcq, pair[0], llm, cfg, pair[1], templates, params
                    ),
                    zip(candidates, children),
                )
            )
    else:
        scores = [
            _score_candidate(mcq, member, llm, cfg, child, templates, params)
            for member, child in zip(candidates, children)
        ]
    log.absorb(children)
    for member, score in zip(candidates, scores):
        if score is None:
            log.add_flag(f"rerank_score_missing:{member.example.id}")

    # Unscored candidates are pinned at their retrieval positions; scored
    # ones fill the remaining slots ordered by score desc, then prior rank.
    slots: list[Optional[tuple[RetrievedExample, Optional[float]]]] = [None] * len(candidates)
    scored: list[tuple[int, RetrievedExample, float]] = []
    for pos, (member, score) in enumerate(zip(candidates, scores)):
        if score is None:
            slots[pos] = (member, None)
        else:
            scored.append((pos, member, score))
    scored.sort(key=lambda item: (-item[2], item[0]))
    free = iter(i for i, slot in enumerate(slots) if slot is None)
    for _, member, score in scored:
        slots[next(free)] = (member, score)

    out: list[RetrievedExample] = []
    for new_rank, slot in enumerate(slots, start=1):
        assert slot is not None
        member, score = slot
        out.append(
            RetrievedExample(
                example=member.example,
                candidate=replace(member.candidate, rank=new_rank, rerank_score=score),
            )
        )
    return out


def vote_task_category(top_k: Sequence[RetrievedExample]) -> tuple[str, str]:
    """Rank-weighted vote over the members' task and category labels.

    Weight of the member at rank r is k - r + 1. Ties go to the label of the
    best-ranked member among the tied labels, then lexicographic.
    """
    if not top_k:
        raise ValueError("top_k must be non-empty")
    k = len(top_k)

    def winner(labels: Sequence[str]) -> str:
        scores: dict[str, int] = {}
        best_rank: dict[str, int] = {}
        for member, label in zip(top_k, labels):
            rank = member.candidate.rank
            scores[label] = scores.get(label, 0) + (k - rank + 1)
            best_rank[label] = min(best_rank.get(label, rank), rank)
        return min(scores, key=lambda label: (-scores[label], best_rank[label], label))

    tasks = [m.example.task_name for m in top_k]
    categories = [m.example.category for m in top_k]
    return winner(tasks), winner(categories)


def run_context_agent(
    mcq: McqExample,
    index: VectorIndex,
    bank_by_id: Mapping[str, McqExample],
    embedder,
    llm,
    cfg: PipelineConfig,
    log: CallRecorder,
    templates: PromptLibrary,
) -> ContextBundle:
    """Compose retrieve -> rerank -> truncate -> vote into a ContextBundle.

    If every rerank call fails, the bundle degrades to raw similarity order
    and the trace is flagged.
    """
    if not cfg.mode.uses_context:
        raise ValueError(f"context agent disabled in mode {cfg.mode.value}")
    traced = TracedEmbedder(log, embedder, "context.embed")
    hits = query_top_n(index, embedded_text(mcq), cfg.n_retrieve, traced)
    members = [RetrievedExample(bank_by_id[c.example_id], c) for c in hits]

    reranked = rerank(mcq, members, llm, cfg, log, templates)
    if all(m.candidate.rerank_score is None for m in reranked):
        log.add_flag("rerank_degraded")
        reranked = members  # similarity order, scores absent

    top = tuple(reranked[: cfg.k_rerank])
    task, category = vote_task_category(top)
    return ContextBundle(predicted_task=task, predicted_category=category, top_k=top)
