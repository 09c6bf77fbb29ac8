"""Shared builders for test objects."""

from __future__ import annotations

from masrvqa.types import AnswerLetter, ImageRef, McqExample, RetrievalCandidate, RetrievedExample

LETTERS = [AnswerLetter.A, AnswerLetter.B, AnswerLetter.C, AnswerLetter.D]

DEFAULT_OPTIONS = {
    AnswerLetter.A: "atelectasis",
    AnswerLetter.B: "pleural effusion",
    AnswerLetter.C: "pneumothorax",
    AnswerLetter.D: "cardiomegaly",
}


def make_example(
    i: int = 0,
    *,
    gold: str = "B",
    task: str = "presence assessment",
    category: str = "pulmonary",
    question: str | None = None,
    explanation: str = "Blunted costophrenic angle indicates effusion.",
    images: tuple[ImageRef, ...] = (),
    options: dict | None = None,
) -> McqExample:
    return McqExample(
        id=f"ex-{i:03d}",
        question=question or f"Synthetic case {i:03d}: which finding is present?",
        options=options or dict(DEFAULT_OPTIONS),
        gold_answer=AnswerLetter(gold),
        gold_explanation=explanation,
        task_name=task,
        category=category,
        images=images,
    )


def make_bank(n: int, *, tasks=None, categories=None) -> list[McqExample]:
    tasks = tasks or ["presence assessment", "differential diagnosis"]
    categories = categories or ["pulmonary", "cardiac"]
    return [
        make_example(
            100 + i,
            question=f"Reference vignette {i:03d}: what does the film show?",
            task=tasks[i % len(tasks)],
            category=categories[i % len(categories)],
            gold=LETTERS[i % 4].value,
        )
        for i in range(n)
    ]


def make_member(
    example: McqExample, rank: int, similarity: float = 0.5, rerank_score=None
) -> RetrievedExample:
    return RetrievedExample(
        example=example,
        candidate=RetrievalCandidate(
            example_id=example.id,
            similarity=similarity,
            rank=rank,
            rerank_score=rerank_score,
        ),
    )
