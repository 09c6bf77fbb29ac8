"""Estimator-style facade: fit on a QA bank, predict answers for MCQs.

Wraps the orchestrator in the familiar fit/predict/score surface so the
pipeline composes with the wider ecosystem (``get_params``/``set_params``,
``clone``, grid search over n_retrieve/k_rerank/confidence_threshold).
``fit`` builds the retrieval index over the QA bank; ``predict`` runs the
configured agents over a list of examples.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .metrics import EvalReport
from .orchestrator import PipelineDeps, RunResult, run_batch
from .retrieval import build_index
from .tracing import RealClock
from .types import McqExample, PipelineConfig, PipelineMode, check_unique_ids


class VqaPipeline(BaseEstimator):
    """Multi-agent retrieval-augmented answerer with an estimator API.

    Parameters mirror PipelineConfig; backends are injected so any model
    provider (or the deterministic mocks) can sit behind the pipeline.

    Example:
        >>> pipe = VqaPipeline(reasoning_mllm=mllm, embedder=emb,
        ...                    context_llm=llm, validation_llm=llm)
        >>> pipe.fit(bank_examples)
        >>> letters = pipe.predict(test_examples)
    """

    def __init__(
        self,
        reasoning_mllm=None,
        embedder=None,
        context_llm=None,
        validation_llm=None,
        mode: str = "full",
        n_retrieve: int = 10,
        k_rerank: int = 5,
        confidence_threshold: float = 0.7,
        max_in_flight: int = 4,
        retry_limit: int = 1,
        seed: int = 0,
        include_context_explanations: bool = True,
        show_prior_answer_on_revise: bool = False,
        templates=None,
        clock=None,
        backoff_base: float = 0.25,
        backoff_jitter: bool = False,
    ):
        self.reasoning_mllm = reasoning_mllm
        self.embedder = embedder
        self.context_llm = context_llm
        self.validation_llm = validation_llm
        self.mode = mode
        self.n_retrieve = n_retrieve
        self.k_rerank = k_rerank
        self.confidence_threshold = confidence_threshold
        self.max_in_flight = max_in_flight
        self.retry_limit = retry_limit
        self.seed = seed
        self.include_context_explanations = include_context_explanations
        self.show_prior_answer_on_revise = show_prior_answer_on_revise
        self.templates = templates
        self.clock = clock
        self.backoff_base = backoff_base
        self.backoff_jitter = backoff_jitter

    # -- config plumbing -----------------------------------------------------

    def _pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            n_retrieve=self.n_retrieve,
            k_rerank=self.k_rerank,
            confidence_threshold=self.confidence_threshold,
            mode=PipelineMode(self.mode),
            max_in_flight=self.max_in_flight,
            retry_limit=self.retry_limit,
            seed=self.seed,
            include_context_explanations=self.include_context_explanations,
            show_prior_answer_on_revise=self.show_prior_answer_on_revise,
        )

    def _deps(self) -> PipelineDeps:
        if self.reasoning_mllm is None:
            raise ValueError("reasoning_mllm is required")
        kwargs = {}
        if self.templates is not None:
            kwargs["templates"] = self.templates
        return PipelineDeps(
            reasoning_mllm=self.reasoning_mllm,
            embedder=self.embedder,
            context_llm=self.context_llm,
            validation_llm=self.validation_llm,
            index=getattr(self, "index_", None),
            bank_by_id=getattr(self, "bank_by_id_", {}),
            clock=self.clock if self.clock is not None else RealClock(),
            backoff_base=self.backoff_base,
            backoff_jitter=self.backoff_jitter,
            **kwargs,
        )

    def _check_ready(self) -> None:
        if PipelineMode(self.mode).uses_context and not hasattr(self, "index_"):
            raise NotFittedError(
                "this VqaPipeline needs fit(bank) before predict in context modes"
            )

    # -- estimator surface -----------------------------------------------------

    def fit(self, X: Sequence[McqExample], y=None) -> "VqaPipeline":
        """Build the retrieval index over the QA bank ``X``."""
        bank = list(X)
        check_unique_ids(bank)
        self.bank_by_id_ = {ex.id: ex for ex in bank}
        if PipelineMode(self.mode).uses_context:
            if self.embedder is None:
                raise ValueError("embedder is required to fit in context modes")
            self.index_ = build_index(bank, self.embedder)
        self.n_bank_ = len(bank)
        return self

    def predict(self, X: Sequence[McqExample]) -> np.ndarray:
        """Answer letters for each example; None where the pipeline gave up."""
        results, _ = self.run(X)
        return np.array(
            [None if r.final is None else r.final.answer.value for r in results],
            dtype=object,
        )

    def run(
        self, X: Sequence[McqExample], out_dir=None
    ) -> tuple[list[RunResult], EvalReport]:
        """Full results and report; the detailed form of ``predict``."""
        self._check_ready()
        return run_batch(list(X), self._deps(), self._pipeline_config(), out_dir=out_dir)

    def score(self, X: Sequence[McqExample], y=None) -> float:
        """Mean accuracy against the gold answers carried by ``X``."""
        results, report = self.run(X)
        return report.accuracy
