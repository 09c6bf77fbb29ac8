"""Wires the agents per configured mode and runs batched evaluations.

Failure policy: per-example degradation, never batch abort. A context-agent
hard failure downgrades that example to reasoning-only (validation is also
skipped, since there is no retrieved context to validate against); a
reasoning hard failure yields Unanswered, which scores as incorrect.
"""

from __future__ import annotations

import json
import threading
import urllib.parse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .backends.base import GenParams, RetryPolicy
from .context_agent import run_context_agent
from .errors import MasRvqaError
from .metrics import EvalReport, build_report, render_report_table
from .prompts import PromptLibrary, load_default_library
from .reasoning_agent import run_reasoning_agent
from .retrieval import VectorIndex
from .tracing import CallRecorder, RealClock
from .types import (
    AnswerLetter,
    ContextBundle,
    McqExample,
    PipelineConfig,
    PipelineMode,
    PipelineTrace,
    Prediction,
)
from .validation_agent import run_validation_agent


@dataclass
class PipelineDeps:
    """Everything a run needs besides the config: backends, index, templates.

    ``index``/``bank_by_id``/``embedder``/``context_llm`` may be None in
    reasoning-only mode; ``validation_llm`` may be None below full mode.
    """

    reasoning_mllm: object
    embedder: object = None
    context_llm: object = None
    validation_llm: object = None
    index: Optional[VectorIndex] = None
    bank_by_id: Mapping[str, McqExample] = field(default_factory=dict)
    templates: PromptLibrary = field(default_factory=load_default_library)
    clock: object = field(default_factory=RealClock)
    gate: Optional[threading.Semaphore] = None
    backoff_base: float = 0.25
    backoff_jitter: bool = False
    gen_params: GenParams = GenParams()

    def require_context(self) -> None:
        missing = [
            name
            for name, value in (
                ("embedder", self.embedder),
                ("context_llm", self.context_llm),
                ("index", self.index),
            )
            if value is None
        ]
        if missing or not self.bank_by_id:
            raise ValueError(f"context mode needs {missing or ['bank_by_id']}")


@dataclass(frozen=True)
class RunResult:
    """Final outcome for one example; ``final`` is None when unanswered."""

    example_id: str
    final: Optional[Prediction]
    gold: AnswerLetter
    correct: bool
    trace: PipelineTrace

    @classmethod
    def build(
        cls, mcq: McqExample, final: Optional[Prediction], trace: PipelineTrace
    ) -> "RunResult":
        return cls(
            example_id=mcq.id,
            final=final,
            gold=mcq.gold_answer,
            correct=final is not None and final.answer == mcq.gold_answer,
            trace=trace,
        )

    def to_result_line(self, mode: PipelineMode) -> dict:
        return {
            "example_id": self.example_id,
            "mode": mode.value,
            "answer": None if self.final is None else self.final.answer.value,
            "explanation": None if self.final is None else self.final.explanation,
            "confidence": None if self.final is None else self.final.confidence,
            "revised": self.final.revised if self.final is not None else False,
            "correct": self.correct,
            "degraded": self.trace.degraded,
            "timing_ms": int(sum(s.duration for s in self.trace.stages) * 1000),
        }


def run_example(mcq: McqExample, deps: PipelineDeps, cfg: PipelineConfig) -> RunResult:
    """Run one example through the agents selected by cfg.mode.

    Never raises for backend trouble: failures become trace-flagged
    degradations or an Unanswered result.
    """
    trace = PipelineTrace(example_id=mcq.id, template_ids=deps.templates.ids)
    log = CallRecorder(
        clock=deps.clock,
        policy=RetryPolicy(
            retry_limit=cfg.retry_limit,
            base_delay=deps.backoff_base,
            jitter=deps.backoff_jitter,
        ),
        gate=deps.gate,
        records=trace.stages,
        flags=trace.flags,
    )

    bundle: Optional[ContextBundle] = None
    if cfg.mode.uses_context:
        deps.require_context()
        try:
            bundle = run_context_agent(
                mcq,
                deps.index,
                deps.bank_by_id,
                deps.embedder,
                deps.context_llm,
                cfg,
                log,
                deps.templates,
            )
        except MasRvqaError:
            log.add_flag("context_degraded")
            bundle = None

    try:
        prediction = run_reasoning_agent(
            mcq, bundle, deps.reasoning_mllm, cfg, log, deps.templates,
            params=deps.gen_params,
        )
    except MasRvqaError:
        log.add_flag("unanswered")
        return RunResult.build(mcq, None, trace)

    if cfg.mode.uses_validation and bundle is not None:
        prediction = run_validation_agent(
            mcq, prediction, bundle.top_k, deps.validation_llm, cfg, log, deps.templates
        )
    return RunResult.build(mcq, prediction, trace)


def run_batch(
    dataset: Sequence[McqExample],
    deps: PipelineDeps,
    cfg: PipelineConfig,
    out_dir: str | Path | None = None,
) -> tuple[list[RunResult], EvalReport]:
    """Process a dataset with bounded parallelism.

    Results come back in dataset order regardless of completion order. When
    ``out_dir`` is given, results, report, and per-example traces are
    persisted there with deterministic bytes.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    run_deps = replace(deps, gate=threading.Semaphore(cfg.max_in_flight))
    if cfg.max_in_flight == 1:
        results = [run_example(mcq, run_deps, cfg) for mcq in dataset]
    else:
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            results = list(pool.map(lambda mcq: run_example(mcq, run_deps, cfg), dataset))
    report = build_report(
        results, {ex.id: ex for ex in dataset}, embedder=deps.embedder
    )
    if out_dir is not None:
        write_run_outputs(results, report, cfg, out_dir)
    return results, report


@dataclass(frozen=True)
class ResultRow:
    """One row re-read from a results file; enough for re-scoring."""

    example_id: str
    final: Optional[Prediction]
    correct: bool


def read_results_file(path: str | Path) -> list[ResultRow]:
    rows: list[ResultRow] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("answer") is None:
                final = None
            else:
                final = Prediction(
                    answer=AnswerLetter.parse(rec["answer"]),
                    explanation=rec.get("explanation") or "",
                    confidence=rec.get("confidence"),
                    revised=bool(rec.get("revised", False)),
                )
            rows.append(
                ResultRow(
                    example_id=str(rec["example_id"]),
                    final=final,
                    correct=bool(rec["correct"]),
                )
            )
    return rows


def write_run_outputs(
    results: Sequence[RunResult],
    report: EvalReport,
    cfg: PipelineConfig,
    out_dir: str | Path,
) -> None:
    out = Path(out_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_result_line(cfg.mode), ensure_ascii=False) + "\n")
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(render_report_table(report), encoding="utf-8")
    for result in results:
        name = urllib.parse.quote(result.example_id, safe="-_.") + ".json"
        (traces_dir / name).write_text(
            json.dumps(result.trace.to_record(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
