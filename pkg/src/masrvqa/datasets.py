"""Dataset ingestion, pool sampling, and benchmark-construction tooling.

The canonical on-disk format is UTF-8 line-delimited JSON, one record per
line (see ``McqExample.to_record`` for the schema). Relative image paths are
resolved against the dataset file's directory at load time.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    DatasetError,
    IncompleteMatrixError,
    InsufficientRemainderError,
    InsufficientTaskError,
    ValidationError,
)
from .types import McqExample, validate_example


def load_dataset(path: str | Path) -> list[McqExample]:
    """Load and validate a line-delimited dataset file.

    Per-line problems are collected and reported together with their line
    numbers; any problem aborts the load.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: no such file")
    base_dir = path.parent
    examples: list[McqExample] = []
    errors: list[str] = []
    seen_ids: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                errors.append(f"line {lineno}: invalid JSON ({err.msg})")
                continue
            raw = _resolve_image_paths(raw, base_dir)
            try:
                example = validate_example(raw)
            except ValidationError as err:
                errors.append(f"line {lineno}: {err}")
                continue
            if example.id in seen_ids:
                errors.append(
                    f"line {lineno}: duplicate example id {example.id!r} "
                    f"(first seen on line {seen_ids[example.id]})"
                )
                continue
            seen_ids[example.id] = lineno
            examples.append(example)
    if errors:
        raise DatasetError(
            f"{path}: {len(errors)} invalid record(s)\n" + "\n".join(errors)
        )
    if not examples:
        raise DatasetError(f"{path}: no records found")
    return examples


def _resolve_image_paths(raw: dict, base_dir: Path) -> dict:
    images = raw.get("images")
    if not images:
        return raw
    resolved = []
    for img in images:
        if not isinstance(img, Mapping):
            resolved.append(img)
            continue
        locator = str(img.get("path", ""))
        if locator and not locator.startswith(("http://", "https://")) and not Path(locator).is_absolute():
            img = {**img, "path": str(base_dir / locator)}
        resolved.append(img)
    return {**raw, "images": resolved}


def save_dataset(examples: Sequence[McqExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_record(), ensure_ascii=False) + "\n")


def observed_labels(examples: Sequence[McqExample]) -> tuple[list[str], list[str]]:
    """Sorted task and category vocabularies observed in a dataset."""
    tasks = sorted({ex.task_name for ex in examples})
    categories = sorted({ex.category for ex in examples})
    return tasks, categories


def sample_pool(
    dataset: Sequence[McqExample], per_task: int, seed: int
) -> list[McqExample]:
    """Seeded uniform sample of ``per_task`` examples per observed task.

    Deterministic for a fixed (dataset, seed); output sorted by id.
    """
    if per_task < 1:
        raise ValueError("per_task must be positive")
    by_task: dict[str, list[McqExample]] = {}
    for ex in dataset:
        by_task.setdefault(ex.task_name, []).append(ex)
    rng = random.Random(seed)
    chosen: list[McqExample] = []
    for task in sorted(by_task):
        members = sorted(by_task[task], key=lambda e: e.id)
        if len(members) < per_task:
            raise InsufficientTaskError(task, len(members), per_task)
        chosen.extend(rng.sample(members, per_task))
    return sorted(chosen, key=lambda e: e.id)


@dataclass(frozen=True)
class ModelResultMatrix:
    """Total boolean matrix: did each model answer each example correctly."""

    model_names: tuple[str, ...]
    cells: Mapping[tuple[str, str], bool]

    def correct(self, example_id: str, model: str) -> bool:
        try:
            return self.cells[(example_id, model)]
        except KeyError:
            raise IncompleteMatrixError(example_id, model) from None

    def to_record(self) -> dict:
        results: dict[str, dict[str, bool]] = {}
        for (example_id, model), value in self.cells.items():
            results.setdefault(example_id, {})[model] = value
        return {"models": list(self.model_names), "results": results}

    @classmethod
    def from_record(cls, rec: Mapping) -> "ModelResultMatrix":
        models = tuple(str(m) for m in rec["models"])
        cells: dict[tuple[str, str], bool] = {}
        for example_id, row in rec["results"].items():
            for model in models:
                if model not in row:
                    raise IncompleteMatrixError(str(example_id), model)
                cells[(str(example_id), model)] = bool(row[model])
        return cls(model_names=models, cells=cells)


def load_matrix(path: str | Path) -> ModelResultMatrix:
    return ModelResultMatrix.from_record(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


def build_hard_set(
    pool: Sequence[McqExample], matrix: ModelResultMatrix, min_wrong: int
) -> list[McqExample]:
    """Pool examples answered incorrectly by at least ``min_wrong`` models,
    in pool order."""
    if min_wrong < 1:
        raise ValueError("min_wrong must be positive")
    hard: list[McqExample] = []
    for ex in pool:
        wrong = sum(
            1 for model in matrix.model_names if not matrix.correct(ex.id, model)
        )
        if wrong >= min_wrong:
            hard.append(ex)
    return hard


@dataclass(frozen=True)
class MatrixSummary:
    """Per-model accuracy and the distribution of wrong-counts over a pool."""

    per_model_accuracy: Mapping[str, float]
    wrong_count_histogram: Mapping[int, int]
    n_examples: int

    def to_record(self) -> dict:
        return {
            "per_model_accuracy": dict(self.per_model_accuracy),
            "wrong_count_histogram": {
                str(k): v for k, v in sorted(self.wrong_count_histogram.items())
            },
            "n_examples": self.n_examples,
        }


def matrix_summary(
    pool: Sequence[McqExample], matrix: ModelResultMatrix
) -> MatrixSummary:
    if not pool:
        raise ValueError("pool must be non-empty")
    wrong_per_model = {model: 0 for model in matrix.model_names}
    histogram: dict[int, int] = {}
    for ex in pool:
        wrong = 0
        for model in matrix.model_names:
            if not matrix.correct(ex.id, model):
                wrong_per_model[model] += 1
                wrong += 1
        histogram[wrong] = histogram.get(wrong, 0) + 1
    accuracy = {
        model: 1.0 - wrong / len(pool) for model, wrong in wrong_per_model.items()
    }
    return MatrixSummary(
        per_model_accuracy=accuracy,
        wrong_count_histogram=histogram,
        n_examples=len(pool),
    )


def _allocate_largest_remainder(
    counts: Mapping[str, int], target: int
) -> dict[str, int]:
    """Proportional allocation with largest-remainder rounding.

    Remainder ties go to the larger stratum, then to the lexicographically
    smaller label, so the split is deterministic.
    """
    total = sum(counts.values())
    quotas = {label: target * n / total for label, n in counts.items()}
    alloc = {label: math.floor(q) for label, q in quotas.items()}
    leftover = target - sum(alloc.values())
    order = sorted(
        counts,
        key=lambda label: (-(quotas[label] - alloc[label]), -counts[label], label),
    )
    for label in order[:leftover]:
        alloc[label] += 1
    return alloc


def build_rag_bank(
    dataset: Sequence[McqExample],
    pool: Sequence[McqExample],
    target_size: int,
    seed: int,
) -> list[McqExample]:
    """Seeded task-stratified sample from the dataset minus the pool.

    Stratification is proportional over task labels with largest-remainder
    rounding; disjointness from the pool is guaranteed and asserted.
    """
    if target_size < 1:
        raise ValueError("target_size must be positive")
    pool_ids = {ex.id for ex in pool}
    remainder = [ex for ex in dataset if ex.id not in pool_ids]
    if len(remainder) < target_size:
        raise InsufficientRemainderError(len(remainder), target_size)

    by_task: dict[str, list[McqExample]] = {}
    for ex in remainder:
        by_task.setdefault(ex.task_name, []).append(ex)
    alloc = _allocate_largest_remainder(
        {task: len(members) for task, members in by_task.items()}, target_size
    )
    rng = random.Random(seed)
    bank: list[McqExample] = []
    for task in sorted(by_task):
        take = alloc.get(task, 0)
        if take == 0:
            continue
        members = sorted(by_task[task], key=lambda e: e.id)
        bank.extend(rng.sample(members, take))
    bank.sort(key=lambda e: e.id)
    assert not {ex.id for ex in bank} & pool_ids, "bank overlaps the pool"
    return bank
