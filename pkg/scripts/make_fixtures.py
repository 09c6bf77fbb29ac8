#!/usr/bin/env python3
"""Regenerate the committed test fixtures under tests/fixtures/.

The 50-example synthetic set encodes a three-tier scenario: the reasoning
agent alone answers 22/50 correctly, injected context flips 5 more, and the
validator's revision fixes 11 of the remaining errors (one revision stays
wrong), giving 22 -> 27 -> 38 across the three modes.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"

CONDITIONS = [
    "atelectasis",
    "pleural effusion",
    "pneumothorax",
    "cardiomegaly",
    "consolidation",
    "pulmonary edema",
    "rib fracture",
    "hiatal hernia",
]
TASKS = [
    "presence assessment",
    "differential diagnosis",
    "abnormality localization",
    "severity grading",
    "temporal comparison",
]
CATEGORIES = ["pulmonary", "cardiac", "pleural", "mediastinal", "osseous"]
LETTERS = ["A", "B", "C", "D"]

# 1x1 transparent PNG
PNG_BYTES = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108060000001f15c489"
    "0000000a49444154789c63000100000500010d0a2db40000000049454e44ae426082"
)


def options_for(i: int) -> dict[str, str]:
    picks = [CONDITIONS[(i + j) % len(CONDITIONS)] for j in range(4)]
    return dict(zip(LETTERS, picks))


def synth_example(i: int, with_image: bool) -> dict:
    options = options_for(i)
    gold = LETTERS[i % 4]
    record = {
        "id": f"case-{i:03d}",
        "question": f"Synthetic case {i:03d}: which condition best explains the findings?",
        "options": options,
        "answer": gold,
        "explanation": (
            f"The film shows classic features of {options[gold]}, including the "
            f"expected distribution and density changes."
        ),
        "task": TASKS[i % len(TASKS)],
        "category": CATEGORIES[i % len(CATEGORIES)],
        "images": [{"path": "img/sample_chest.png", "kind": "png"}] if with_image else [],
    }
    return record


def bank_example(i: int) -> dict:
    options = options_for(i + 3)
    gold = LETTERS[(i + 1) % 4]
    return {
        "id": f"vign-{i:03d}",
        "question": f"Reference vignette {i:03d}: what does the film most likely show?",
        "options": options,
        "answer": gold,
        "explanation": f"Typical appearance of {options[gold]} on frontal projection.",
        "task": TASKS[i % len(TASKS)],
        "category": CATEGORIES[(i + 2) % len(CATEGORIES)],
        "images": [],
    }


def small_example(i: int) -> dict:
    rec = synth_example(i, with_image=(i == 0))
    rec["id"] = f"small-{i:03d}"
    rec["question"] = f"Sample item {i:03d}: which condition best explains the findings?"
    return rec


def write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def wrong_letter(gold: str, offset: int = 1) -> str:
    return LETTERS[(LETTERS.index(gold) + offset) % 4]


def reasoning_reply(letter: str, options: dict[str, str], correct: bool) -> str:
    condition = options[letter]
    if correct:
        text = (
            f"The film shows classic features of {condition} with the expected "
            f"distribution and density changes."
        )
    else:
        text = f"The appearance is most consistent with {condition}."
    return f"ANSWER: {letter}\nEXPLANATION: {text}"


def make_mock_script() -> dict:
    """Scripted replies implementing the 22 -> 27 -> 38 scenario."""
    rules = []
    for i in range(50):
        case = f"Synthetic case {i:03d}:"
        options = options_for(i)
        gold = LETTERS[i % 4]
        plain_correct = i < 22
        ctx_correct = i < 27
        low_confidence = 27 <= i <= 38
        revision_correct = 27 <= i <= 37

        ctx_letter = gold if ctx_correct else wrong_letter(gold)
        plain_letter = gold if plain_correct else wrong_letter(gold)
        rules.append(
            {
                "role": "reason",
                "pattern": f"Predicted task:.*{case}",
                "reply": reasoning_reply(ctx_letter, options, ctx_letter == gold),
            }
        )
        rules.append(
            {
                "role": "reason",
                "pattern": case,
                "reply": reasoning_reply(plain_letter, options, plain_letter == gold),
            }
        )
        rules.append(
            {
                "role": "validate",
                "pattern": f"Assess how likely.*{case}",
                "reply": "0.3" if low_confidence else "0.9",
            }
        )
        if low_confidence:
            rev_letter = gold if revision_correct else wrong_letter(gold, 2)
            rules.append(
                {
                    "role": "validate",
                    "pattern": f"Reconsider the target question.*{case}",
                    "reply": reasoning_reply(rev_letter, options, rev_letter == gold),
                }
            )
    rules.append({"role": "rerank", "pattern": ".", "reply": "50"})
    return {"rules": rules}


def make_matrix(n_rows: int, seed: int) -> tuple[list[dict], dict]:
    """Pool + result matrix with per-model accuracies mirroring a wide spread."""
    accuracies = [0.7077, 0.6530, 0.3187, 0.4240, 0.6827]
    models = [f"model-{i + 1:02d}" for i in range(len(accuracies))]
    pool = []
    for i in range(n_rows):
        rec = synth_example(i, with_image=False)
        rec["id"] = f"pool-{i:03d}"
        rec["question"] = f"Pool item {i:03d}: which condition best explains the findings?"
        pool.append(rec)
    rng = random.Random(seed)
    results: dict[str, dict[str, bool]] = {rec["id"]: {} for rec in pool}
    for model, acc in zip(models, accuracies):
        n_wrong = round(n_rows * (1.0 - acc))
        wrong_rows = set(rng.sample(range(n_rows), n_wrong))
        for i, rec in enumerate(pool):
            results[rec["id"]][model] = i not in wrong_rows
    return pool, {"models": models, "results": results}


RUN_CFG = """\
# Deterministic mock run over the synthetic fixtures.
backend = mock
mock_script = mock_script_50.json
embed_dim = 32
embed_seed = 42
bank = bank_20.jsonl
n_retrieve = 6
k_rerank = 3
confidence_threshold = 0.7
mode = full
max_in_flight = 4
retry_limit = 1
seed = 42
clock = fixed
backoff_base = 0.0
"""

FAULT_CFG_TEMPLATE = """\
# Same run with deterministic fault injection on the generation roles.
backend = mock
mock_script = mock_script_50.json
embed_dim = 32
embed_seed = 42
fault_rate = 0.2
fault_seed = {fault_seed}
fault_roles = rerank,reason,validate
bank = bank_20.jsonl
n_retrieve = 6
k_rerank = 3
confidence_threshold = 0.7
mode = full
max_in_flight = 4
retry_limit = 2
seed = 42
clock = fixed
backoff_base = 0.0
"""


def pick_fault_seed() -> int:
    """Choose a fault seed whose run produces at least one unanswered item
    and several degraded examples, so the robustness checks are non-vacuous."""
    sys.path.insert(0, str(ROOT / "src"))
    from masrvqa.datasets import load_dataset
    from masrvqa.orchestrator import run_batch
    from masrvqa.runconfig import load_run_setup

    dataset = load_dataset(FIXTURES / "dataset_synth_50.jsonl")
    for seed in range(1, 60):
        cfg_path = FIXTURES / "_probe_fault.cfg"
        cfg_path.write_text(FAULT_CFG_TEMPLATE.format(fault_seed=seed), encoding="utf-8")
        setup = load_run_setup(cfg_path)
        results, _ = run_batch(dataset, setup.deps, setup.cfg)
        unanswered = sum(1 for r in results if r.final is None)
        flagged = sum(1 for r in results if r.trace.flags)
        cfg_path.unlink()
        if unanswered >= 1 and flagged >= 3:
            print(f"fault_seed={seed}: unanswered={unanswered} flagged={flagged}")
            return seed
    raise SystemExit("no suitable fault seed found")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "img").mkdir(exist_ok=True)
    (FIXTURES / "img" / "sample_chest.png").write_bytes(PNG_BYTES)

    write_jsonl(FIXTURES / "dataset_small.jsonl", [small_example(i) for i in range(12)])
    write_jsonl(FIXTURES / "bank_20.jsonl", [bank_example(i) for i in range(20)])
    write_jsonl(
        FIXTURES / "dataset_synth_50.jsonl",
        [synth_example(i, with_image=i < 2) for i in range(50)],
    )
    (FIXTURES / "mock_script_50.json").write_text(
        json.dumps(make_mock_script(), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    pool, matrix = make_matrix(200, seed=13)
    write_jsonl(FIXTURES / "pool_200.jsonl", pool)
    (FIXTURES / "matrix_200.json").write_text(
        json.dumps(matrix, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
    (FIXTURES / "run_mock.cfg").write_text(RUN_CFG, encoding="utf-8")

    fault_seed = pick_fault_seed()
    (FIXTURES / "run_mock_fault.cfg").write_text(
        FAULT_CFG_TEMPLATE.format(fault_seed=fault_seed), encoding="utf-8"
    )
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
