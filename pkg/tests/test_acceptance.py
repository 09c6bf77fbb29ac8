"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Everything runs against the deterministic mock backends and the shipped
fixtures; no network. Run with ``pytest tests/test_acceptance.py -v -s`` to
see the per-criterion lines.
"""

import json
import random
import time
from pathlib import Path

import pytest

from masrvqa.backends import (
    HashingEmbedder,
    MockMultimodalBackend,
    MockScript,
    MockTextBackend,
)
from masrvqa.cli import main
from masrvqa.context_agent import vote_task_category
from masrvqa.datasets import (
    ModelResultMatrix,
    build_hard_set,
    load_dataset,
    load_matrix,
    matrix_summary,
)
from masrvqa.errors import UnparseableAnswerError
from masrvqa.metrics import bert_score, bleu, meteor, rouge_l
from masrvqa.orchestrator import PipelineDeps, run_batch
from masrvqa.reasoning_agent import parse_answer
from masrvqa.retrieval import build_index, query_top_n
from masrvqa.tracing import FrozenClock
from masrvqa.types import PipelineConfig, PipelineMode

from helpers import make_bank, make_example, make_member
from test_context_agent import brute_force_vote
from test_metrics import oracle_bleu, oracle_meteor
from test_reasoning_agent import CASCADE_CORPUS, GARBAGE_CORPUS
from test_retrieval import _DirectEmbedder, brute_force_top_n, index_from_vectors

FIXTURES = Path(__file__).parent / "fixtures"


def _report(name: str) -> None:
    print(f"[acceptance] {name}: PASS")


def _run_cli(out_dir, config, mode=None, dataset=None):
    argv = [
        "run",
        "--dataset", str(dataset or FIXTURES / "dataset_synth_50.jsonl"),
        "--config", str(config),
        "--out", str(out_dir),
    ]
    if mode:
        argv.extend(["--mode", mode])
    started = time.perf_counter()
    code = main(argv)
    elapsed = time.perf_counter() - started
    assert code == 0, f"run exited {code}"
    return elapsed


def _read_run(out_dir):
    out_dir = Path(out_dir)
    results = (out_dir / "results.jsonl").read_bytes()
    report = (out_dir / "report.json").read_bytes()
    traces = {
        p.name: p.read_bytes() for p in sorted((out_dir / "traces").iterdir())
    }
    return results, report, traces


def test_criterion_1_end_to_end_determinism(tmp_path, capsys):
    elapsed_a = _run_cli(tmp_path / "a", FIXTURES / "run_mock.cfg", mode="full")
    elapsed_b = _run_cli(tmp_path / "b", FIXTURES / "run_mock.cfg", mode="full")
    run_a, run_b = _read_run(tmp_path / "a"), _read_run(tmp_path / "b")
    assert run_a[0] == run_b[0], "results.jsonl differs between identical runs"
    assert run_a[1] == run_b[1], "report.json differs between identical runs"
    assert run_a[2] == run_b[2], "trace files differ between identical runs"
    assert elapsed_a < 10.0 and elapsed_b < 10.0, "run exceeded the 10 s budget"
    with capsys.disabled():
        _report("1 end-to-end determinism (byte-identical, "
                f"{elapsed_a:.2f}s/{elapsed_b:.2f}s)")


def test_criterion_2_gating_law(capsys):
    confidences = [0.0, 0.5, 0.69, 0.7, 0.71, 1.0]
    should_revise = {0.0, 0.5, 0.69, 0.7}
    bank = make_bank(4)
    embedder = HashingEmbedder(dim=16, seed=3)
    script = MockScript()
    script.add_pattern("rerank", ".", "50")
    for i, conf in enumerate(confidences):
        marker = f"Synthetic case {i:03d}:"
        script.add_pattern("reason", marker, "ANSWER: A\nEXPLANATION: initial")
        script.add_pattern("validate", f"Assess how likely.*{marker}", str(conf))
        script.add_pattern(
            "validate",
            f"Reconsider the target question.*{marker}",
            "ANSWER: B\nEXPLANATION: revised",
        )
    deps = PipelineDeps(
        reasoning_mllm=MockMultimodalBackend(script, "reason"),
        embedder=embedder,
        context_llm=MockTextBackend(script, "rerank"),
        validation_llm=MockTextBackend(script, "validate"),
        index=build_index(bank, embedder),
        bank_by_id={e.id: e for e in bank},
        clock=FrozenClock(),
        backoff_base=0.0,
    )
    cfg = PipelineConfig(
        n_retrieve=3, k_rerank=2, confidence_threshold=0.7, mode=PipelineMode.FULL,
        max_in_flight=2, retry_limit=1,
    )
    dataset = [make_example(i) for i in range(len(confidences))]
    results, _ = run_batch(dataset, deps, cfg)
    for conf, result in zip(confidences, results):
        stages = [s.stage_name for s in result.trace.stages]
        revised = "validation.revise" in stages
        expected = conf in should_revise
        assert revised == expected, f"confidence {conf}: revise={revised}, expected {expected}"
        assert result.final.confidence == pytest.approx(conf)
    with capsys.disabled():
        _report("2 gating law (strict > at threshold 0.7)")


def test_criterion_3_ablation_ordering(tmp_path, capsys):
    expected_correct = {"mra_only": 22, "cua_mra": 27, "full": 38}
    observed = {}
    for mode in ("mra_only", "cua_mra", "full"):
        out = tmp_path / mode
        _run_cli(out, FIXTURES / "run_mock.cfg", mode=mode)
        lines = [
            json.loads(l)
            for l in (out / "results.jsonl").read_text().splitlines()
        ]
        observed[mode] = sum(1 for l in lines if l["correct"])
    assert observed == expected_correct, f"exact counts mismatch: {observed}"
    assert observed["mra_only"] < observed["cua_mra"] < observed["full"]
    with capsys.disabled():
        _report(
            "3 ablation ordering (correct "
            f"{observed['mra_only']} < {observed['cua_mra']} < {observed['full']} of 50)"
        )


def test_criterion_4_voting_oracle(capsys):
    rng = random.Random(20240)
    mismatches = 0
    for _ in range(1000):
        k = rng.randint(1, 7)
        members = [
            make_member(
                make_example(
                    i,
                    task=f"task-{rng.randint(0, 3)}",
                    category=f"cat-{rng.randint(0, 3)}",
                ),
                rank=i + 1,
            )
            for i in range(k)
        ]
        if vote_task_category(members) != brute_force_vote(members):
            mismatches += 1
    assert mismatches == 0
    with capsys.disabled():
        _report("4 voting oracle (1000 instances, 0 mismatches)")


def test_criterion_5_retrieval_exactness(capsys):
    rng = random.Random(555)
    dim = 16
    vectors = []
    for i in range(1000):
        if i > 0 and rng.random() < 0.05:
            vectors.append(list(rng.choice(vectors)))  # exact ties
        else:
            vectors.append([rng.gauss(0, 1) for _ in range(dim)])
    index = index_from_vectors(vectors)
    mismatches = 0
    for _ in range(100):
        qvec = [rng.gauss(0, 1) for _ in range(dim)]
        got = query_top_n(index, "q", 10, _DirectEmbedder({"q": qvec}))
        expected = brute_force_top_n(index, qvec, 10)
        if [h.example_id for h in got] != expected:
            mismatches += 1
        assert all(-1.0 <= h.similarity <= 1.0 + 1e-9 for h in got)
        assert [h.rank for h in got] == list(range(1, 11))
    assert mismatches == 0
    with capsys.disabled():
        _report("5 retrieval exactness (1000 vectors x 100 queries, 0 mismatches)")


def test_criterion_6_metric_correctness(capsys):
    assert rouge_l("a b c d".split(), "a c d e".split()) == 0.75

    for n in (4, 5, 9):
        x = [f"tok{i}" for i in range(n)]
        assert bleu(x, x) == 1.0
        assert rouge_l(x, x) == 1.0
        assert meteor(x, x) == pytest.approx(1 - 0.5 / n**3, abs=1e-12)
        emb = HashingEmbedder(dim=8, seed=1)
        assert bert_score(x, x, emb) == pytest.approx(1.0, abs=1e-12)

    cand, ref = "the cat sat".split(), "the cat sat down".split()
    assert bleu(cand, ref) == pytest.approx(oracle_bleu(cand, ref), abs=1e-9)
    assert bleu(cand, ref) == pytest.approx(0.7165313105737893, abs=1e-9)
    m_cand, m_ref = ["dogs", "running"], ["dog", "runs"]
    assert meteor(m_cand, m_ref) == pytest.approx(oracle_meteor(m_cand, m_ref), abs=1e-9)
    assert meteor(m_cand, m_ref) == pytest.approx(0.9375, abs=1e-9)

    rng = random.Random(99)
    emb = HashingEmbedder(dim=8, seed=9)
    vocab = ["dog", "dogs", "ran", "running", "film", "clear", "left", "apex"]
    for _ in range(10000):
        a = [rng.choice(vocab) for _ in range(rng.randint(0, 6))]
        b = [rng.choice(vocab) for _ in range(rng.randint(0, 6))]
        for metric in (bleu, rouge_l, meteor):
            value = metric(a, b)
            assert 0.0 <= value <= 1.0
        if a and b:
            assert 0.0 <= bert_score(a, b, emb) <= 1.0 + 1e-12
    with capsys.disabled():
        _report("6 metric correctness (goldens to 1e-9; 10000-pair range check)")


def test_criterion_7_hard_set_procedure(capsys):
    rng = random.Random(777)
    pool = [make_example(i) for i in range(200)]
    models = tuple(f"m{j}" for j in range(5))
    cells = {
        (ex.id, model): rng.random() > 0.45 for ex in pool for model in models
    }
    matrix = ModelResultMatrix(models, cells)
    got = [e.id for e in build_hard_set(pool, matrix, min_wrong=3)]
    expected = [
        e.id
        for e in pool
        if sum(1 for m in models if not cells[(e.id, m)]) >= 3
    ]
    assert got == expected
    summary = matrix_summary(pool, matrix)
    for model in models:
        column_mean = sum(cells[(e.id, model)] for e in pool) / len(pool)
        assert abs(summary.per_model_accuracy[model] - column_mean) <= 1e-12

    fixture_pool = load_dataset(FIXTURES / "pool_200.jsonl")
    fixture_matrix = load_matrix(FIXTURES / "matrix_200.json")
    hard = build_hard_set(fixture_pool, fixture_matrix, min_wrong=3)
    assert 0 < len(hard) < len(fixture_pool)
    with capsys.disabled():
        _report(
            f"7 hard-set procedure (random 200x5 matches brute force; "
            f"fixture keeps {len(hard)}/200)"
        )


def test_criterion_8_robustness_under_faults(tmp_path, capsys):
    _run_cli(tmp_path / "a", FIXTURES / "run_mock_fault.cfg")
    _run_cli(tmp_path / "b", FIXTURES / "run_mock_fault.cfg")
    run_a, run_b = _read_run(tmp_path / "a"), _read_run(tmp_path / "b")
    assert run_a == run_b, "fault-injected rerun is not byte-identical"

    lines = [
        json.loads(l)
        for l in (tmp_path / "a" / "results.jsonl").read_text().splitlines()
    ]
    assert len(lines) == 50, "run did not complete all examples"
    unanswered = [l for l in lines if l["answer"] is None]
    assert unanswered, "fault fixture must produce at least one unanswered item"
    assert all(l["correct"] is False for l in unanswered)

    flagged = 0
    for name, raw in run_a[2].items():
        trace = json.loads(raw)
        for stage in trace["stages"]:
            assert 1 <= stage["attempts"] <= 3, f"{name}: attempts beyond retry ceiling"
        errored = [s for s in trace["stages"] if s["error"] is not None]
        if errored:
            assert trace["flags"], f"{name}: errored stages but no degradation flags"
            flagged += 1
    assert flagged >= 1
    with capsys.disabled():
        _report(
            f"8 robustness (50/50 completed, {len(unanswered)} unanswered, "
            f"{flagged} examples degraded+flagged, rerun byte-identical)"
        )


def test_criterion_9_parse_cascade(capsys):
    assert len(CASCADE_CORPUS) + len(GARBAGE_CORPUS) == 30
    for raw, letter, explanation in CASCADE_CORPUS:
        got_letter, got_explanation = parse_answer(raw)
        assert got_letter.value == letter, raw
        assert got_explanation == explanation, raw
    for raw in GARBAGE_CORPUS:
        with pytest.raises(UnparseableAnswerError):
            parse_answer(raw)
    with capsys.disabled():
        _report(
            f"9 parse cascade ({len(CASCADE_CORPUS)} parsed, "
            f"{len(GARBAGE_CORPUS)} rejected)"
        )
