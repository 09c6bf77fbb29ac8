"""Context agent: pointwise rerank, weighted voting, composition."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masrvqa.backends import HashingEmbedder, MockScript, MockTextBackend, RetryPolicy
from masrvqa.context_agent import (
    _parse_score,
    rerank,
    run_context_agent,
    vote_task_category,
)
from masrvqa.prompts import load_default_library
from masrvqa.retrieval import build_index
from masrvqa.tracing import CallRecorder, FrozenClock
from masrvqa.types import PipelineConfig, PipelineMode

from helpers import make_bank, make_example, make_member

TEMPLATES = load_default_library()


def _recorder(retry_limit=1):
    return CallRecorder(clock=FrozenClock(), policy=RetryPolicy(retry_limit, base_delay=0.0))


def _cfg(**kw):
    defaults = dict(n_retrieve=3, k_rerank=2, mode=PipelineMode.CUA_MRA, max_in_flight=1,
                    retry_limit=1)
    defaults.update(kw)
    return PipelineConfig(**defaults)


class TestParseScore:
    def test_plain_integer(self):
        assert _parse_score("85") == 85

    def test_last_line_wins(self):
        assert _parse_score("thinking about 10...\nfinal: 70") == 70

    def test_out_of_range_rejected(self):
        assert _parse_score("150") is None
        assert _parse_score("-5") is None

    def test_no_number(self):
        assert _parse_score("very relevant") is None
        assert _parse_score("") is None


# A target whose question text never collides with candidate questions.
TARGET = make_example(999)


def _members(n):
    # similarity descending so input order is retrieval order
    return [
        make_member(
            make_example(i, question=f"Reference vignette {i:03d}: finding?"),
            rank=i + 1,
            similarity=1.0 - i * 0.1,
        )
        for i in range(n)
    ]


def _script_scores(by_marker):
    """Rerank replies keyed by a substring unique to each candidate block."""
    script = MockScript()
    for marker, reply in by_marker.items():
        script.add_pattern("rerank", marker, reply)
    return MockTextBackend(script, "rerank")


class TestRerank:
    def test_scores_reorder_candidates(self):
        members = _members(3)
        llm = _script_scores(
            {"vignette 000": "20", "vignette 001": "90", "vignette 002": "55"}
        )
        out = rerank(TARGET, members, llm, _cfg(), _recorder(), TEMPLATES)
        assert [m.example.id for m in out] == ["ex-001", "ex-002", "ex-000"]
        assert [m.candidate.rank for m in out] == [1, 2, 3]
        assert [m.candidate.rerank_score for m in out] == [0.9, 0.55, 0.2]

    def test_total_tie_keeps_input_order(self):
        members = _members(4)
        llm = _script_scores({".": "50"})
        out = rerank(TARGET, members, llm, _cfg(), _recorder(), TEMPLATES)
        assert [m.example.id for m in out] == [m.example.id for m in members]

    def test_unparseable_candidate_keeps_position(self):
        members = _members(3)
        llm = _script_scores(
            {"vignette 000": "20", "vignette 001": "nonsense", "vignette 002": "90"}
        )
        log = _recorder(retry_limit=1)
        out = rerank(TARGET, members, llm, _cfg(), log, TEMPLATES)
        # ex-001 pinned at position 2; ex-002 (0.9) and ex-000 (0.2) fill 1 and 3
        assert [m.example.id for m in out] == ["ex-002", "ex-001", "ex-000"]
        assert out[1].candidate.rerank_score is None
        assert "rerank_score_missing:ex-001" in log.flags

    def test_reask_consumes_retry_budget_then_succeeds(self):
        members = _members(1)
        script = MockScript().add_pattern("rerank", ".", ["unclear", "75"])
        llm = MockTextBackend(script, "rerank")
        log = _recorder(retry_limit=1)
        out = rerank(TARGET, members, llm, _cfg(), log, TEMPLATES)
        assert out[0].candidate.rerank_score == 0.75
        assert len(log.records) == 2  # original ask + one re-ask

    def test_records_appended_in_candidate_order_even_when_parallel(self):
        members = _members(5)
        llm = _script_scores({f"vignette {i:03d}": str(10 * i) for i in range(5)})
        log = _recorder()
        rerank(TARGET, members, llm, _cfg(max_in_flight=4), log, TEMPLATES)
        stages = [r.stage_name for r in log.records]
        assert stages == [f"context.rerank[ex-{i:03d}]" for i in range(5)]

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError):
            rerank(make_example(0), [], None, _cfg(), _recorder(), TEMPLATES)


def brute_force_vote(top_k):
    """Independent score-table computation with the same tie rule."""
    k = len(top_k)
    out = []
    for getter in (lambda m: m.example.task_name, lambda m: m.example.category):
        table = {}
        for member in top_k:
            label = getter(member)
            weight = k - member.candidate.rank + 1
            score, best = table.get(label, (0, 10**9))
            table[label] = (score + weight, min(best, member.candidate.rank))
        ranked = sorted(
            table.items(), key=lambda item: (-item[1][0], item[1][1], item[0])
        )
        out.append(ranked[0][0])
    return tuple(out)


class TestVote:
    def test_unanimous(self):
        members = [
            make_member(make_example(i, task="presence assessment", category="c"), rank=i + 1)
            for i in range(5)
        ]
        assert vote_task_category(members)[0] == "presence assessment"

    def test_rank_weighted_majority(self):
        # tasks in rank order [X, X, Y, Y, Y]: X scores 5+4=9, Y scores 3+2+1=6
        tasks = ["X", "X", "Y", "Y", "Y"]
        members = [
            make_member(make_example(i, task=t, category="c"), rank=i + 1)
            for i, t in enumerate(tasks)
        ]
        assert vote_task_category(members)[0] == "X"

    def test_two_members_higher_rank_dominates(self):
        members = [
            make_member(make_example(0, task="X", category="c"), rank=1),
            make_member(make_example(1, task="Y", category="c"), rank=2),
        ]
        assert vote_task_category(members)[0] == "X"

    def test_score_tie_broken_by_best_rank(self):
        # [X, Y, Y]: X = 3, Y = 2 + 1 = 3; X holds the best rank
        tasks = ["X", "Y", "Y"]
        members = [
            make_member(make_example(i, task=t, category="c"), rank=i + 1)
            for i, t in enumerate(tasks)
        ]
        assert vote_task_category(members)[0] == "X"

    def test_task_and_category_voted_independently(self):
        members = [
            make_member(make_example(0, task="X", category="q"), rank=1),
            make_member(make_example(1, task="X", category="r"), rank=2),
            make_member(make_example(2, task="Y", category="r"), rank=3),
        ]
        task, category = vote_task_category(members)
        assert (task, category) == ("X", "q")  # q wins category on best-rank tie

    def test_winner_always_among_labels(self):
        rng = random.Random(1)
        for _ in range(200):
            k = rng.randint(1, 7)
            members = [
                make_member(
                    make_example(i, task=f"t{rng.randint(0, 3)}", category=f"c{rng.randint(0, 3)}"),
                    rank=i + 1,
                )
                for i in range(k)
            ]
            task, category = vote_task_category(members)
            assert task in {m.example.task_name for m in members}
            assert category in {m.example.category for m in members}

    @settings(max_examples=150)
    @given(st.integers(min_value=0, max_value=2**31))
    def test_matches_brute_force_oracle(self, seed):
        rng = random.Random(seed)
        k = rng.randint(1, 7)
        members = [
            make_member(
                make_example(
                    i,
                    task=f"task{rng.randint(0, 2)}",
                    category=f"cat{rng.randint(0, 2)}",
                ),
                rank=i + 1,
            )
            for i in range(k)
        ]
        assert vote_task_category(members) == brute_force_vote(members)

    def test_weight_monotonicity_under_rank_swap(self):
        # moving a member to a worse rank never increases its label's score
        rng = random.Random(2)
        for _ in range(100):
            k = rng.randint(2, 6)
            labels = [f"t{rng.randint(0, 2)}" for _ in range(k)]

            def score_table(order):
                table = {}
                for rank, label in enumerate(order, start=1):
                    table[label] = table.get(label, 0) + (k - rank + 1)
                return table

            i, j = sorted(rng.sample(range(k), 2))
            before = score_table(labels)
            swapped = labels.copy()
            swapped[i], swapped[j] = swapped[j], swapped[i]
            after = score_table(swapped)
            # the label that moved up (to rank i+1) cannot lose score
            if labels[j] != labels[i]:
                assert after[labels[j]] >= before[labels[j]]
                assert after[labels[i]] <= before[labels[i]]


class TestRunContextAgent:
    def _setup(self, bank_size=3):
        bank = make_bank(bank_size)
        emb = HashingEmbedder(dim=32, seed=6)
        index = build_index(bank, emb)
        return bank, emb, index

    def test_composition_produces_k_members(self):
        bank, emb, index = self._setup()
        llm = _script_scores({".": "50"})
        log = _recorder()
        bundle = run_context_agent(
            make_example(0), index, {e.id: e for e in bank}, emb, llm,
            _cfg(n_retrieve=3, k_rerank=2), log, TEMPLATES,
        )
        assert len(bundle.top_k) == 2
        assert [m.candidate.rank for m in bundle.top_k] == [1, 2]
        assert log.records[0].stage_name == "context.embed"

    def test_total_rerank_failure_degrades_to_similarity_order(self):
        bank, emb, index = self._setup()
        llm = _script_scores({".": "gibberish"})
        log = _recorder()
        bundle = run_context_agent(
            make_example(0), index, {e.id: e for e in bank}, emb, llm,
            _cfg(n_retrieve=3, k_rerank=2), log, TEMPLATES,
        )
        assert "rerank_degraded" in log.flags
        sims = [m.candidate.similarity for m in bundle.top_k]
        assert sims == sorted(sims, reverse=True)
        assert all(m.candidate.rerank_score is None for m in bundle.top_k)

    def test_end_to_end_matches_hand_composition(self):
        bank, emb, index = self._setup()
        from masrvqa.retrieval import embedded_text, query_top_n

        hits = query_top_n(index, embedded_text(make_example(0)), 3, emb)
        # bank questions carry "Reference vignette {i:03d}" with i = id - 100
        scores = {"ex-100": 10, "ex-101": 95, "ex-102": 40}
        llm = _script_scores(
            {f"vignette {i:03d}": str(scores[f"ex-{100 + i}"]) for i in range(3)}
        )
        bundle = run_context_agent(
            make_example(0), index, {e.id: e for e in bank}, emb, llm,
            _cfg(n_retrieve=3, k_rerank=2), _recorder(), TEMPLATES,
        )
        # hand-compose: order retrieved ids by scripted score desc, take 2
        expected = sorted((h.example_id for h in hits), key=lambda i: -scores[i])[:2]
        assert [m.example.id for m in bundle.top_k] == expected
        expected_task, expected_cat = brute_force_vote(bundle.top_k)
        assert (bundle.predicted_task, bundle.predicted_category) == (
            expected_task,
            expected_cat,
        )

    def test_disabled_in_mra_only(self):
        bank, emb, index = self._setup()
        with pytest.raises(ValueError):
            run_context_agent(
                make_example(0), index, {}, emb, None,
                _cfg(mode=PipelineMode.MRA_ONLY), _recorder(), TEMPLATES,
            )
