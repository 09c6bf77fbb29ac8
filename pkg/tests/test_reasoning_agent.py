"""Reasoning agent: prompt assembly, answer-extraction cascade, retries."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from masrvqa.backends import (
    GenParams,
    MockMultimodalBackend,
    MockScript,
    RetryPolicy,
    text_of_parts,
)
from masrvqa.errors import ReasoningFailedError, UnparseableAnswerError
from masrvqa.prompts import load_default_library
from masrvqa.reasoning_agent import (
    build_reasoning_prompt,
    parse_answer,
    run_reasoning_agent,
)
from masrvqa.tracing import CallRecorder, FrozenClock
from masrvqa.types import (
    AnswerLetter,
    ContextBundle,
    ImageRef,
    PipelineConfig,
    PipelineMode,
)

from helpers import make_example, make_member

TEMPLATES = load_default_library()


def _bundle(k=2):
    members = tuple(
        make_member(
            make_example(10 + i, question=f"Reference vignette {i:03d}: finding?",
                         task="presence assessment", category="pulmonary"),
            rank=i + 1,
            rerank_score=0.9 - i * 0.1,
        )
        for i in range(k)
    )
    return ContextBundle(
        predicted_task="presence assessment",
        predicted_category="pulmonary",
        top_k=members,
    )


def _recorder(retry_limit=1):
    return CallRecorder(clock=FrozenClock(), policy=RetryPolicy(retry_limit, base_delay=0.0))


def _cfg(**kw):
    defaults = dict(mode=PipelineMode.MRA_ONLY, retry_limit=1)
    defaults.update(kw)
    return PipelineConfig(**defaults)


class TestBuildPrompt:
    def test_no_context_without_bundle(self):
        parts = build_reasoning_prompt(make_example(0), None, TEMPLATES)
        text = text_of_parts(parts)
        assert "Predicted task" not in text
        assert "Reference example" not in text
        assert "Synthetic case 000" in text

    def test_bundle_adds_task_line_and_k_blocks(self):
        parts = build_reasoning_prompt(make_example(0), _bundle(k=2), TEMPLATES)
        text = text_of_parts(parts)
        assert "Predicted task: presence assessment" in text
        blocks = [p for p in parts if p.kind == "text" and p.text.startswith("Reference example")]
        assert len(blocks) == 2
        assert blocks[0].text.startswith("Reference example 1:")
        assert blocks[1].text.startswith("Reference example 2:")

    def test_images_are_last_parts_in_input_order(self):
        images = (ImageRef("a.png"), ImageRef("b.png"))
        parts = build_reasoning_prompt(make_example(0, images=images), None, TEMPLATES)
        assert [p.kind for p in parts[-2:]] == ["image", "image"]
        assert parts[-2].image.locator == "a.png"
        assert parts[-1].image.locator == "b.png"

    def test_deterministic(self):
        mcq = make_example(3, images=(ImageRef("x.png"),))
        assert build_reasoning_prompt(mcq, _bundle(), TEMPLATES) == build_reasoning_prompt(
            mcq, _bundle(), TEMPLATES
        )

    def test_explanations_omitted_when_configured_off(self):
        parts = build_reasoning_prompt(
            make_example(0), _bundle(), TEMPLATES, include_explanations=False
        )
        assert "Explanation:" not in text_of_parts(parts)

    def test_instruction_names_output_contract(self):
        parts = build_reasoning_prompt(make_example(0), None, TEMPLATES)
        assert "ANSWER: <letter>" in parts[0].text


# The documented cascade over a 30-string corpus: canonical, parenthesized,
# verbose, and garbage forms.
CASCADE_CORPUS = [
    # canonical tag forms
    ("ANSWER: B\nEXPLANATION: Cardiomegaly with edema.", "B", "Cardiomegaly with edema."),
    ("ANSWER: A\nEXPLANATION: Lucent apex.", "A", "Lucent apex."),
    ("answer: c\nexplanation: subtle blunting", "C", "subtle blunting"),
    ("ANSWER: (D)\nEXPLANATION: Device noted.", "D", "Device noted."),
    ("Preamble text.\nANSWER: B\nEXPLANATION: trailing", "B", "trailing"),
    ("ANSWER: A", "A", ""),
    ("ANSWER:B\nEXPLANATION:tight spacing", "B", "tight spacing"),
    # tag present for answer, none for explanation
    ("My ANSWER: C. The lungs are clear.", "C", "My . The lungs are clear."),
    # parenthesized fallback
    ("(B) is the best choice here.", "B", "is the best choice here."),
    ("The findings support (c) overall.", "C", "The findings support overall."),
    # letter-dot fallback
    ("B. Pleural effusion is present.", "B", "Pleural effusion is present."),
    ("D. because the diaphragm is elevated", "D", "because the diaphragm is elevated"),
    # option-N fallback
    ("I would pick option A given the history.", "A", "I would pick given the history."),
    ("Option d matches the distribution.", "D", "matches the distribution."),
    # verbose answer-is fallback
    (
        "The answer is (C) because the costophrenic angle is blunted.",
        "C",
        "The because the costophrenic angle is blunted.",
    ),
    ("The answer is B.", "B", "The"),
    ("I think the answer is d, honestly.", "D", "I think the , honestly."),
    # earliest match wins across patterns
    ("(A) though option B was tempting.", "A", "though option B was tempting."),
    ("Definitely option C. Not (B).", "C", "Definitely . Not (B)."),
    # tag beats later fallbacks
    ("Some (A) noise\nANSWER: D\nEXPLANATION: tag wins", "D", "tag wins"),
    # explanation tag without answer tag
    ("The answer is A\nEXPLANATION: separate rationale", "A", "separate rationale"),
    # multi-line explanations keep everything after the first tag
    (
        "ANSWER: B\nEXPLANATION: first line\nsecond line",
        "B",
        "first line\nsecond line",
    ),
]

GARBAGE_CORPUS = [
    "No abnormality seen.",
    "",
    "   \n  ",
    "The image quality is too poor to decide.",
    "Both E and F look plausible.",  # letters outside A-D
    "ANSWER: E\nEXPLANATION: out of range",
    "I cannot answer this question.",
    "42",
]

assert len(CASCADE_CORPUS) + len(GARBAGE_CORPUS) == 30


class TestParseCascade:
    @pytest.mark.parametrize("raw,letter,explanation", CASCADE_CORPUS)
    def test_parses_per_cascade(self, raw, letter, explanation):
        got_letter, got_explanation = parse_answer(raw)
        assert got_letter is AnswerLetter(letter)
        assert got_explanation == explanation

    @pytest.mark.parametrize("raw", GARBAGE_CORPUS)
    def test_garbage_raises(self, raw):
        with pytest.raises(UnparseableAnswerError):
            parse_answer(raw)

    @given(
        st.sampled_from(list(AnswerLetter)),
        st.text(
            alphabet=st.characters(blacklist_characters="\n\r", min_codepoint=32),
            max_size=60,
        ).map(str.strip),
    )
    def test_totality_over_canonical_format(self, letter, explanation):
        raw = f"ANSWER: {letter.value}\nEXPLANATION: {explanation}"
        got_letter, got_explanation = parse_answer(raw)
        assert got_letter is letter
        assert got_explanation == explanation


class TestRunReasoningAgent:
    def _backend(self, replies, marker="Synthetic case"):
        script = MockScript().add_pattern("reason", marker, replies)
        return MockMultimodalBackend(script, "reason"), script

    def test_canonical_reply(self):
        backend, _ = self._backend("ANSWER: B\nEXPLANATION: effusion visible")
        pred = run_reasoning_agent(
            make_example(0), None, backend, _cfg(), _recorder(), TEMPLATES
        )
        assert pred.answer is AnswerLetter.B
        assert pred.explanation == "effusion visible"
        assert pred.revised is False
        assert pred.confidence is None

    def test_retry_after_unparseable_first_reply(self):
        backend, script = self._backend(["mumble", "ANSWER: C\nEXPLANATION: ok"])
        log = _recorder(retry_limit=1)
        pred = run_reasoning_agent(
            make_example(0), None, backend, _cfg(), log, TEMPLATES
        )
        assert pred.answer is AnswerLetter.C
        assert len(log.records) == 2
        assert script.call_count("reason") == 2
        # the re-ask carries the stricter format reminder
        assert "could not be parsed" in log.records[1].prompt_rendered

    def test_all_unparseable_raises(self):
        backend, _ = self._backend("mumble")
        with pytest.raises(ReasoningFailedError):
            run_reasoning_agent(
                make_example(0), None, backend, _cfg(retry_limit=2), _recorder(2), TEMPLATES
            )

    def test_mode_fidelity_prompt_has_no_retrieved_content(self):
        backend, _ = self._backend("ANSWER: A\nEXPLANATION: x")
        log = _recorder()
        run_reasoning_agent(make_example(0), None, backend, _cfg(), log, TEMPLATES)
        rendered = log.records[0].prompt_rendered
        assert "Reference example" not in rendered
        assert "Predicted task" not in rendered
