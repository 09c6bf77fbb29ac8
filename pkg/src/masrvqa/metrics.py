"""Answer accuracy and explanation-quality metrics, implemented natively.

Variant choices (recorded in every report header so numbers are comparable
only within this artifact):

* bleu       sentence-level BLEU-4; modified n-gram precisions n=1..4 with
             add-one smoothing whenever the matched count is zero; brevity
             penalty exp(1 - r/c) when the candidate is shorter.
* rouge_l    LCS-based F1 (beta = 1), symmetric in its arguments.
* meteor     two-stage greedy alignment (exact surface, then stem match),
             F = 10PR / (R + 9P), fragmentation penalty
             0.5 * (chunks / matches)^3.
* bert_score greedy max-cosine F1 over backend-provided token embeddings,
             cosines clipped to [0, 1], no IDF weighting.

Tokenization everywhere: lowercase, split on Unicode whitespace, drop
punctuation-only tokens.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

import numpy as np

from ._porter import stem

if TYPE_CHECKING:  # pragma: no cover - import cycle guard
    from .orchestrator import RunResult
    from .types import McqExample

METRIC_VARIANTS = {
    "accuracy": "correct / total; unanswered items count as incorrect",
    "bleu": "sentence BLEU-4, add-one smoothing on zero counts, BP exp(1-r/c) for c<r",
    "rouge_l": "LCS F1 (beta=1)",
    "meteor": "exact+stem greedy alignment, F=10PR/(R+9P), penalty 0.5*(chunks/matches)^3",
    "bert_score": "greedy max-cosine F1 over token embeddings, cosine clipped to [0,1], no IDF",
    "tokenizer": "lowercase, split on unicode whitespace, drop punctuation-only tokens",
}


def tokenize(text: str) -> list[str]:
    tokens = []
    for tok in text.lower().split():
        if tok and all(unicodedata.category(ch).startswith("P") for ch in tok):
            continue
        tokens.append(tok)
    return tokens


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence-level smoothed BLEU-4 over token lists."""
    c, r = len(candidate), len(reference)
    if c == 0 or r == 0:
        return 0.0
    log_precisions = 0.0
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        possible = max(c - n + 1, 0)
        matched = sum(min(count, ref_counts[g]) for g, count in cand_counts.items())
        if matched == 0:
            precision = (matched + 1) / (possible + 1)
        else:
            precision = matched / possible
        log_precisions += math.log(precision)
    geo_mean = math.exp(log_precisions / 4.0)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * geo_mean


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0]
        for j, tok_b in enumerate(b, start=1):
            if tok_a == tok_b:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """F1 over longest-common-subsequence precision and recall."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2.0 * precision * recall / (precision + recall)


def _align(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy left-to-right 1:1 alignment: exact matches first, then stems."""
    aligned_cand: dict[int, int] = {}
    used_ref: set[int] = set()
    for i, tok in enumerate(candidate):
        for j, ref_tok in enumerate(reference):
            if j not in used_ref and ref_tok == tok:
                aligned_cand[i] = j
                used_ref.add(j)
                break
    cand_stems = [stem(t) for t in candidate]
    ref_stems = [stem(t) for t in reference]
    for i in range(len(candidate)):
        if i in aligned_cand:
            continue
        for j in range(len(reference)):
            if j not in used_ref and ref_stems[j] == cand_stems[i]:
                aligned_cand[i] = j
                used_ref.add(j)
                break
    return sorted(aligned_cand.items())


def _chunk_count(alignment: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev: Optional[tuple[int, int]] = None
    for ci, ri in alignment:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Recall-weighted harmonic mean with a cubed fragmentation penalty."""
    if not candidate or not reference:
        return 0.0
    alignment = _align(candidate, reference)
    matches = len(alignment)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (_chunk_count(alignment) / matches) ** 3
    return f_mean * (1.0 - penalty)


def bert_score(
    candidate: Sequence[str], reference: Sequence[str], embedder
) -> float:
    """Greedy-matching F1 over per-token embedding cosines."""
    if not candidate or not reference:
        return 0.0
    cand_vecs = np.asarray(embedder.embed(list(candidate)), dtype=np.float64)
    ref_vecs = np.asarray(embedder.embed(list(reference)), dtype=np.float64)
    cand_norms = np.linalg.norm(cand_vecs, axis=1)
    ref_norms = np.linalg.norm(ref_vecs, axis=1)
    cand_norms[cand_norms == 0.0] = 1.0  # zero vectors contribute zero similarity
    ref_norms[ref_norms == 0.0] = 1.0
    cosines = (cand_vecs / cand_norms[:, None]) @ (ref_vecs / ref_norms[:, None]).T
    cosines = np.maximum(cosines, 0.0)
    precision = float(cosines.max(axis=1).mean())
    recall = float(cosines.max(axis=0).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def accuracy(results: Sequence["RunResult"]) -> float:
    """Fraction answered correctly; unanswered items stay in the denominator."""
    if not results:
        raise ValueError("results must be non-empty")
    return sum(1 for r in results if r.correct) / len(results)


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level metric means plus bookkeeping counts.

    Explanation means are unweighted over scored items; items whose gold
    explanation is empty are counted in n_items but excluded from the means
    (n_explained tracks how many items were scored). bert_score is None when
    no embedder was supplied.
    """

    accuracy: float
    bleu: float
    rouge_l: float
    meteor: float
    bert_score: Optional[float]
    n_items: int
    n_unanswered: int
    n_revised: int
    n_explained: int

    def to_record(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "bleu": self.bleu,
            "rouge_l": self.rouge_l,
            "meteor": self.meteor,
            "bert_score": self.bert_score,
            "n_items": self.n_items,
            "n_unanswered": self.n_unanswered,
            "n_revised": self.n_revised,
            "n_explained": self.n_explained,
            "variants": dict(METRIC_VARIANTS),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2, sort_keys=True) + "\n"


def build_report(
    results: Sequence["RunResult"],
    examples_by_id: Mapping[str, "McqExample"],
    embedder=None,
) -> EvalReport:
    """Aggregate per-item scores into an EvalReport."""
    bleu_scores: list[float] = []
    rouge_scores: list[float] = []
    meteor_scores: list[float] = []
    bert_scores: list[float] = []
    n_unanswered = 0
    n_revised = 0
    for result in results:
        if result.final is None:
            n_unanswered += 1
        elif result.final.revised:
            n_revised += 1
        gold_example = examples_by_id.get(result.example_id)
        if gold_example is None:
            from .errors import ValidationError

            raise ValidationError(
                f"result {result.example_id!r} has no matching dataset example"
            )
        gold = gold_example.gold_explanation
        if not gold.strip():
            continue
        candidate = tokenize(result.final.explanation if result.final else "")
        reference = tokenize(gold)
        bleu_scores.append(bleu(candidate, reference))
        rouge_scores.append(rouge_l(candidate, reference))
        meteor_scores.append(meteor(candidate, reference))
        if embedder is not None:
            bert_scores.append(bert_score(candidate, reference, embedder))

    def mean(values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    return EvalReport(
        accuracy=accuracy(results),
        bleu=mean(bleu_scores),
        rouge_l=mean(rouge_scores),
        meteor=mean(meteor_scores),
        bert_score=mean(bert_scores) if embedder is not None else None,
        n_items=len(results),
        n_unanswered=n_unanswered,
        n_revised=n_revised,
        n_explained=len(bleu_scores),
    )


def render_report_table(report: EvalReport) -> str:
    """Aligned plain-text table with one column per reported metric."""
    headers = ["Accuracy", "BLEU", "ROUGE-L", "METEOR", "BERTScore"]
    values = [
        f"{report.accuracy:.4f}",
        f"{report.bleu:.4f}",
        f"{report.rouge_l:.4f}",
        f"{report.meteor:.4f}",
        "-" if report.bert_score is None else f"{report.bert_score:.4f}",
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    lines = [f"# {name}: {desc}" for name, desc in sorted(METRIC_VARIANTS.items())]
    lines.append(
        f"# items={report.n_items} unanswered={report.n_unanswered} "
        f"revised={report.n_revised} explained={report.n_explained}"
    )
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    lines.append("  ".join(v.ljust(w) for v, w in zip(values, widths)))
    return "\n".join(lines) + "\n"
