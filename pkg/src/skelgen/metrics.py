"""From-scratch BLEU-1..4 and ROUGE-L for generated-vs-gold questions.

Recipe, pinned so numbers are comparable within this repo only:
corpus-level BLEU with clipped modified n-gram precisions pooled over the
corpus, geometric mean, brevity penalty exp(min(0, 1 - r/c)), and no
smoothing (any zero precision zeroes the score). ROUGE-L is the LCS
F-measure with beta = 1.2, averaged per pair. The tokenizer below is part
of the recipe and is shared with nothing else.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SkelgenError

RECIPE = "corpus-bleu/no-smoothing/bp=exp(min(0,1-r/c)); rouge-l/beta=1.2/mean-F; tokenizer=lower+trailing-punct-split"

_ROUGE_BETA = 1.2

_CHUNK_RE = re.compile(r"^(.*?)([?!.,;:]*)$")


@dataclass(frozen=True)
class MetricReport:
    bleu: dict[int, float]
    rouge_l: float
    count: int
    failures: int = 0
    recipe: str = RECIPE

    def __post_init__(self) -> None:
        for n, score in self.bleu.items():
            if not 0.0 <= score <= 1.0:
                raise SkelgenError(f"BLEU-{n} out of [0,1]: {score}")
        if not 0.0 <= self.rouge_l <= 1.0:
            raise SkelgenError(f"ROUGE-L out of [0,1]: {self.rouge_l}")

    @property
    def coverage(self) -> float:
        total = self.count + self.failures
        return self.count / total if total else 0.0


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace, peeling trailing punctuation of
    each chunk into single-character tokens."""
    tokens: list[str] = []
    for chunk in text.lower().split():
        match = _CHUNK_RE.match(chunk)
        head, tail = match.group(1), match.group(2)
        if head:
            tokens.append(head)
        tokens.extend(tail)
    return tokens


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(cands: list[list[str]], refs: list[list[str]], max_n: int = 4) -> float:
    """Corpus-level BLEU over token sequences, in [0, 1]."""
    if not 1 <= max_n <= 4:
        raise SkelgenError(f"max_n must be in 1..4, got {max_n}")
    if len(cands) != len(refs) or not cands:
        raise SkelgenError("candidate and reference lists must be non-empty and equal length")
    matched = [0] * max_n
    possible = [0] * max_n
    ref_len = 0
    cand_len = 0
    for cand, ref in zip(cands, refs):
        ref_len += len(ref)
        cand_len += len(cand)
        for n in range(1, max_n + 1):
            cand_counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            matched[n - 1] += sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
            possible[n - 1] += max(0, len(cand) - n + 1)
    if cand_len == 0:
        return 0.0
    precisions = [m / p if p else 0.0 for m, p in zip(matched, possible)]
    if any(p == 0.0 for p in precisions):
        return 0.0
    geo_mean = math.exp(sum(math.log(p) for p in precisions) / max_n)
    brevity = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    return brevity * geo_mean


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            curr.append(prev[j - 1] + 1 if x == y else max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(cand: list[str], ref: list[str]) -> float:
    """Per-pair LCS F-measure; empty candidate scores 0."""
    if not ref:
        raise SkelgenError("reference tokens must be non-empty")
    if not cand:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    beta_sq = _ROUGE_BETA**2
    return (1 + beta_sq) * precision * recall / (recall + beta_sq * precision)


def rouge_l_corpus(cands: list[list[str]], refs: list[list[str]]) -> float:
    if len(cands) != len(refs) or not cands:
        raise SkelgenError("candidate and reference lists must be non-empty and equal length")
    return sum(rouge_l(c, r) for c, r in zip(cands, refs)) / len(cands)


def score_pairs(pairs: list[tuple[str, str]], max_n: int = 4, failures: int = 0) -> MetricReport:
    """Score (predicted, gold) text pairs."""
    if not pairs:
        raise SkelgenError("nothing to score")
    cands = [tokenize(predicted) for predicted, _ in pairs]
    refs = [tokenize(gold) for _, gold in pairs]
    scores = {n: bleu(cands, refs, n) for n in range(1, max_n + 1)}
    return MetricReport(bleu=scores, rouge_l=rouge_l_corpus(cands, refs), count=len(pairs), failures=failures)


def score_run(path: str | Path, max_n: int = 4) -> MetricReport:
    """Score a results file; records without a prediction count as failures."""
    pairs: list[tuple[str, str]] = []
    failures = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SkelgenError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if record.get("predicted_question") is None:
                failures += 1
                continue
            if record.get("gold_question") is None:
                raise SkelgenError(f"{path}:{lineno}: record {record.get('example_id')!r} has no gold_question")
            pairs.append((record["predicted_question"], record["gold_question"]))
    if not pairs:
        raise SkelgenError(f"{path}: no scorable records")
    return score_pairs(pairs, max_n=max_n, failures=failures)


def report_to_dict(report: MetricReport) -> dict:
    return {
        "bleu": {str(n): report.bleu[n] for n in sorted(report.bleu)},
        "rouge_l": report.rouge_l,
        "count": report.count,
        "failures": report.failures,
        "coverage": report.coverage,
        "recipe": report.recipe,
    }


def format_report(report: MetricReport) -> str:
    """Aligned plain-text table for terminal output."""
    rows = [(f"BLEU-{n}", report.bleu[n]) for n in sorted(report.bleu)]
    rows.append(("ROUGE-L", report.rouge_l))
    lines = [f"# {report.recipe}", f"{'metric':<10}{'score':>8}"]
    lines.extend(f"{name:<10}{score:>8.4f}" for name, score in rows)
    lines.append(f"{'pairs':<10}{report.count:>8d}")
    if report.failures:
        lines.append(f"{'failures':<10}{report.failures:>8d}")
        lines.append(f"{'coverage':<10}{report.coverage:>8.4f}")
    return "\n".join(lines)
