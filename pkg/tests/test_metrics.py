import itertools
import math
import random

import pytest

from skelgen.errors import SkelgenError
from skelgen.metrics import (
    MetricReport,
    bleu,
    format_report,
    lcs_length,
    report_to_dict,
    rouge_l,
    rouge_l_corpus,
    score_pairs,
    tokenize,
)


def brute_force_lcs(a, b):
    """Enumerate every subsequence of the shorter side (len <= 8)."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    best = 0
    for size in range(len(short), 0, -1):
        for combo in itertools.combinations(short, size):
            it = iter(long_)
            if all(token in it for token in combo):
                return size
    return best


def random_tokens(rng, max_len=8, vocab="abcdef"):
    return [rng.choice(vocab) for _ in range(rng.randint(0, max_len))]


# --- tokenizer ---


def test_tokenize_separates_terminal_punctuation():
    assert tokenize("What is X?") == ["what", "is", "x", "?"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_idempotent_on_rejoined_output():
    rng = random.Random(7)
    alphabet = "ab ?.!,x9Z"
    for _ in range(200):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


# --- BLEU ---


def test_bleu_identity_is_one():
    assert bleu([["a", "b", "c"]], [["a", "b", "c"]], max_n=1) == pytest.approx(1.0, abs=1e-12)


def test_bleu_half_precision_hand_value():
    # p1 = 1/2, lengths equal so BP = 1.
    assert bleu([["a", "b"]], [["a", "c"]], max_n=1) == pytest.approx(0.5, abs=1e-9)


def test_bleu_brevity_penalty_hand_value():
    # p1 = 1, BP = exp(1 - 2/1) = e^-1.
    assert bleu([["a"]], [["a", "b"]], max_n=1) == pytest.approx(math.exp(-1), abs=1e-6)


def test_bleu_zero_precision_means_zero_no_smoothing():
    assert bleu([["a", "b", "c"]], [["a", "b", "c"]], max_n=4) == 0.0  # no 4-grams possible
    assert bleu([["x", "y"]], [["a", "b"]], max_n=1) == 0.0


def test_bleu_clipping_counts_repeats_once():
    # "a a" against reference holding one "a": clipped p1 = 1/2.
    assert bleu([["a", "a"]], [["a", "b"]], max_n=1) == pytest.approx(0.5, abs=1e-12)


def test_bleu_empty_candidate_scores_zero():
    assert bleu([[]], [["a"]], max_n=1) == 0.0


def test_bleu_length_mismatch_rejected():
    with pytest.raises(SkelgenError):
        bleu([["a"]], [["a"], ["b"]], max_n=1)
    with pytest.raises(SkelgenError):
        bleu([], [], max_n=1)


def test_bleu_max_n_validated():
    with pytest.raises(SkelgenError):
        bleu([["a"]], [["a"]], max_n=5)


def test_bleu_matches_pooled_precision_oracle():
    # Independent oracle: count clipped matches with dict arithmetic.
    rng = random.Random(21)
    cands = [random_tokens(rng, max_len=10) for _ in range(40)]
    refs = [random_tokens(rng, max_len=10) for _ in range(40)]

    def oracle(max_n):
        total_match, total_cand = [0] * max_n, [0] * max_n
        for cand, ref in zip(cands, refs):
            for n in range(1, max_n + 1):
                cgrams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
                rgrams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
                for gram in set(cgrams):
                    total_match[n - 1] += min(cgrams.count(gram), rgrams.count(gram))
                total_cand[n - 1] += len(cgrams)
        ps = [m / c if c else 0.0 for m, c in zip(total_match, total_cand)]
        if any(p == 0 for p in ps):
            return 0.0
        r = sum(len(x) for x in refs)
        c = sum(len(x) for x in cands)
        return math.exp(min(0.0, 1.0 - r / c)) * math.exp(sum(math.log(p) for p in ps) / max_n)

    for n in (1, 2):
        assert bleu(cands, refs, max_n=n) == pytest.approx(oracle(n), abs=1e-12)


def test_scores_permutation_invariant_over_pair_order():
    rng = random.Random(3)
    pairs = [(random_tokens(rng, 10), random_tokens(rng, 10) or ["a"]) for _ in range(30)]
    cands, refs = zip(*pairs)
    shuffled = pairs[:]
    rng.shuffle(shuffled)
    scands, srefs = zip(*shuffled)
    for n in (1, 2):
        assert bleu(list(cands), list(refs), n) == pytest.approx(bleu(list(scands), list(srefs), n), abs=1e-12)
    assert rouge_l_corpus(list(cands), list(refs)) == pytest.approx(
        rouge_l_corpus(list(scands), list(srefs)), abs=1e-12
    )


# --- ROUGE-L ---


def test_rouge_identity():
    tokens = ["what", "is", "x", "?"]
    assert rouge_l(tokens, tokens) == pytest.approx(1.0, abs=1e-12)


def test_rouge_hand_value_two_thirds():
    assert rouge_l(["a", "x", "c"], ["a", "b", "c"]) == pytest.approx(2 / 3, abs=1e-9)


def test_rouge_disjoint_is_zero():
    assert rouge_l(["a", "b"], ["x", "y"]) == 0.0


def test_rouge_empty_candidate_is_zero():
    assert rouge_l([], ["a"]) == 0.0


def test_rouge_empty_reference_rejected():
    with pytest.raises(SkelgenError):
        rouge_l(["a"], [])


def test_lcs_matches_brute_force_on_short_pairs():
    rng = random.Random(11)
    for _ in range(300):
        a, b = random_tokens(rng), random_tokens(rng)
        assert lcs_length(a, b) == brute_force_lcs(a, b), (a, b)


def test_rouge_beta_weighting_favors_recall():
    # P = 1, R = 1/2 vs P = 1/2, R = 1: beta > 1 rewards recall.
    precision_heavy = rouge_l(["a"], ["a", "b"])
    recall_heavy = rouge_l(["a", "b"], ["a"])
    assert recall_heavy > precision_heavy


def test_rouge_corpus_is_mean():
    score = rouge_l_corpus([["a"], ["a", "x", "c"]], [["a"], ["a", "b", "c"]])
    assert score == pytest.approx((1.0 + 2 / 3) / 2, abs=1e-12)


# --- reports ---


def test_score_pairs_all_correct_is_all_ones():
    pairs = [("what is x?", "what is x?"), ("who made y?", "who made y?")]
    report = score_pairs(pairs)
    assert all(report.bleu[n] == pytest.approx(1.0) for n in (1, 2, 3, 4))
    assert report.rouge_l == pytest.approx(1.0)
    assert report.count == 2


def test_bleu_monotone_non_increasing_over_random_pairs():
    rng = random.Random(42)
    vocab = [f"w{i}" for i in range(15)]
    pairs = []
    for _ in range(500):
        ref = [rng.choice(vocab) for _ in range(rng.randint(4, 12))]
        cand = [rng.choice(vocab) for _ in range(rng.randint(4, 12))]
        if rng.random() < 0.2:  # some near-copies so higher n-grams match too
            cand = list(ref)
            if rng.random() < 0.5:
                cand[rng.randrange(len(cand))] = rng.choice(vocab)
        pairs.append((" ".join(cand), " ".join(ref)))
    report = score_pairs(pairs)
    assert report.bleu[1] >= report.bleu[2] >= report.bleu[3] >= report.bleu[4]


def test_report_deterministic():
    pairs = [("what is x?", "what was x?"), ("who is y?", "who is y?")]
    assert score_pairs(pairs) == score_pairs(pairs)


def test_report_serialization_and_table():
    report = score_pairs([("what is x?", "what is x?")])
    data = report_to_dict(report)
    assert data["bleu"]["4"] == pytest.approx(1.0)
    assert data["coverage"] == 1.0
    table = format_report(report)
    assert "BLEU-1" in table and "ROUGE-L" in table


def test_report_rejects_out_of_range_scores():
    with pytest.raises(SkelgenError):
        MetricReport(bleu={1: 1.5}, rouge_l=0.5, count=1)
