"""Automatic skeleton training-data construction.

For each training question: extract a rule-based candidate, generate an
LLM candidate, have the backend grade both in one call, and keep the
higher-scoring one (ties prefer the cheaper, deterministic rule
candidate). Examples with no usable candidate are dropped, never given
empty skeletons. A per-example report makes interrupted live-API builds
resumable.
"""

from __future__ import annotations

import json
import logging
import math
import random
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .corpus import CorpusSplit
from .errors import SkelgenError
from .gateway import EmptySkeletonError, LlmBackend, ScoreParseError, TransportError, generate_skeleton_llm, score_skeletons
from .model import LabeledExample
from .skeleton import NoSkeletonFoundError, SkeletonVocabulary, extract_skeleton_rule

logger = logging.getLogger(__name__)

REPORT_FIELDS = ("id", "rule_skeleton", "llm_skeleton", "score_rule", "score_llm", "winner", "status")

STATUS_OK = "ok"
STATUS_DROPPED_NO_CANDIDATES = "dropped:no-candidates"
STATUS_DROPPED_SCORER = "dropped:scorer-error"


@dataclass(frozen=True)
class BuildOutcome:
    """One report row; ``winner`` is empty for dropped examples."""

    id: str
    rule_skeleton: str | None
    llm_skeleton: str | None
    score_rule: float | None
    score_llm: float | None
    winner: str
    status: str

    @property
    def kept(self) -> bool:
        return self.status == STATUS_OK

    @property
    def skeleton(self) -> str | None:
        if self.winner == "rule":
            return self.rule_skeleton
        if self.winner == "llm":
            return self.llm_skeleton
        return None


def _outcome_line(outcome: BuildOutcome) -> str:
    return json.dumps(asdict(outcome), ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def load_report(path: str | Path) -> dict[str, BuildOutcome]:
    """Read prior outcomes keyed by example id; missing file means none."""
    path = Path(path)
    outcomes: dict[str, BuildOutcome] = {}
    if not path.exists():
        return outcomes
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                outcome = BuildOutcome(**{key: raw[key] for key in REPORT_FIELDS})
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SkelgenError(f"{path}:{lineno}: bad report line ({exc})") from exc
            outcomes[outcome.id] = outcome
    return outcomes


def _grade_example(example: LabeledExample, vocab: SkeletonVocabulary, backend: LlmBackend) -> BuildOutcome:
    rule = None
    try:
        rule = extract_skeleton_rule(example.question, vocab)
    except NoSkeletonFoundError:
        logger.info("no rule skeleton for %s; LLM candidate wins by default", example.id)
    llm = None
    try:
        llm = generate_skeleton_llm(example.question, backend)
    except (EmptySkeletonError, TransportError) as exc:
        logger.warning("no LLM skeleton for %s: %s", example.id, exc)

    base = {
        "id": example.id,
        "rule_skeleton": rule.skeleton if rule else None,
        "llm_skeleton": llm.skeleton if llm else None,
    }
    if rule is None and llm is None:
        return BuildOutcome(**base, score_rule=None, score_llm=None, winner="", status=STATUS_DROPPED_NO_CANDIDATES)
    if rule is None:
        return BuildOutcome(**base, score_rule=None, score_llm=None, winner="llm", status=STATUS_OK)
    if llm is None:
        return BuildOutcome(**base, score_rule=None, score_llm=None, winner="rule", status=STATUS_OK)
    try:
        score_rule, score_llm = score_skeletons(example.question, rule, llm, backend)
    except (ScoreParseError, TransportError) as exc:
        logger.warning("scorer failed for %s: %s", example.id, exc)
        return BuildOutcome(**base, score_rule=None, score_llm=None, winner="", status=STATUS_DROPPED_SCORER)
    # Tie prefers the rule candidate: cheaper, deterministic, and a
    # guaranteed substring-derived skeleton.
    winner = "rule" if score_rule >= score_llm else "llm"
    return BuildOutcome(**base, score_rule=score_rule, score_llm=score_llm, winner=winner, status=STATUS_OK)


def build_skeleton_dataset(
    corpus: CorpusSplit,
    vocab: SkeletonVocabulary,
    backend: LlmBackend,
    report_path: str | Path | None = None,
    jobs: int = 1,
    resume: bool = True,
) -> CorpusSplit:
    """Attach the best-scoring skeleton to every example it can.

    Output preserves corpus order and ids; dropped examples are listed in
    the report with their reason. With a report path, already-scored ids
    are skipped on rerun, so interrupted builds pick up where they left
    off. The report is appended in completion order; the returned split
    is always in corpus order.
    """
    prior: dict[str, BuildOutcome] = {}
    if report_path is not None and resume:
        prior = load_report(report_path)
        prior = {example_id: outcome for example_id, outcome in prior.items() if example_id in set(corpus.ids)}
        if prior:
            logger.info("resuming build: %d of %d examples already scored", len(prior), len(corpus))

    report_handle = None
    if report_path is not None:
        mode = "a" if prior else "w"
        report_handle = open(report_path, mode, encoding="utf-8", newline="\n")
    lock = threading.Lock()
    outcomes = dict(prior)

    def record(outcome: BuildOutcome) -> None:
        with lock:
            outcomes[outcome.id] = outcome
            if report_handle is not None:
                report_handle.write(_outcome_line(outcome) + "\n")
                report_handle.flush()

    pending = [example for example in corpus if example.id not in prior]
    try:
        if jobs <= 1:
            for example in pending:
                record(_grade_example(example, vocab, backend))
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_grade_example, example, vocab, backend) for example in pending]
                for future in as_completed(futures):
                    record(future.result())
    finally:
        if report_handle is not None:
            report_handle.close()

    kept = []
    for example in corpus:
        outcome = outcomes[example.id]
        if outcome.kept:
            kept.append(replace(example, skeleton=outcome.skeleton))
        else:
            logger.warning("dropped %s (%s)", example.id, outcome.status)
    return CorpusSplit(name=corpus.name, examples=tuple(kept))


def subsample_for_budget(corpus: CorpusSplit, fraction: float, seed: int) -> CorpusSplit:
    """Seeded uniform subsample of ceil(fraction * N) examples, in
    original corpus order."""
    if not 0 < fraction <= 1:
        raise SkelgenError(f"fraction must be in (0, 1], got {fraction}")
    total = len(corpus)
    # round() guards against float dust like 0.07 * 100 == 7.000000000000001
    count = math.ceil(round(fraction * total, 9))
    indices = sorted(random.Random(seed).sample(range(total), count))
    return CorpusSplit(name=corpus.name, examples=tuple(corpus.examples[i] for i in indices))
