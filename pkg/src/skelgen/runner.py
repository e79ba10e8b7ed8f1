"""End-to-end question generation.

For each test input: predict a skeleton, retrieve in-context examples,
assemble the prompt, sample the backend n times, and majority-vote the
final question. Every intermediate artifact is persisted per example;
LLM pipelines are undebuggable without provenance.
"""

from __future__ import annotations

import json
import logging
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

from .builder import subsample_for_budget
from .config import RunConfig
from .corpus import CorpusSplit
from .errors import SkelgenError
from .gateway import (
    EmptySkeletonError,
    GenerationParams,
    LlmBackend,
    default_prompt_head,
    prompt_hash,
    render_input_skeleton_prompt,
)
from .metrics import MetricReport, score_run
from .model import LabeledExample, TripleSubgraph, linearize_subgraph, linearize_triples
from .prompting import build_prompt
from .retrieval import EmbeddingProvider, EmbeddingStore, select_examples, strategy_from_name, top_k

logger = logging.getLogger(__name__)


class PipelineStageError(SkelgenError):
    """Failure in one pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class SkeletonProvider(ABC):
    """Predicts the skeleton of the question a test input asks for."""

    @abstractmethod
    def predict(self, graph: TripleSubgraph, answer: str) -> str: ...


class NearestNeighborSkeletonProvider(SkeletonProvider):
    """Top-1 input-embedding neighbor's skeleton from the training set.

    A deterministic, dependency-free stand-in for a trained generator;
    plug a real model in via :class:`RemoteSkeletonProvider`.
    """

    def __init__(self, store: EmbeddingStore, corpus: CorpusSplit, provider: EmbeddingProvider):
        if store.strategy_kind != "input_emb":
            raise SkelgenError("nearest-neighbor skeleton prediction needs an input_emb store")
        if store.provider_id != provider.provider_id:
            raise SkelgenError(f"store embedded by {store.provider_id!r}, provider is {provider.provider_id!r}")
        self.store = store
        self.corpus = corpus
        self.provider = provider

    def predict(self, graph: TripleSubgraph, answer: str) -> str:
        query = self.provider.embed(linearize_subgraph(graph, answer))
        (neighbor_id,) = top_k(query, self.store.records, 1)
        skeleton = self.corpus.by_id(neighbor_id).skeleton
        if skeleton is None:
            raise SkelgenError(f"nearest neighbor {neighbor_id!r} has no skeleton")
        return skeleton


class LlmSkeletonProvider(SkeletonProvider):
    """Asks a chat backend to predict the skeleton from the raw input."""

    def __init__(self, backend: LlmBackend):
        self.backend = backend

    def predict(self, graph: TripleSubgraph, answer: str) -> str:
        prompt = render_input_skeleton_prompt(linearize_triples(graph), answer)
        batch = self.backend.complete(prompt, GenerationParams(temperature=0.0, n=1))
        skeleton = batch.texts[0].strip()
        if not skeleton:
            raise EmptySkeletonError("backend returned an empty skeleton")
        return skeleton


class RemoteSkeletonProvider(SkeletonProvider):
    """POSTs the linearized input to a trained skeleton-generator server."""

    def __init__(self, url: str, timeout: float = 30.0, session=None):
        self.url = url
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def predict(self, graph: TripleSubgraph, answer: str) -> str:
        response = self._session.post(
            self.url,
            json={"triples": linearize_triples(graph), "answer": answer},
            timeout=self.timeout,
        )
        if response.status_code != 200:
            raise SkelgenError(f"skeleton server failed: HTTP {response.status_code}")
        skeleton = str(response.json().get("skeleton", "")).strip()
        if not skeleton:
            raise EmptySkeletonError("skeleton server returned an empty skeleton")
        return skeleton


@dataclass(frozen=True)
class RunnerProviders:
    backend: LlmBackend
    embedder: EmbeddingProvider | None = None
    skeleton_provider: SkeletonProvider | None = None


@dataclass(frozen=True)
class QuestionResult:
    example_id: str
    predicted_question: str
    skeleton_used: str | None
    votes: dict[str, int]
    raw_samples: tuple[str, ...]
    selected_example_ids: tuple[str, ...]
    prompt_hash: str
    prompt_text: str = ""
    gold_question: str | None = None

    def __post_init__(self) -> None:
        if sum(self.votes.values()) != len(self.raw_samples):
            raise SkelgenError(f"{self.example_id}: vote counts must sum to the sample count")


def normalize_question(text: str) -> str:
    """Voting key: lowercase, collapse whitespace, drop trailing '?'/'.'."""
    normalized = " ".join(text.lower().split())
    while normalized and normalized[-1] in "?.":
        normalized = normalized[:-1].rstrip()
    return normalized


def majority_vote(samples: list[str]) -> str:
    """Most frequent sample under normalization; the returned surface form
    is the first-seen raw sample of the winning group. Ties go to the
    group seen earliest."""
    if not samples:
        raise SkelgenError("majority vote needs at least one sample")
    groups: dict[str, list] = {}
    for index, sample in enumerate(samples):
        key = normalize_question(sample)
        if key not in groups:
            groups[key] = [0, index, sample]
        groups[key][0] += 1
    _, _, winner = max(groups.values(), key=lambda g: (g[0], -g[1]))
    return winner


def vote_counts(samples: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for sample in samples:
        key = normalize_question(sample)
        counts[key] = counts.get(key, 0) + 1
    return counts


def _stage(stage: str, fn):
    try:
        return fn()
    except SkelgenError as exc:
        raise PipelineStageError(stage, exc) from exc


def generate_question(
    test: LabeledExample,
    corpus: CorpusSplit,
    store: EmbeddingStore | None,
    providers: RunnerProviders,
    config: RunConfig,
    head: str | None = None,
) -> QuestionResult:
    """Run the full pipeline for one test input."""
    strategy = strategy_from_name(config.strategy, seed=config.seed)
    needs_skeleton = config.mode == "skeleton" or strategy.kind == "input_skeleton_emb"
    skeleton = None
    if needs_skeleton:
        if providers.skeleton_provider is None:
            raise PipelineStageError("skeleton", SkelgenError("no skeleton provider configured"))
        skeleton = _stage("skeleton", lambda: providers.skeleton_provider.predict(test.graph, test.answer))
    query_example = replace(test, skeleton=skeleton) if skeleton else test

    selected = _stage(
        "select",
        lambda: select_examples(query_example, store, corpus, strategy, config.k, provider=providers.embedder),
    )
    # Selection is most-similar first; closest_last puts the strongest
    # example adjacent to the test block.
    ordered = list(reversed(selected)) if config.example_order == "closest_last" else list(selected)

    bundle = _stage(
        "prompt",
        lambda: build_prompt(
            head or default_prompt_head(),
            ordered,
            (test.graph, test.answer, skeleton),
            mode=config.mode,
            max_chars=config.max_prompt_chars,
        ),
    )
    params = GenerationParams(
        temperature=config.temperature,
        top_p=config.top_p,
        n=config.n,
        frequency_penalty=config.frequency_penalty,
        presence_penalty=config.presence_penalty,
        max_tokens=config.max_tokens,
    )
    batch = _stage("complete", lambda: providers.backend.complete(bundle.full_text, params))
    if len(batch.texts) != config.n:
        raise PipelineStageError(
            "complete", SkelgenError(f"partial batch: requested {config.n}, got {len(batch.texts)}")
        )
    samples = list(batch.texts)
    predicted = _stage("vote", lambda: majority_vote(samples))
    return QuestionResult(
        example_id=test.id,
        predicted_question=predicted,
        skeleton_used=skeleton,
        votes=vote_counts(samples),
        raw_samples=tuple(samples),
        selected_example_ids=bundle.example_ids,
        prompt_hash=prompt_hash(bundle.full_text),
        prompt_text=bundle.full_text,
        gold_question=test.question,
    )


def _result_record(result: QuestionResult) -> dict:
    return {
        "example_id": result.example_id,
        "skeleton": result.skeleton_used,
        "selected_example_ids": list(result.selected_example_ids),
        "prompt_hash": result.prompt_hash,
        "prompt": result.prompt_text,
        "raw_samples": list(result.raw_samples),
        "predicted_question": result.predicted_question,
        "gold_question": result.gold_question,
        "votes": result.votes,
    }


def _dump_line(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _load_results_file(path: Path) -> dict[str, dict]:
    records: dict[str, dict] = {}
    if not path.exists():
        return records
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                record = json.loads(line)
                records[record["example_id"]] = record
    return records


def run_batch(
    test_split: CorpusSplit,
    corpus: CorpusSplit,
    store: EmbeddingStore | None,
    providers: RunnerProviders,
    config: RunConfig,
    out_path: str | Path,
    sample_size: int | None = None,
    resume: bool = True,
    head: str | None = None,
) -> tuple[list[dict], MetricReport]:
    """Generate over a test split, persisting one record per example.

    Records are appended as they complete (crash-resumable) and the file
    is rewritten in input order at the end, so completed runs are
    byte-identical for fixed seeds and a deterministic backend. On
    resume, successful records are skipped and failed ones retried.
    """
    if sample_size is not None:
        if sample_size < 1 or sample_size > len(test_split):
            raise SkelgenError(f"sample size {sample_size} out of range for split of {len(test_split)}")
        test_split = subsample_for_budget(test_split, sample_size / len(test_split), config.seed)
    if len(test_split) == 0:
        raise SkelgenError("empty batch: nothing to generate")

    out_path = Path(out_path)
    prior = _load_results_file(out_path) if resume else {}
    split_ids = set(test_split.ids)
    done = {
        example_id: record
        for example_id, record in prior.items()
        if example_id in split_ids and record.get("predicted_question") is not None
    }
    if done:
        logger.info("resuming batch: %d of %d examples already done", len(done), len(test_split))

    records = dict(done)
    lock = threading.Lock()
    handle = open(out_path, "a" if done else "w", encoding="utf-8", newline="\n")

    def work(example: LabeledExample) -> dict:
        try:
            return _result_record(generate_question(example, corpus, store, providers, config, head=head))
        except SkelgenError as exc:
            logger.warning("generation failed for %s: %s", example.id, exc)
            return {"example_id": example.id, "error": str(exc), "gold_question": example.question}

    def record_result(record: dict) -> None:
        with lock:
            records[record["example_id"]] = record
            handle.write(_dump_line(record) + "\n")
            handle.flush()

    pending = [example for example in test_split if example.id not in done]
    try:
        if config.jobs <= 1:
            for example in pending:
                record_result(work(example))
        else:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                futures = [pool.submit(work, example) for example in pending]
                for future in as_completed(futures):
                    record_result(future.result())
    finally:
        handle.close()

    ordered = [records[example.id] for example in test_split]
    with open(out_path, "w", encoding="utf-8", newline="\n") as final:
        for record in ordered:
            final.write(_dump_line(record) + "\n")
    report = score_run(out_path)
    return ordered, report
