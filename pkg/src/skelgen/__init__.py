"""Skeleton-guided question generation pipeline toolkit.

Builds skeleton training data from question corpora, retrieves
skeleton-aware in-context examples, assembles skeleton-injected prompts,
drives a chat-completion backend with majority voting, and scores the
generated questions with BLEU and ROUGE-L. Every external model sits
behind a mockable interface, so the whole pipeline runs offline.
"""

from .builder import build_skeleton_dataset, subsample_for_budget
from .corpus import CorpusSplit, load_corpus, save_skeleton_dataset
from .errors import ConfigError, SkelgenError
from .gateway import (
    GenerationParams,
    LiveBackend,
    LlmBackend,
    MockBackend,
    default_generation_params,
    generate_skeleton_llm,
    score_skeletons,
)
from .metrics import MetricReport, bleu, rouge_l, score_run, tokenize
from .model import LabeledExample, Triple, TripleSubgraph, linearize_subgraph
from .prompting import PromptBundle, build_prompt, inject_skeleton, render_example
from .retrieval import (
    EmbeddingRecord,
    EmbeddingStore,
    HashingProvider,
    SelectionStrategy,
    build_store,
    cosine_similarity,
    select_examples,
    top_k,
)
from .runner import (
    NearestNeighborSkeletonProvider,
    QuestionResult,
    RunnerProviders,
    generate_question,
    majority_vote,
    normalize_question,
    run_batch,
)
from .skeleton import SkeletonCandidate, SkeletonVocabulary, default_vocabulary, extract_skeleton_rule

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CorpusSplit",
    "EmbeddingRecord",
    "EmbeddingStore",
    "GenerationParams",
    "HashingProvider",
    "LabeledExample",
    "LiveBackend",
    "LlmBackend",
    "MetricReport",
    "MockBackend",
    "NearestNeighborSkeletonProvider",
    "PromptBundle",
    "QuestionResult",
    "RunnerProviders",
    "SelectionStrategy",
    "SkelgenError",
    "SkeletonCandidate",
    "SkeletonVocabulary",
    "Triple",
    "TripleSubgraph",
    "bleu",
    "build_prompt",
    "build_skeleton_dataset",
    "build_store",
    "cosine_similarity",
    "default_generation_params",
    "default_vocabulary",
    "extract_skeleton_rule",
    "generate_question",
    "generate_skeleton_llm",
    "inject_skeleton",
    "linearize_subgraph",
    "load_corpus",
    "majority_vote",
    "normalize_question",
    "render_example",
    "rouge_l",
    "run_batch",
    "save_skeleton_dataset",
    "score_run",
    "score_skeletons",
    "select_examples",
    "subsample_for_budget",
    "tokenize",
    "top_k",
]
