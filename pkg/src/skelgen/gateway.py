"""Uniform client interface over chat-completion backends.

Ships the pinned prompt templates for skeleton generation and skeleton
scoring, the generation-parameter profile for question generation, a
fully deterministic mock backend for offline runs, and a retrying HTTP
adapter for OpenAI-compatible endpoints.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import SkelgenError
from .skeleton import SkeletonCandidate

logger = logging.getLogger(__name__)

API_KEY_ENV = "SKELGEN_API_KEY"

# Requests to one backend are throttled to respect API rate limits.
DEFAULT_CONCURRENCY = 4

_LABEL_RE = re.compile(r"(?:skeleton|score)\s*\d+\s*[:=]?", re.IGNORECASE)
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?|\.\d+")


class TransportError(SkelgenError):
    """Backend unreachable or misbehaving after the configured retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(f"{message} (attempts: {attempts})")
        self.attempts = attempts


class EmptySkeletonError(SkelgenError):
    """The backend returned a blank skeleton."""


class ScoreParseError(SkelgenError):
    """No pair of scores could be read from the grader response."""

    def __init__(self, raw_response: str):
        super().__init__(f"cannot parse two scores from response: {raw_response!r}")
        self.raw_response = raw_response


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    top_p: float = 1.0
    n: int = 10
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    max_tokens: int = 128

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise SkelgenError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise SkelgenError(f"top_p must be in (0,1], got {self.top_p}")
        if self.n < 1:
            raise SkelgenError(f"n must be >= 1, got {self.n}")
        if self.max_tokens < 1:
            raise SkelgenError(f"max_tokens must be >= 1, got {self.max_tokens}")


def default_generation_params() -> GenerationParams:
    """The pinned question-generation profile: temperature 0.7, top_p 1,
    n 10, zero frequency and presence penalties."""
    return GenerationParams()


@dataclass(frozen=True)
class CompletionBatch:
    texts: tuple[str, ...]
    backend_id: str


class LlmBackend(ABC):
    """A chat-completion backend; must be safe to call from many threads."""

    backend_id: str = "backend"

    @abstractmethod
    def complete(self, prompt: str, params: GenerationParams) -> CompletionBatch:
        """Return exactly ``params.n`` completions for ``prompt``."""


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return resources.files("skelgen").joinpath("templates", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _template_prefix(name: str) -> str:
    # Static text before the first placeholder; used to classify prompts.
    return _template(name).split("{", 1)[0]


def render_skeleton_prompt(question: str) -> str:
    return _template("skeleton_generate.txt").format(question=question)


def render_score_prompt(question: str, skeleton1: str, skeleton2: str) -> str:
    return _template("skeleton_score.txt").format(question=question, skeleton1=skeleton1, skeleton2=skeleton2)


def render_input_skeleton_prompt(triples_text: str, answer: str) -> str:
    return _template("skeleton_from_input.txt").format(triples=triples_text, answer=answer)


def default_prompt_head() -> str:
    return _template("prompt_head.txt")


_SKELETON_POOL = (
    "what is _ ?",
    "who is _ ?",
    "where is _ ?",
    "what does _ ?",
    "when did _ ?",
)


class MockBackend(LlmBackend):
    """Deterministic offline backend.

    Responses come from an optional fixture map keyed by prompt hash; any
    prompt without a fixture entry gets output synthesized from
    (prompt hash, seed), so whole-pipeline runs reproduce byte-for-byte
    without network access.
    """

    def __init__(self, fixtures: dict[str, list[str]] | None = None, seed: int = 0):
        self.fixtures = dict(fixtures or {})
        self.seed = seed
        self.backend_id = f"mock-{seed}"

    @classmethod
    def from_fixture_file(cls, path: str | Path, seed: int = 0) -> "MockBackend":
        """Load a JSON object mapping prompt-hash to a list of responses."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict) or not all(isinstance(v, list) for v in raw.values()):
            raise SkelgenError(f"{path}: mock fixtures must map prompt hashes to response lists")
        return cls(fixtures=raw, seed=seed)

    def complete(self, prompt: str, params: GenerationParams) -> CompletionBatch:
        key = prompt_hash(prompt)
        if key in self.fixtures:
            pool = self.fixtures[key]
            if not pool:
                raise TransportError(f"mock fixture for {key} is empty")
            texts = tuple(pool[i % len(pool)] for i in range(params.n))
        else:
            texts = tuple(self._synthesize(prompt, key, params.n))
        return CompletionBatch(texts=texts, backend_id=self.backend_id)

    def _rng(self, key: str) -> random.Random:
        digest = hashlib.blake2b(f"{self.seed}:{key}".encode("utf-8"), digest_size=8).digest()
        return random.Random(int.from_bytes(digest, "big"))

    def _synthesize(self, prompt: str, key: str, n: int) -> list[str]:
        rng = self._rng(key)
        if prompt.startswith(_template_prefix("skeleton_score.txt")):
            return [f"{rng.randint(0, 10) / 10} {rng.randint(0, 10) / 10}"] * n
        if prompt.startswith(_template_prefix("skeleton_generate.txt")) or prompt.startswith(
            _template_prefix("skeleton_from_input.txt")
        ):
            return [rng.choice(_SKELETON_POOL)] * n
        tag = key[:6]
        base = f"what is entity {tag} known for"
        variants = (
            base + "?",
            base[0].upper() + base[1:] + " ?",
            f"who created entity {tag}?",
            f"where does entity {tag} come from?",
        )
        picks = rng.choices(range(len(variants)), weights=(4, 2, 3, 1), k=n)
        return [variants[i] for i in picks]


class LiveBackend(LlmBackend):
    """OpenAI-compatible chat-completions adapter.

    Retries transient transport failures (connection errors, 429, 5xx)
    with exponential backoff, then surfaces :class:`TransportError`.
    Partial completion batches are an error, never silently returned.
    """

    _TRANSIENT_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        model: str,
        base_url: str,
        timeout: float = 30.0,
        api_key: str | None = None,
        max_retries: int = 3,
        backoff: float = 0.5,
        concurrency: int = DEFAULT_CONCURRENCY,
        session=None,
    ):
        key = api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise SkelgenError(f"no API key: pass api_key or set {API_KEY_ENV}")
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.backend_id = f"live-{model}"
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        self._semaphore = threading.Semaphore(concurrency)
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def complete(self, prompt: str, params: GenerationParams) -> CompletionBatch:
        import requests

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": params.n,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
            "max_tokens": params.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        last_error = "no attempt made"
        for attempt in range(1, self.max_retries + 1):
            try:
                with self._semaphore:
                    response = self._session.post(url, json=payload, headers=self._headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    return self._parse(response.json(), params.n)
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code not in self._TRANSIENT_STATUS:
                    raise TransportError(last_error, attempts=attempt)
            if attempt < self.max_retries:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning("retrying %s after %s (sleep %.1fs)", url, last_error, delay)
                time.sleep(delay)
        raise TransportError(last_error, attempts=self.max_retries)

    def _parse(self, body: dict, n: int) -> CompletionBatch:
        choices = body.get("choices", [])
        texts = tuple(choice.get("message", {}).get("content", "") for choice in choices)
        if len(texts) != n:
            raise TransportError(f"partial batch: requested {n} completions, got {len(texts)}")
        return CompletionBatch(texts=texts, backend_id=self.backend_id)


def generate_skeleton_llm(question: str, backend: LlmBackend) -> SkeletonCandidate:
    """Ask the backend for the question's skeleton, deterministically
    (n = 1, temperature 0; data construction wants reproducibility)."""
    if not question.strip():
        raise SkelgenError("question must be non-empty")
    prompt = render_skeleton_prompt(question)
    batch = backend.complete(prompt, GenerationParams(temperature=0.0, n=1))
    text = batch.texts[0].strip()
    if not text:
        raise EmptySkeletonError(f"backend {backend.backend_id} returned an empty skeleton for {question!r}")
    return SkeletonCandidate(skeleton=text, source="llm")


def _parse_two_scores(response: str) -> tuple[float, float]:
    # "Skeleton 1:" style labels carry digits of their own; strip them
    # before scanning, else the label indices win over the scores.
    cleaned = _LABEL_RE.sub(" ", response)
    literals = [float(match.group()) for match in _NUMBER_RE.finditer(cleaned)]
    in_range = [value for value in literals if 0.0 <= value <= 1.0]
    if len(in_range) >= 2:
        return in_range[0], in_range[1]
    if len(literals) >= 2:
        clamped = (min(1.0, max(0.0, literals[0])), min(1.0, max(0.0, literals[1])))
        logger.warning("scores out of [0,1] in %r; clamped to %s", response, clamped)
        return clamped
    raise ScoreParseError(response)


def score_skeletons(
    question: str,
    rule: SkeletonCandidate,
    llm: SkeletonCandidate,
    backend: LlmBackend,
) -> tuple[float, float]:
    """Grade both candidates in one call; Skeleton 1 is always the
    rule-based candidate, Skeleton 2 the LLM one."""
    prompt = render_score_prompt(question, skeleton1=rule.skeleton, skeleton2=llm.skeleton)
    batch = backend.complete(prompt, GenerationParams(temperature=0.0, n=1))
    return _parse_two_scores(batch.texts[0])
