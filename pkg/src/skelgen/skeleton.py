"""Rule-based skeleton extraction.

A skeleton is the question word phrase plus the auxiliary verb that
immediately follows it, with the remaining content collapsed to the
placeholder ``"_ ?"``. Extraction is a vocabulary scan over lowercased
whitespace tokens, no tagging or parsing: nested clauses are the known
weak spot of this method and are left to the LLM candidate path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import SkelgenError

PLACEHOLDER = "_ ?"

_TERMINAL_PUNCT = "?.!"

_DEFAULT_QUESTION_WORDS = (
    "how many",
    "how much",
    "how long",
    "how old",
    "what",
    "which",
    "where",
    "when",
    "who",
    "whom",
    "whose",
    "why",
    "how",
)

_DEFAULT_AUXILIARIES = (
    "is",
    "are",
    "was",
    "were",
    "do",
    "does",
    "did",
    "has",
    "have",
    "had",
    "can",
    "could",
    "will",
    "would",
    "should",
)


class NoSkeletonFoundError(SkelgenError):
    """No vocabulary question word occurs anywhere in the question."""


class VocabularyError(SkelgenError):
    """Vocabulary violates its invariants or its override file is malformed."""


@dataclass(frozen=True)
class SkeletonVocabulary:
    """Question-word phrases (longest first) and auxiliary verbs."""

    question_words: tuple[str, ...]
    auxiliaries: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "question_words", tuple(self.question_words))
        object.__setattr__(self, "auxiliaries", tuple(self.auxiliaries))
        if not self.question_words or not self.auxiliaries:
            raise VocabularyError("vocabulary lists must be non-empty")
        for label, entries in (("question_words", self.question_words), ("auxiliaries", self.auxiliaries)):
            if len(set(entries)) != len(entries):
                raise VocabularyError(f"duplicate entries in {label}")
        lengths = [len(phrase.split()) for phrase in self.question_words]
        if lengths != sorted(lengths, reverse=True):
            raise VocabularyError("question_words must be sorted by descending token count")


@dataclass(frozen=True)
class SkeletonCandidate:
    """A proposed skeleton with its provenance and, once graded, a score."""

    skeleton: str
    source: str  # "rule" | "llm"
    score: float | None = None

    def __post_init__(self) -> None:
        if self.source not in ("rule", "llm"):
            raise SkelgenError(f"candidate source must be 'rule' or 'llm', got {self.source!r}")
        if not self.skeleton.strip():
            raise SkelgenError("candidate skeleton must be non-empty")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise SkelgenError(f"candidate score must be in [0,1], got {self.score}")


_DEFAULT_VOCABULARY = SkeletonVocabulary(_DEFAULT_QUESTION_WORDS, _DEFAULT_AUXILIARIES)


def default_vocabulary() -> SkeletonVocabulary:
    """The pinned built-in vocabulary; identical object on every call."""
    return _DEFAULT_VOCABULARY


def _question_tokens(question: str) -> list[str]:
    text = question.strip()
    while text and text[-1] in _TERMINAL_PUNCT:
        text = text[:-1].rstrip()
    return text.lower().split()


def extract_skeleton_rule(question: str, vocab: SkeletonVocabulary | None = None) -> SkeletonCandidate:
    """Extract the earliest, longest-matching question word phrase plus the
    auxiliary verb that immediately follows it, ending in ``"_ ?"``.

    Raises :class:`NoSkeletonFoundError` when no vocabulary phrase occurs;
    callers then fall back to the LLM candidate alone.
    """
    if not question.strip():
        raise SkelgenError("question must be non-empty")
    vocab = vocab or default_vocabulary()
    phrases = [phrase.split() for phrase in vocab.question_words]
    tokens = _question_tokens(question)
    for start in range(len(tokens)):
        for phrase in phrases:  # longest first within a position
            end = start + len(phrase)
            if tokens[start:end] == phrase:
                parts = list(phrase)
                if end < len(tokens) and tokens[end] in vocab.auxiliaries:
                    parts.append(tokens[end])
                return SkeletonCandidate(" ".join(parts) + " " + PLACEHOLDER, source="rule")
    raise NoSkeletonFoundError(f"no question word from the vocabulary in {question!r}")


def load_vocabulary(path: str | Path) -> SkeletonVocabulary:
    """Read an override vocabulary: sections [question_words] / [auxiliaries],
    one phrase per line. Question words are re-sorted longest first."""
    sections: dict[str, list[str]] = {"question_words": [], "auxiliaries": []}
    current: str | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        entry = line.strip()
        if not entry or entry.startswith("#"):
            continue
        if entry.startswith("[") and entry.endswith("]"):
            current = entry[1:-1]
            if current not in sections:
                raise VocabularyError(f"{path}:{lineno}: unknown section {entry}")
            continue
        if current is None:
            raise VocabularyError(f"{path}:{lineno}: entry before any section header")
        sections[current].append(entry.lower())
    question_words = sorted(sections["question_words"], key=lambda p: -len(p.split()))
    return SkeletonVocabulary(tuple(question_words), tuple(sections["auxiliaries"]))
