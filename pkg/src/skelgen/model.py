"""Domain types shared across the pipeline, plus subgraph linearization.

A knowledge-base fact is a (subject, relation, object) triple. An example
pairs an ordered subgraph of triples with an answer, a gold question and,
once the dataset has been built, a skeleton: the grammatical core of the
question, e.g. ``"what does _ ?"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SkelgenError

# Serialization is pinned so rendered prompts and embedded texts are
# byte-reproducible. Field texts are used verbatim (no case folding).
TRIPLE_FIELD_SEP = " | "
TRIPLE_SEP = ", "
ANSWER_MARKER = " [ANSWER] "
SKELETON_MARKER = " [SKELETON] "

# Record keys owned by the corpus schema; `extra` may not shadow them.
RESERVED_RECORD_KEYS = frozenset({"id", "triples", "answer", "question", "skeleton"})


class InvalidExampleError(SkelgenError):
    """A domain value violates its construction invariants."""


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    def __post_init__(self) -> None:
        for name in ("subject", "relation", "object"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise InvalidExampleError(f"triple {name} must be non-empty text")


@dataclass(frozen=True)
class TripleSubgraph:
    """Ordered, non-empty sequence of triples; order affects linearization."""

    triples: tuple[Triple, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "triples", tuple(self.triples))
        if not self.triples:
            raise InvalidExampleError("subgraph must contain at least one triple")

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)


@dataclass(frozen=True)
class LabeledExample:
    """One corpus record: subgraph, answer, gold question, optional skeleton.

    ``extra`` holds unknown record fields so corpora round-trip losslessly;
    the pipeline itself ignores them.
    """

    id: str
    graph: TripleSubgraph
    answer: str
    question: str
    skeleton: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise InvalidExampleError("example id must be non-empty")
        if not self.answer.strip():
            raise InvalidExampleError(f"example {self.id}: answer must be non-empty")
        if not self.question.strip():
            raise InvalidExampleError(f"example {self.id}: question must be non-empty")
        if self.skeleton is not None and not self.skeleton.strip():
            raise InvalidExampleError(f"example {self.id}: skeleton must be non-empty when present")
        bad = RESERVED_RECORD_KEYS.intersection(self.extra)
        if bad:
            raise InvalidExampleError(f"example {self.id}: extra fields shadow record keys {sorted(bad)}")


def linearize_triples(graph: TripleSubgraph) -> str:
    """Serialize a subgraph only: ``s | r | o, s | r | o``."""
    return TRIPLE_SEP.join(
        TRIPLE_FIELD_SEP.join((t.subject, t.relation, t.object)) for t in graph.triples
    )


def linearize_subgraph(graph: TripleSubgraph, answer: str) -> str:
    """Serialize subgraph and answer: ``s | r | o, s | r | o [ANSWER] a``.

    Deterministic for identical input; injective whenever field texts
    contain none of the separator substrings.
    """
    if not answer.strip():
        raise InvalidExampleError("answer must be non-empty")
    return linearize_triples(graph) + ANSWER_MARKER + answer
