"""Corpus I/O: one JSON record per line, UTF-8, LF endings.

Record schema: ``id`` (string), ``triples`` (array of 3-element string
arrays), ``answer`` (string), ``question`` (string), ``skeleton``
(string, optional). Unknown fields are preserved on round-trip but
ignored by the pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import SkelgenError
from .model import RESERVED_RECORD_KEYS, LabeledExample, Triple, TripleSubgraph

VALID_SPLIT_NAMES = ("train", "dev", "test")


class CorpusFormatError(SkelgenError):
    """A corpus file violates the record schema; message carries file:line."""


@dataclass(frozen=True)
class CorpusSplit:
    """An immutable, order-preserving corpus split with unique example ids."""

    name: str
    examples: tuple[LabeledExample, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        if self.name not in VALID_SPLIT_NAMES:
            raise CorpusFormatError(f"split name must be one of {VALID_SPLIT_NAMES}, got {self.name!r}")
        index: dict[str, LabeledExample] = {}
        for example in self.examples:
            if example.id in index:
                raise CorpusFormatError(f"duplicate example id {example.id!r} in split {self.name!r}")
            index[example.id] = example
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.examples)

    def by_id(self, example_id: str) -> LabeledExample:
        try:
            return self._index[example_id]  # type: ignore[attr-defined]
        except KeyError:
            raise KeyError(f"no example with id {example_id!r} in split {self.name!r}") from None


def _parse_record(raw: dict, where: str) -> LabeledExample:
    for key in ("id", "triples", "answer", "question"):
        if key not in raw:
            raise CorpusFormatError(f"{where}: missing field {key!r}")
    triples = raw["triples"]
    if not isinstance(triples, list) or not triples:
        raise CorpusFormatError(f"{where}: 'triples' must be a non-empty array")
    parsed = []
    for i, entry in enumerate(triples):
        if not isinstance(entry, list) or len(entry) != 3 or not all(isinstance(v, str) for v in entry):
            raise CorpusFormatError(f"{where}: triple {i} must be a 3-element string array")
        parsed.append(Triple(*entry))
    skeleton = raw.get("skeleton")
    if skeleton is not None and not isinstance(skeleton, str):
        raise CorpusFormatError(f"{where}: 'skeleton' must be a string when present")
    extra = {k: v for k, v in raw.items() if k not in RESERVED_RECORD_KEYS}
    try:
        return LabeledExample(
            id=raw["id"],
            graph=TripleSubgraph(tuple(parsed)),
            answer=raw["answer"],
            question=raw["question"],
            skeleton=skeleton,
            extra=extra,
        )
    except SkelgenError as exc:
        raise CorpusFormatError(f"{where}: {exc}") from exc


def infer_split_name(path: str | Path) -> str:
    """Guess the split from the filename; unknown stems default to train."""
    stem = Path(path).stem.lower()
    for candidate in VALID_SPLIT_NAMES:
        if candidate in stem:
            return candidate
    return "train"


def load_corpus(path: str | Path, name: str | None = None) -> CorpusSplit:
    """Load a split, preserving record order.

    Malformed lines raise :class:`CorpusFormatError` naming the line;
    duplicate ids are rejected.
    """
    path = Path(path)
    examples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{where}: invalid JSON ({exc.msg})") from exc
            if not isinstance(raw, dict):
                raise CorpusFormatError(f"{where}: record must be a JSON object")
            examples.append(_parse_record(raw, where))
    return CorpusSplit(name=name or infer_split_name(path), examples=tuple(examples))


def example_to_record(example: LabeledExample) -> dict:
    record: dict = {
        "id": example.id,
        "triples": [[t.subject, t.relation, t.object] for t in example.graph],
        "answer": example.answer,
        "question": example.question,
    }
    if example.skeleton is not None:
        record["skeleton"] = example.skeleton
    record.update(example.extra)
    return record


def dump_record(record: dict) -> str:
    """One canonical JSON line: sorted keys, compact separators, raw unicode."""
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def save_skeleton_dataset(split: CorpusSplit, path: str | Path) -> None:
    """Write a built skeleton dataset; byte-stable and loadable by load_corpus.

    Every example must carry a skeleton; the first offender is named.
    """
    for example in split.examples:
        if example.skeleton is None:
            raise SkelgenError(f"example {example.id!r} has no skeleton; build the dataset first")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for example in split.examples:
            handle.write(dump_record(example_to_record(example)) + "\n")
