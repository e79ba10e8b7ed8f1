"""Skeleton injection and prompt assembly.

A full prompt is a head (task instruction), k rendered example blocks,
and a test block whose Question slot is left empty for the model to
fill. The vanilla switch drops every Skeleton line, producing the
no-skeleton baseline prompt; the two modes differ on those lines only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SkelgenError
from .model import LabeledExample, TripleSubgraph, linearize_triples

MODES = ("skeleton", "vanilla")

# One blank line between head, example blocks, and the test block.
_HEAD_SEP = "\n\n"
_BLOCK_SEP = "\n"


class PromptTooLongError(SkelgenError):
    """Assembled prompt exceeds the configured hard character limit."""


@dataclass(frozen=True)
class PromptBundle:
    head: str
    examples: tuple[str, ...]
    test_block: str
    full_text: str
    mode: str
    example_ids: tuple[str, ...]

    @property
    def zero_shot(self) -> bool:
        return not self.examples


def _input_lines(graph: TripleSubgraph, answer: str, skeleton: str | None) -> str:
    lines = [f"Triples: {linearize_triples(graph)}", f"Answer: {answer}"]
    if skeleton is not None:
        lines.append(f"Skeleton: {skeleton}")
    return "\n".join(lines)


def inject_skeleton(graph: TripleSubgraph, answer: str, skeleton: str) -> str:
    """Render a test input with its skeleton appended on its own line."""
    if not skeleton or not skeleton.strip():
        raise SkelgenError("skeleton must be non-empty")
    return _input_lines(graph, answer, skeleton)


def render_example(example: LabeledExample, include_skeleton: bool = True) -> str:
    """Render one in-context example block, ending in its question line."""
    if include_skeleton and example.skeleton is None:
        raise SkelgenError(f"example {example.id!r} has no skeleton; run the dataset builder first")
    skeleton = example.skeleton if include_skeleton else None
    return _input_lines(example.graph, example.answer, skeleton) + f"\nQuestion: {example.question}\n"


def build_prompt(
    head: str,
    examples: list[LabeledExample],
    test: tuple[TripleSubgraph, str, str | None],
    mode: str = "skeleton",
    max_chars: int | None = None,
    collect_ids: bool = True,
) -> PromptBundle:
    """Assemble the full prompt; example blocks keep the given order.

    Zero examples is allowed (zero-shot) and visible in the bundle's
    empty example metadata. The test block ends with an empty
    ``Question:`` slot.
    """
    if not head or not head.strip():
        raise SkelgenError("prompt head must be non-empty")
    if mode not in MODES:
        raise SkelgenError(f"mode must be one of {MODES}, got {mode!r}")
    graph, answer, skeleton = test
    include_skeleton = mode == "skeleton"
    if include_skeleton and (skeleton is None or not skeleton.strip()):
        raise SkelgenError("skeleton mode needs a non-empty test skeleton")
    blocks = tuple(render_example(e, include_skeleton=include_skeleton) for e in examples)
    test_block = _input_lines(graph, answer, skeleton if include_skeleton else None) + "\nQuestion:"
    head_part = head.rstrip() + _HEAD_SEP
    full_text = head_part + "".join(block + _BLOCK_SEP for block in blocks) + test_block
    if max_chars is not None and len(full_text) > max_chars:
        raise PromptTooLongError(f"prompt is {len(full_text)} chars, limit {max_chars}")
    return PromptBundle(
        head=head_part,
        examples=blocks,
        test_block=test_block,
        full_text=full_text,
        mode=mode,
        example_ids=tuple(e.id for e in examples) if collect_ids else (),
    )
