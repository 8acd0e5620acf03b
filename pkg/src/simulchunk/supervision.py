"""Streaming training targets: per-chunk output units and target-side reordering.

A :class:`ChunkAlignedExample` pairs the source chunking with the target
segment each chunk releases. Its flattened form is the training sequence
``t_1 <WAIT> t_2 ... t_K``; :func:`reorder_target` produces it along with the
permutation that :func:`invert_reorder` uses to recover the original target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

from .aligner import ChunkSegmentation
from .chunker import Chunk
from .corpus_io import WAIT, AlignmentLink
from .errors import IntegrityError

__all__ = [
    "WAIT",
    "ChunkAlignedExample",
    "ChunkSegmentation",
    "ReorderedTarget",
    "build_example",
    "reorder_target",
    "invert_reorder",
]

Unit = Union[str, tuple]  # WAIT or a non-empty tuple of target indices


@dataclass
class ChunkAlignedExample:
    id: str
    chunks: list[Chunk]
    target_tokens: list[str]
    segmentation: ChunkSegmentation
    stream: list[Unit]
    links: list[AlignmentLink] = field(default_factory=list)

    @property
    def n_source(self) -> int:
        return self.chunks[-1].end if self.chunks else 0

    @property
    def wait_count(self) -> int:
        return sum(1 for unit in self.stream if unit == WAIT)


@dataclass
class ReorderedTarget:
    tokens: list[str]
    permutation: list[int]  # emitted (non-WAIT) position -> original target index


def build_example(
    chunks: Sequence[Chunk],
    target_tokens: Sequence[str],
    segmentation: ChunkSegmentation,
    id: str = "",
    links: Sequence[AlignmentLink] = (),
) -> ChunkAlignedExample:
    if len(segmentation) != len(chunks):
        raise IntegrityError(
            f"{id!r}: {len(segmentation)} segments for {len(chunks)} chunks"
        )
    if WAIT in target_tokens:
        raise IntegrityError(f"{id!r}: target text contains the reserved token {WAIT}")
    if not segmentation.is_partition(len(target_tokens)):
        raise IntegrityError(f"{id!r}: segmentation does not partition the {len(target_tokens)} target tokens")
    stream = [tuple(seg) if seg else WAIT for seg in segmentation.segments]
    return ChunkAlignedExample(
        id=id,
        chunks=list(chunks),
        target_tokens=list(target_tokens),
        segmentation=segmentation,
        stream=stream,
        links=sorted(links),
    )


def reorder_target(ex: ChunkAlignedExample, collapse_waits: bool = False) -> ReorderedTarget:
    """Emit chunk units in order: a ``<WAIT>`` for each empty chunk, else its tokens.

    Within a unit the tokens keep their original target order. With
    ``collapse_waits`` a run of consecutive empty chunks yields one ``<WAIT>``.
    """
    tokens: list[str] = []
    permutation: list[int] = []
    for unit in ex.stream:
        if unit == WAIT:
            if not (collapse_waits and tokens and tokens[-1] == WAIT):
                tokens.append(WAIT)
            continue
        for j in unit:
            tokens.append(ex.target_tokens[j])
            permutation.append(j)
    return ReorderedTarget(tokens, permutation)


def invert_reorder(rt: ReorderedTarget) -> list[str]:
    """Drop ``<WAIT>`` and put each token back at its original index."""
    n = len(rt.permutation)
    if sorted(rt.permutation) != list(range(n)):
        raise IntegrityError("permutation is not a bijection on 0..n-1")
    content = [tok for tok in rt.tokens if tok != WAIT]
    if len(content) != n:
        raise IntegrityError(f"{len(content)} tokens for a permutation of length {n}")
    out = [""] * n
    for tok, j in zip(content, rt.permutation):
        out[j] = tok
    return out
