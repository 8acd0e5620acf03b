"""Chunk-level source-target correspondences.

A small IBM Model 1 trainer provides word links when no external aligner
output is available; :func:`group_segments` then turns word links into
per-chunk target segments.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .chunker import Chunk
from .corpus_io import AlignmentLink

logger = logging.getLogger(__name__)

NULL = "<NULL>"
EPSILON = 1e-9


@dataclass
class LexiconTable:
    """Translation table ``P(target word | source word)`` with a smoothing floor.

    Only co-occurring pairs are stored. Any other target word ``t`` given
    source ``s`` has probability ``floor[s]``, so that each row sums to one
    over the full target vocabulary.
    """

    probs: dict[tuple[str, str], float]
    floor: dict[str, float]
    src_vocab: frozenset
    tgt_vocab: frozenset
    log_likelihoods: list[float] = field(default_factory=list)
    skipped_pairs: int = 0

    def prob(self, src: str, tgt: str) -> float:
        p = self.probs.get((src, tgt))
        if p is not None:
            return p
        return self.floor.get(src, EPSILON)

    def row_sum(self, src: str) -> float:
        stored = [p for (s, _), p in self.probs.items() if s == src]
        return math.fsum(stored) + self.floor.get(src, EPSILON) * (len(self.tgt_vocab) - len(stored))

    def best_target(self, src: str) -> str:
        row = {t: p for (s, t), p in self.probs.items() if s == src}
        return max(sorted(row), key=row.__getitem__)


def _log_likelihood(pairs, probs, floor) -> float:
    total = 0.0
    for src, tgt in pairs:
        srcs = [NULL] + list(src)
        for t in tgt:
            s = math.fsum(probs.get((w, t), floor.get(w, EPSILON)) for w in srcs)
            total += math.log(s / len(srcs))
    return total


def train_lexicon(bitext: Iterable[tuple[Sequence[str], Sequence[str]]], iterations: int = 10) -> LexiconTable:
    """IBM Model 1 EM with a NULL source word and uniform initialization.

    ``log_likelihoods[k]`` is the corpus log-likelihood under the table used
    in E-step ``k``; the last entry is for the returned table.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pairs = []
    skipped = 0
    for src, tgt in bitext:
        if not src or not tgt:
            skipped += 1
            continue
        pairs.append((list(src), list(tgt)))
    if skipped:
        logger.warning("skipped %d empty sentence pairs", skipped)
    if not pairs:
        raise ValueError("bitext has no non-empty sentence pairs")

    src_vocab = frozenset(w for s, _ in pairs for w in s)
    tgt_vocab = frozenset(w for _, t in pairs for w in t)
    uniform = 1.0 / len(tgt_vocab)
    probs: dict[tuple[str, str], float] = {}
    for src, tgt in pairs:
        for s in [NULL] + src:
            for t in tgt:
                probs[(s, t)] = uniform
    floor = {s: uniform for s in src_vocab | {NULL}}

    lls = []
    for _ in range(iterations):
        counts: dict[tuple[str, str], float] = defaultdict(float)
        totals: dict[str, float] = defaultdict(float)
        ll = 0.0
        for src, tgt in pairs:
            srcs = [NULL] + src
            for t in tgt:
                scores = [probs[(s, t)] for s in srcs]
                z = math.fsum(scores)
                ll += math.log(z / len(srcs))
                for s, score in zip(srcs, scores):
                    post = score / z
                    counts[(s, t)] += post
                    totals[s] += post
        lls.append(ll)
        # add-epsilon M-step over the full target vocabulary
        denom = {s: totals[s] + EPSILON * len(tgt_vocab) for s in totals}
        probs = {(s, t): (c + EPSILON) / denom[s] for (s, t), c in counts.items()}
        floor = {s: EPSILON / d for s, d in denom.items()}
    lls.append(_log_likelihood(pairs, probs, floor))
    return LexiconTable(probs, floor, src_vocab, tgt_vocab, lls, skipped)


def align_pair(src: Sequence[str], tgt: Sequence[str], table: LexiconTable, threshold: float = 0.1) -> list[AlignmentLink]:
    """Link each target word to its most probable source word.

    Ties prefer the leftmost real source word over NULL. No link is made when
    NULL wins or the best probability is below ``threshold``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    links = []
    for j, t in enumerate(tgt):
        best_i, best_p = None, -1.0
        for i, s in enumerate(src):
            p = table.prob(s, t)
            if p > best_p:
                best_i, best_p = i, p
        if best_i is None or table.prob(NULL, t) > best_p or best_p < threshold:
            continue
        links.append(AlignmentLink(best_i, j, min(best_p, 1.0)))
    return links


@dataclass
class ChunkSegmentation:
    """Target indices assigned to each chunk, ascending within a chunk."""

    segments: list[list[int]]

    def __len__(self):
        return len(self.segments)

    def is_partition(self, tgt_len: int) -> bool:
        flat = [j for seg in self.segments for j in seg]
        ordered = all(list(seg) == sorted(set(seg)) for seg in self.segments)
        return ordered and sorted(flat) == list(range(tgt_len))


def group_segments(chunks: Sequence[Chunk], links: Iterable[AlignmentLink], tgt_len: int) -> ChunkSegmentation:
    """Assign every target index to one chunk.

    A target word goes to the earliest chunk containing any of its linked
    source words; unlinked target words go to the last chunk.
    """
    if not chunks:
        if tgt_len:
            raise ValueError("cannot place target words without any source chunk")
        return ChunkSegmentation([])
    chunk_of = {}
    for k, c in enumerate(chunks):
        for i in range(c.start, c.end):
            chunk_of[i] = k
    best = {}
    for link in links:
        k = chunk_of.get(link.src)
        if k is None:
            raise ValueError(f"link {link.src}-{link.tgt} points outside the chunked source")
        if not 0 <= link.tgt < tgt_len:
            raise ValueError(f"link {link.src}-{link.tgt} points outside the target")
        best[link.tgt] = min(k, best.get(link.tgt, k))
    segments = [[] for _ in chunks]
    for j in range(tgt_len):
        segments[best.get(j, len(chunks) - 1)].append(j)
    return ChunkSegmentation(segments)
