"""Syntax-aware segmentation of a parsed utterance into short coherent chunks.

Boundary positions ``p`` lie between tokens ``p-1`` and ``p`` (``1 <= p < n``).
A position becomes a candidate when any of these rules fires:

R1  token ``p-1`` or token ``p`` is punctuation.
R2  token ``p-1`` is the last token of a base phrase:

    * NP - headed by NOUN/PROPN/PRON,
    * VP - headed by a VERB/AUX that is not itself an ``aux``/``cop`` dependent,
    * PP - an ADP whose head lies to its right, extended through that head's NP.

    A phrase span starts at its head and grows by contiguous blocks of tokens
    whose heads all fall inside the grown span. Each phrase type refuses some
    categories (NPs stop at adpositions, verbs and clause markers; VPs stop at
    subjects and subordinators) so the span stays a base phrase. Spans strictly
    inside another span of the same type are dropped.
R3  token ``p-1`` is an ``nsubj``/``csubj`` and token ``p`` is a VERB/AUX.

:func:`chunk_utterance` closes a chunk at the first candidate it reaches and
forces a cut when a chunk would exceed ``max_span`` tokens.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .corpus_io import ParsedUtterance, Token

DEFAULT_MAX_SPAN = 7


class BoundaryKind(str, enum.Enum):
    PUNCTUATION = "PUNCTUATION"
    PHRASE_EDGE_NP = "PHRASE_EDGE_NP"
    PHRASE_EDGE_VP = "PHRASE_EDGE_VP"
    PHRASE_EDGE_PP = "PHRASE_EDGE_PP"
    DEP_TRANSITION = "DEP_TRANSITION"
    MAX_SPAN = "MAX_SPAN"
    END_OF_UTTERANCE = "END_OF_UTTERANCE"


# lower value wins when several rules fire at one position
_PRIORITY = {
    BoundaryKind.PUNCTUATION: 0,
    BoundaryKind.DEP_TRANSITION: 1,
    BoundaryKind.PHRASE_EDGE_NP: 2,
    BoundaryKind.PHRASE_EDGE_VP: 3,
    BoundaryKind.PHRASE_EDGE_PP: 4,
}


@dataclass(frozen=True)
class BoundaryReason:
    kind: BoundaryKind
    detail: str = ""


@dataclass(frozen=True)
class Chunk:
    start: int
    end: int  # exclusive
    reason: BoundaryReason

    def __len__(self):
        return self.end - self.start

    def __contains__(self, index):
        return self.start <= index < self.end


NOMINAL = frozenset({"NOUN", "PROPN", "PRON"})
VERBAL = frozenset({"VERB", "AUX"})
SUBJECT_RELS = frozenset({"nsubj", "csubj"})

_NP_BLOCKERS = frozenset({"PUNCT", "ADP", "VERB", "AUX", "SCONJ", "CCONJ"})
_VP_BLOCKERS = frozenset({"PUNCT", "SCONJ"})
_VP_BLOCKING_RELS = frozenset({"nsubj", "csubj", "expl"})
_NON_HEAD_VERB_RELS = frozenset({"aux", "cop"})


def base_rel(deprel: str) -> str:
    return deprel.split(":", 1)[0]


def _np_allows(tok: Token) -> bool:
    return tok.upos not in _NP_BLOCKERS


def _vp_allows(tok: Token) -> bool:
    return tok.upos not in _VP_BLOCKERS and base_rel(tok.deprel) not in _VP_BLOCKING_RELS


def _grow(tokens: list[Token], head: int, allows) -> tuple[int, int]:
    """Grow ``[head, head+1)`` by the smallest admissible blocks on either side."""
    n = len(tokens)
    a, b = head, head + 1
    changed = True
    while changed:
        changed = False
        # left: smallest block [a2, a) whose tokens all have heads in [a2, b)
        lo = a
        while lo > 0 and allows(tokens[lo - 1]):
            lo -= 1
            if all(tokens[t].head is not None and lo <= tokens[t].head < b for t in range(lo, a)):
                a = lo
                changed = True
                break
        # right: smallest block [b, b2)
        hi = b
        while hi < n and allows(tokens[hi]):
            hi += 1
            if all(tokens[t].head is not None and a <= tokens[t].head < hi for t in range(b, hi)):
                b = hi
                changed = True
                break
    return a, b


def _maximal(spans: dict[int, tuple[int, int]]) -> dict[int, tuple[int, int]]:
    out = {}
    values = list(spans.values())
    for h, (a, b) in spans.items():
        if not any(c <= a and b <= d and (c, d) != (a, b) for c, d in values):
            out[h] = (a, b)
    return out


def noun_phrases(u: ParsedUtterance) -> dict[int, tuple[int, int]]:
    """Base NP spans keyed by head index."""
    toks = u.tokens
    spans = {t.index: _grow(toks, t.index, _np_allows) for t in toks if t.upos in NOMINAL}
    return _maximal(spans)


def verb_phrases(u: ParsedUtterance) -> dict[int, tuple[int, int]]:
    toks = u.tokens
    spans = {
        t.index: _grow(toks, t.index, _vp_allows)
        for t in toks
        if t.upos in VERBAL and base_rel(t.deprel) not in _NON_HEAD_VERB_RELS
    }
    return _maximal(spans)


def prepositional_phrases(u: ParsedUtterance) -> dict[int, tuple[int, int]]:
    """PP spans keyed by the adposition index: from the ADP to the end of its object NP."""
    toks = u.tokens
    out = {}
    for t in toks:
        if t.upos == "ADP" and t.head is not None and t.head > t.index:
            _, end = _grow(toks, t.head, _np_allows)
            out[t.index] = (t.index, end)
    return out


def boundary_candidates(u: ParsedUtterance) -> dict[int, list[BoundaryReason]]:
    """Map each candidate position to every rule that fired there, highest priority first."""
    toks = u.tokens
    n = len(toks)
    found: dict[int, dict[BoundaryKind, BoundaryReason]] = {}

    def add(p, kind, detail):
        if 1 <= p < n:
            found.setdefault(p, {}).setdefault(kind, BoundaryReason(kind, detail))

    for p in range(1, n):
        left, right = toks[p - 1], toks[p]
        if left.upos == "PUNCT" or right.upos == "PUNCT":
            punct = left if left.upos == "PUNCT" else right
            add(p, BoundaryKind.PUNCTUATION, punct.surface)
        if base_rel(left.deprel) in SUBJECT_RELS and right.upos in VERBAL:
            add(p, BoundaryKind.DEP_TRANSITION, f"{base_rel(left.deprel)}->{right.upos}")

    for h, (_, end) in sorted(noun_phrases(u).items()):
        add(end, BoundaryKind.PHRASE_EDGE_NP, f"NP:{toks[h].surface}")
    for h, (_, end) in sorted(verb_phrases(u).items()):
        add(end, BoundaryKind.PHRASE_EDGE_VP, f"VP:{toks[h].surface}")
    for a, (_, end) in sorted(prepositional_phrases(u).items()):
        add(end, BoundaryKind.PHRASE_EDGE_PP, f"PP:{toks[a].surface}")

    return {
        p: sorted(reasons.values(), key=lambda r: _PRIORITY[r.kind])
        for p, reasons in sorted(found.items())
    }


def chunk_utterance(
    u: ParsedUtterance,
    max_span: int = DEFAULT_MAX_SPAN,
    count_punct: bool = True,
    candidates: Optional[dict[int, list[BoundaryReason]]] = None,
) -> list[Chunk]:
    """Greedy earliest-close segmentation.

    With ``count_punct=False`` punctuation tokens do not count toward
    ``max_span``, so a chunk may then hold more than ``max_span`` tokens.
    """
    if max_span < 1:
        raise ValueError("max_span must be >= 1")
    n = len(u.tokens)
    if candidates is None:
        candidates = boundary_candidates(u)
    chunks = []
    start = 0
    size = 0
    for p in range(1, n + 1):
        if count_punct or u.tokens[p - 1].upos != "PUNCT":
            size += 1
        if p == n:
            chunks.append(Chunk(start, p, BoundaryReason(BoundaryKind.END_OF_UTTERANCE)))
        elif p in candidates:
            chunks.append(Chunk(start, p, candidates[p][0]))
        elif size >= max_span:
            chunks.append(Chunk(start, p, BoundaryReason(BoundaryKind.MAX_SPAN, f"cap={max_span}")))
        else:
            continue
        start, size = p, 0
    return chunks


def fixed_chunks(n: int, span: int) -> list[Chunk]:
    """Syntax-agnostic chunking into ``span``-token pieces, the last one ragged."""
    if span < 1:
        raise ValueError("span must be >= 1")
    out = []
    for start in range(0, n, span):
        end = min(start + span, n)
        kind = BoundaryKind.END_OF_UTTERANCE if end == n else BoundaryKind.MAX_SPAN
        out.append(Chunk(start, end, BoundaryReason(kind, f"fixed={span}" if end < n else "")))
    return out


def check_tiling(chunks: list[Chunk], n: int, max_span: Optional[int] = None) -> list[str]:
    """Return a list of invariant violations (empty when the chunking is valid)."""
    problems = []
    pos = 0
    for c in chunks:
        if c.start != pos:
            problems.append(f"chunk [{c.start},{c.end}) does not start at {pos}")
        if c.end <= c.start:
            problems.append(f"chunk [{c.start},{c.end}) is empty")
        if max_span is not None and c.end - c.start > max_span:
            problems.append(f"chunk [{c.start},{c.end}) exceeds {max_span} tokens")
        pos = c.end
    if pos != n:
        problems.append(f"chunks cover 0..{pos}, utterance has {n} tokens")
    return problems
