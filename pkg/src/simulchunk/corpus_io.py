"""Readers and writers for every file format the toolkit touches.

Formats:

* CoNLL-U (UD v2 column layout) for dependency parses. Word timings may ride
  in the MISC column as ``start_ms=..|end_ms=..``.
* Pharaoh ``i-j`` alignment lines, 0-based.
* JSONL word-timestamp manifests: ``{"id", "words": [{"w", "start_ms", "end_ms"}]}``.
* Tab-separated bitext: ``id<TAB>source tokens<TAB>target tokens``.
* JSONL chunk records: ``{"id", "chunks": [{"start", "end", "reason", "detail"}]}``.
* JSONL supervision records (see :func:`write_supervision`).
* JSONL simulation traces (see :func:`write_traces`).

All parsers are pure functions of their input text.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .errors import (
    BoundsError,
    DuplicateError,
    JoinError,
    ParseError,
    StructuralError,
    ValidationError,
)

WAIT = "<WAIT>"

_CONLLU_COLUMNS = 10


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    upos: str
    deprel: str
    head: Optional[int]  # None for the root
    start_ms: Optional[int] = None
    end_ms: Optional[int] = None

    @property
    def timed(self) -> bool:
        return self.start_ms is not None and self.end_ms is not None


@dataclass
class ParsedUtterance:
    """A dependency-parsed source sentence, optionally carrying word timings.

    Construction validates the structural invariants; an invalid utterance
    raises :class:`StructuralError` or :class:`ValidationError` and is never
    returned half-built.
    """

    id: str
    tokens: list[Token]
    text: Optional[str] = None

    def __post_init__(self):
        self.tokens = list(self.tokens)
        _validate_utterance(self)

    def __len__(self):
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def timed(self) -> bool:
        return bool(self.tokens) and all(t.timed for t in self.tokens)

    @property
    def duration_ms(self) -> int:
        if not self.timed:
            raise ValidationError(f"utterance {self.id!r} has no word timings")
        return self.tokens[-1].end_ms


@dataclass(frozen=True, order=True)
class AlignmentLink:
    src: int
    tgt: int
    score: float = field(default=1.0, compare=False)


def _validate_utterance(u: ParsedUtterance) -> None:
    n = len(u.tokens)
    roots = 0
    prev_start = None
    for i, tok in enumerate(u.tokens):
        if tok.index != i:
            raise StructuralError(
                f"sentence {u.id!r}: token indices must be 0..{n - 1} without gaps "
                f"(found {tok.index} at position {i})"
            )
        if tok.head is None:
            roots += 1
        elif tok.head == i:
            raise StructuralError(f"sentence {u.id!r}: token {i} is its own head")
        elif not 0 <= tok.head < n:
            raise StructuralError(
                f"sentence {u.id!r}: head {tok.head} of token {i} out of range"
            )
        if (tok.start_ms is None) != (tok.end_ms is None):
            raise ValidationError(f"sentence {u.id!r}: token {i} has a half-open timestamp")
        if tok.timed:
            if tok.start_ms < 0 or tok.start_ms > tok.end_ms:
                raise ValidationError(
                    f"sentence {u.id!r}: token {i} has span [{tok.start_ms}, {tok.end_ms}]"
                )
            if prev_start is not None and tok.start_ms < prev_start:
                raise ValidationError(
                    f"sentence {u.id!r}: start_ms decreases at token {i}"
                )
            prev_start = tok.start_ms
    if n and roots != 1:
        raise StructuralError(f"sentence {u.id!r}: expected exactly one root, found {roots}")


# ---------------------------------------------------------------------------
# CoNLL-U


def _parse_misc(misc: str, lineno: int) -> tuple[Optional[int], Optional[int]]:
    start = end = None
    if misc == "_":
        return start, end
    for item in misc.split("|"):
        key, _, value = item.partition("=")
        if key in ("start_ms", "end_ms"):
            try:
                ms = int(value)
            except ValueError:
                raise ParseError(f"non-integer {key}={value!r}", lineno) from None
            if key == "start_ms":
                start = ms
            else:
                end = ms
    return start, end


def parse_conllu(text: str) -> list[ParsedUtterance]:
    """Parse CoNLL-U text into utterances with 0-based token indices.

    Multiword-token ranges (``3-4``) and empty nodes (``3.1``) are skipped.
    Sentence ids come from ``# sent_id`` comments, falling back to the
    1-based sentence ordinal.
    """
    utterances: list[ParsedUtterance] = []
    rows: list[tuple[int, list[str]]] = []
    sent_id: Optional[str] = None
    sent_text: Optional[str] = None

    def flush():
        nonlocal rows, sent_id, sent_text
        if rows:
            utterances.append(_build_utterance(rows, sent_id or str(len(utterances) + 1), sent_text))
        rows, sent_id, sent_text = [], None, None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                key = key.strip()
                if key == "sent_id":
                    sent_id = value.strip()
                elif key == "text":
                    sent_text = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != _CONLLU_COLUMNS:
            raise ParseError(f"expected {_CONLLU_COLUMNS} tab-separated columns, got {len(cols)}", lineno)
        if "-" in cols[0] or "." in cols[0]:
            continue
        rows.append((lineno, cols))
    flush()
    return utterances


def _build_utterance(rows, sent_id, sent_text) -> ParsedUtterance:
    tokens = []
    n = len(rows)
    for position, (lineno, cols) in enumerate(rows):
        try:
            conllu_id = int(cols[0])
        except ValueError:
            raise ParseError(f"bad token id {cols[0]!r}", lineno) from None
        if conllu_id != position + 1:
            raise StructuralError(
                f"sentence {sent_id!r}: token ids must run 1..{n}, found {conllu_id} at line {lineno}"
            )
        try:
            head = int(cols[6])
        except ValueError:
            raise StructuralError(f"sentence {sent_id!r}: non-numeric HEAD {cols[6]!r} at line {lineno}") from None
        if not 0 <= head <= n:
            raise StructuralError(f"sentence {sent_id!r}: HEAD {head} out of range at line {lineno}")
        start, end = _parse_misc(cols[9], lineno)
        tokens.append(
            Token(
                index=position,
                surface=cols[1],
                upos=cols[3],
                deprel=cols[7],
                head=None if head == 0 else head - 1,
                start_ms=start,
                end_ms=end,
            )
        )
    return ParsedUtterance(id=sent_id, tokens=tokens, text=sent_text)


def serialize_conllu(utterances: Iterable[ParsedUtterance]) -> str:
    """Inverse of :func:`parse_conllu` on the fields a :class:`Token` carries."""
    blocks = []
    for u in utterances:
        lines = [f"# sent_id = {u.id}"]
        if u.text is not None:
            lines.append(f"# text = {u.text}")
        for tok in u.tokens:
            misc = "_"
            if tok.timed:
                misc = f"start_ms={tok.start_ms}|end_ms={tok.end_ms}"
            head = 0 if tok.head is None else tok.head + 1
            lines.append(
                "\t".join(
                    [str(tok.index + 1), tok.surface, "_", tok.upos, "_", "_", str(head), tok.deprel, "_", misc]
                )
            )
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


# ---------------------------------------------------------------------------
# Pharaoh alignments


def parse_pharaoh(text: str, n_src: int, n_tgt: int) -> list[AlignmentLink]:
    """Parse one line of ``i-j`` pairs. Duplicates collapse; output is sorted."""
    links = set()
    for pair in text.split():
        src, sep, tgt = pair.partition("-")
        if not sep:
            raise ParseError(f"malformed alignment pair {pair!r}")
        try:
            i, j = int(src), int(tgt)
        except ValueError:
            raise ParseError(f"malformed alignment pair {pair!r}") from None
        if not 0 <= i < n_src or not 0 <= j < n_tgt:
            raise BoundsError(f"link {pair} outside {n_src}x{n_tgt} sentence pair")
        links.add(AlignmentLink(i, j))
    return sorted(links)


def format_pharaoh(links: Iterable[AlignmentLink]) -> str:
    return " ".join(f"{l.src}-{l.tgt}" for l in sorted(links))


# ---------------------------------------------------------------------------
# Word-timestamp manifest


def parse_timestamp_manifest(text: str) -> dict[str, list[tuple[str, int, int]]]:
    """Read a JSONL manifest into ``{id: [(word, start_ms, end_ms), ...]}``.

    Spans must be well-formed, non-overlapping and in increasing order;
    anything else is rejected rather than repaired.
    """
    out: dict[str, list[tuple[str, int, int]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            utt_id = str(record["id"])
            raw_words = record["words"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad manifest record: {exc}", lineno) from None
        if utt_id in out:
            raise DuplicateError(f"line {lineno}: duplicate utterance id {utt_id!r}")
        words = []
        prev_end = None
        for w in raw_words:
            try:
                word, start, end = str(w["w"]), int(w["start_ms"]), int(w["end_ms"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad word entry {w!r}: {exc}", lineno) from None
            if start < 0 or start > end:
                raise ValidationError(f"line {lineno}: word {word!r} has span [{start}, {end}]")
            if prev_end is not None and start < prev_end:
                raise ValidationError(f"line {lineno}: word {word!r} overlaps or precedes its predecessor")
            prev_end = end
            words.append((word, start, end))
        out[utt_id] = words
    return out


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def attach_timestamps(u: ParsedUtterance, words: list[tuple[str, int, int]]) -> ParsedUtterance:
    """Copy manifest timings onto a parse. Surfaces must match exactly after NFC."""
    if len(words) != len(u.tokens):
        raise JoinError(
            f"utterance {u.id!r}: parse has {len(u.tokens)} tokens, manifest has {len(words)} words",
            [u.id],
        )
    tokens = []
    for tok, (word, start, end) in zip(u.tokens, words):
        if _nfc(tok.surface) != _nfc(word):
            raise JoinError(
                f"utterance {u.id!r}: token {tok.index} is {tok.surface!r} in the parse but {word!r} in the manifest",
                [u.id],
            )
        tokens.append(replace(tok, start_ms=start, end_ms=end))
    return ParsedUtterance(id=u.id, tokens=tokens, text=u.text)


# ---------------------------------------------------------------------------
# Bitext


def parse_bitext(text: str) -> list[tuple[str, list[str], list[str]]]:
    """Read ``id<TAB>source<TAB>target`` lines of pre-tokenized text."""
    out = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", lineno)
        utt_id = cols[0].strip()
        if utt_id in seen:
            raise DuplicateError(f"line {lineno}: duplicate bitext id {utt_id!r}")
        seen.add(utt_id)
        out.append((utt_id, cols[1].split(), cols[2].split()))
    return out


def parse_references(text: str) -> dict[str, list[str]]:
    """Read references as ``id<TAB>target``; a 3-column bitext file also works."""
    refs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3):
            raise ParseError(f"expected 2 or 3 tab-separated columns, got {len(cols)}", lineno)
        utt_id = cols[0].strip()
        if utt_id in refs:
            raise DuplicateError(f"line {lineno}: duplicate reference id {utt_id!r}")
        refs[utt_id] = cols[-1].split()
    return refs


# ---------------------------------------------------------------------------
# Chunk JSONL


def write_chunks(chunked: Iterable[tuple[str, list]]) -> bytes:
    """Serialize ``(id, chunks)`` pairs, one JSON object per line."""
    lines = []
    for utt_id, chunks in chunked:
        rec = {
            "id": utt_id,
            "chunks": [
                {"start": c.start, "end": c.end, "reason": c.reason.kind.value, "detail": c.reason.detail}
                for c in chunks
            ],
        }
        lines.append(json.dumps(rec, ensure_ascii=False) + "\n")
    return "".join(lines).encode("utf-8")


def read_chunks(data) -> dict[str, list]:
    from .chunker import BoundaryKind, BoundaryReason, Chunk

    if isinstance(data, bytes):
        data = data.decode("utf-8")
    out: dict[str, list] = {}
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            utt_id = str(rec["id"])
            chunks = [
                Chunk(int(c["start"]), int(c["end"]), BoundaryReason(BoundaryKind(c["reason"]), c.get("detail", "")))
                for c in rec["chunks"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad chunk record: {exc}", lineno) from None
        if utt_id in out:
            raise DuplicateError(f"line {lineno}: duplicate chunk record {utt_id!r}")
        out[utt_id] = chunks
    return out


# ---------------------------------------------------------------------------
# Supervision JSONL


def supervision_record(ex, collapse_waits: bool = False) -> dict:
    from .supervision import reorder_target

    chunks = []
    for chunk, unit in zip(ex.chunks, ex.stream):
        chunks.append(
            {
                "src_span": [chunk.start, chunk.end],
                "reason": chunk.reason.kind.value,
                "detail": chunk.reason.detail,
                "segment": [] if unit == WAIT else list(unit),
                "target": [WAIT] if unit == WAIT else [ex.target_tokens[j] for j in unit],
            }
        )
    return {
        "id": ex.id,
        "chunks": chunks,
        "target_stream": reorder_target(ex, collapse_waits=collapse_waits).tokens,
        "target_tokens": list(ex.target_tokens),
        "links": format_pharaoh(ex.links),
    }


def write_supervision(examples, collapse_waits: bool = False) -> bytes:
    """Serialize examples as UTF-8 JSONL, one record per line.

    ``target_stream`` is the flattened training sequence with one ``<WAIT>``
    per empty chunk (or per run of empty chunks when ``collapse_waits``).
    """
    lines = [
        json.dumps(supervision_record(ex, collapse_waits), ensure_ascii=False) + "\n"
        for ex in examples
    ]
    return "".join(lines).encode("utf-8")


def read_supervision(data) -> list:
    """Rebuild :class:`~simulchunk.supervision.ChunkAlignedExample` objects."""
    from .chunker import BoundaryKind, BoundaryReason, Chunk
    from .supervision import ChunkSegmentation, build_example

    if isinstance(data, bytes):
        data = data.decode("utf-8")
    examples = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            chunks = [
                Chunk(c["src_span"][0], c["src_span"][1], BoundaryReason(BoundaryKind(c["reason"]), c.get("detail", "")))
                for c in rec["chunks"]
            ]
            segments = [list(c["segment"]) for c in rec["chunks"]]
            target = list(rec["target_tokens"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad supervision record: {exc}", lineno) from None
        n_src = chunks[-1].end if chunks else 0
        links = parse_pharaoh(rec.get("links", ""), n_src, len(target))
        examples.append(
            build_example(chunks, target, ChunkSegmentation(segments), id=rec["id"], links=links)
        )
    return examples


def read_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Simulation traces


def write_traces(traces) -> bytes:
    return "".join(json.dumps(t.to_dict(), ensure_ascii=False) + "\n" for t in traces).encode("utf-8")


def read_traces(data) -> list:
    from .stream_sim import SimulationTrace

    if isinstance(data, bytes):
        data = data.decode("utf-8")
    traces = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            traces.append(SimulationTrace.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad trace record: {exc}", lineno) from None
    return traces
