"""Discrete-event simulation of sliding-window streaming inference over timed words.

The clock advances in ``stride`` steps (capped at the end of the source).
After each READ the agent receives a :class:`SourceView` exposing only the
words whose audio has been fully heard, and answers with a list of actions.
Every WRITE carries an ``anchor``: the length of the source prefix the
decision is conditioned on. Anchors beyond the heard prefix are rejected, so
a trace is causal by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

from .aligner import group_segments
from .chunker import fixed_chunks
from .corpus_io import WAIT, ParsedUtterance, Token
from .errors import CausalityError, ConfigurationError, ProtocolError, ValidationError
from .supervision import ChunkAlignedExample, build_example

STRIDE_SWEEP = (0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0)


class EventKind(str, enum.Enum):
    READ = "READ"
    WRITE = "WRITE"
    WAIT = "WAIT"
    EOS = "EOS"


@dataclass(frozen=True)
class WindowConfig:
    window_s: float = 8.0
    stride_s: float = 1.0
    context: str = "full"  # "full" or "window"

    def __post_init__(self):
        if not 0 < self.stride_s <= self.window_s:
            raise ValueError(f"need 0 < stride_s <= window_s, got {self.stride_s} and {self.window_s}")
        if self.context not in ("full", "window"):
            raise ValueError(f"context must be 'full' or 'window', not {self.context!r}")

    @property
    def stride_ms(self) -> int:
        return round(self.stride_s * 1000)

    @property
    def window_ms(self) -> int:
        return round(self.window_s * 1000)


@dataclass(frozen=True)
class StreamEvent:
    kind: EventKind
    time_ms: int
    payload: object = None  # READ: {"start_ms", "end_ms"}; WRITE: token; WAIT: "<WAIT>"
    anchor: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "time_ms": self.time_ms, "payload": self.payload}
        if self.anchor is not None:
            d["anchor"] = self.anchor
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StreamEvent":
        return cls(EventKind(d["kind"]), int(d["time_ms"]), d.get("payload"), d.get("anchor"))


@dataclass
class SimulationTrace:
    id: str
    events: list[StreamEvent]
    delays: list[int]
    source_duration_ms: int

    @property
    def hypothesis(self) -> list[str]:
        return [e.payload for e in self.events if e.kind is EventKind.WRITE]

    @property
    def output_stream(self) -> list[str]:
        """Everything the agent emitted, ``<WAIT>`` included."""
        return [e.payload for e in self.events if e.kind in (EventKind.WRITE, EventKind.WAIT)]

    def triggers(self) -> list[int]:
        """Source positions at which runs of WRITEs begin.

        A new trigger starts at the first WRITE after a READ and whenever
        the anchor changes within a step.
        """
        out = []
        prev = None
        for e in self.events:
            if e.kind is EventKind.READ:
                prev = None
            elif e.kind is EventKind.WRITE:
                if e.anchor != prev:
                    out.append(e.anchor)
                prev = e.anchor
        return out

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "events": [e.to_dict() for e in self.events],
            "delays": list(self.delays),
            "source_duration_ms": self.source_duration_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationTrace":
        return cls(
            id=str(d["id"]),
            events=[StreamEvent.from_dict(e) for e in d["events"]],
            delays=[int(x) for x in d["delays"]],
            source_duration_ms=int(d["source_duration_ms"]),
        )


@dataclass(frozen=True)
class Action:
    kind: EventKind
    token: Optional[str] = None
    anchor: Optional[int] = None


def write(token: str, anchor: Optional[int] = None) -> Action:
    return Action(EventKind.WRITE, token, anchor)


def wait(anchor: Optional[int] = None) -> Action:
    return Action(EventKind.WAIT, WAIT, anchor)


def eos() -> Action:
    return Action(EventKind.EOS)


class SourceView:
    """What an agent may see at one clock step."""

    def __init__(self, tokens: Sequence[Token], n_visible: int, clock_ms: int, finished: bool,
                 emitted: Sequence[str], cfg: WindowConfig):
        self._tokens = tokens
        self.n_visible = n_visible
        self.clock_ms = clock_ms
        self.finished = finished
        self.emitted = tuple(emitted)
        self._cfg = cfg

    def word(self, i: int) -> Token:
        if i < 0:
            raise IndexError(i)
        if i >= self.n_visible:
            raise CausalityError(f"word {i} not yet heard at {self.clock_ms} ms ({self.n_visible} words visible)")
        return self._tokens[i]

    @property
    def context(self) -> list[Token]:
        visible = list(self._tokens[: self.n_visible])
        if self._cfg.context == "full":
            return visible
        lo = self.clock_ms - self._cfg.window_ms
        return [t for t in visible if t.start_ms >= lo]


class Agent:
    """Read/write policy. Subclasses implement :meth:`step`; :meth:`reset` clears per-run state."""

    def reset(self) -> None:
        pass

    def step(self, view: SourceView) -> list[Action]:
        raise NotImplementedError


def utterance_from_words(utt_id: str, words: Sequence[tuple[str, int, int]]) -> ParsedUtterance:
    """A timed utterance with placeholder syntax, for simulating from a timestamp manifest alone."""
    tokens = [
        Token(i, w, "X", "root" if i == 0 else "dep", None if i == 0 else 0, start, end)
        for i, (w, start, end) in enumerate(words)
    ]
    return ParsedUtterance(utt_id, tokens)


def run_simulation(u: ParsedUtterance, agent: Agent, cfg: WindowConfig = WindowConfig()) -> SimulationTrace:
    if not u.timed:
        raise ValidationError(f"utterance {u.id!r} needs word timings for simulation")
    tokens = u.tokens
    total = u.duration_ms
    stride = cfg.stride_ms
    agent.reset()

    events: list[StreamEvent] = []
    delays: list[int] = []
    emitted: list[str] = []
    clock = 0
    visible = 0
    step = 0
    while True:
        step += 1
        new_clock = min(step * stride, total)
        events.append(StreamEvent(EventKind.READ, new_clock, {"start_ms": clock, "end_ms": new_clock}))
        clock = new_clock
        while visible < len(tokens) and tokens[visible].end_ms <= clock:
            visible += 1
        finished = clock >= total
        view = SourceView(tokens, visible, clock, finished, emitted, cfg)
        done = False
        for action in agent.step(view):
            if done:
                raise ProtocolError(f"{u.id!r}: agent acted after EOS at {clock} ms")
            if action.kind is EventKind.EOS:
                events.append(StreamEvent(EventKind.EOS, clock))
                done = True
                continue
            anchor = visible if action.anchor is None else action.anchor
            if anchor > visible:
                raise CausalityError(
                    f"{u.id!r}: action anchored at {anchor} words but only {visible} heard at {clock} ms"
                )
            if action.kind is EventKind.WAIT or action.token == WAIT:
                events.append(StreamEvent(EventKind.WAIT, clock, WAIT, anchor))
                emitted.append(WAIT)
            elif action.kind is EventKind.WRITE:
                events.append(StreamEvent(EventKind.WRITE, clock, action.token, anchor))
                emitted.append(action.token)
                delays.append(clock)
            else:
                raise ProtocolError(f"{u.id!r}: agent returned a {action.kind.value} action")
        if done:
            break
        if finished:
            raise ProtocolError(f"{u.id!r}: agent did not emit EOS after the source ended")
    return SimulationTrace(u.id, events, delays, total)


def check_trace(trace: SimulationTrace, u: Optional[ParsedUtterance] = None) -> list[str]:
    """Structural invariant check; returns a list of violations."""
    problems = []
    last_time = 0
    last_read = None
    for k, e in enumerate(trace.events):
        if e.time_ms < last_time:
            problems.append(f"event {k} goes back in time")
        last_time = e.time_ms
        if e.kind is EventKind.READ:
            last_read = e.payload["end_ms"]
        elif e.kind in (EventKind.WRITE, EventKind.WAIT):
            if last_read is None or e.time_ms < last_read:
                problems.append(f"event {k} precedes the audio it follows")
            if u is not None and e.anchor is not None and e.anchor > 0:
                if u.tokens[e.anchor - 1].end_ms > e.time_ms:
                    problems.append(f"event {k} anchored on unheard word {e.anchor - 1}")
    if any(b < a for a, b in zip(trace.delays, trace.delays[1:])):
        problems.append("delays decrease")
    if any(d > trace.source_duration_ms for d in trace.delays):
        problems.append("a delay exceeds the source duration")
    if WAIT in trace.hypothesis:
        problems.append("WAIT in final hypothesis")
    if len(trace.delays) != len(trace.hypothesis):
        problems.append("one delay per written token expected")
    return problems


# ---------------------------------------------------------------------------
# Agents


class ChunkReplayAgent(Agent):
    """Replays a chunk-aligned example: chunk ``k``'s unit is released once its last word is heard."""

    def __init__(self, ex: ChunkAlignedExample):
        self.ex = ex
        self._next = 0

    def reset(self):
        self._next = 0

    def step(self, view):
        ex = self.ex
        actions = []
        while self._next < len(ex.chunks) and ex.chunks[self._next].end <= view.n_visible:
            chunk = ex.chunks[self._next]
            unit = ex.stream[self._next]
            if unit == WAIT:
                actions.append(wait(chunk.end))
            else:
                actions.extend(write(ex.target_tokens[j], chunk.end) for j in unit)
            self._next += 1
        if view.finished:
            if self._next < len(ex.chunks) or ex.n_source != view.n_visible:
                raise ConfigurationError(
                    f"{ex.id!r}: chunks cover {ex.n_source} source words, utterance has {view.n_visible}"
                )
            actions.append(eos())
        return actions


def oracle_agent(ex: ChunkAlignedExample) -> Agent:
    return ChunkReplayAgent(ex)


class WaitKAgent(Agent):
    """Reads ``k`` words, then writes one target token per further word; flushes at the end."""

    def __init__(self, k: int, translation: Sequence[str]):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.translation = list(translation)
        self._written = 0

    def reset(self):
        self._written = 0

    def step(self, view):
        actions = []
        while self._written < len(self.translation):
            need = self.k + self._written
            if need <= view.n_visible:
                anchor = need
            elif view.finished:
                anchor = view.n_visible
            else:
                break
            actions.append(write(self.translation[self._written], anchor))
            self._written += 1
        if view.finished:
            actions.append(eos())
        return actions


def wait_k_agent(k: int, translation: Sequence[str]) -> Agent:
    return WaitKAgent(k, translation)


def full_wait_agent(translation: Sequence[str]) -> Agent:
    """Writes nothing until the whole source is heard."""
    return WaitKAgent(2**62, translation)


def fixed_length_example(span: int, ex: ChunkAlignedExample) -> ChunkAlignedExample:
    chunks = fixed_chunks(ex.n_source, span)
    seg = group_segments(chunks, ex.links, len(ex.target_tokens))
    return build_example(chunks, ex.target_tokens, seg, id=ex.id, links=ex.links)


def fixed_length_agent(span: int, ex: ChunkAlignedExample) -> Agent:
    """Chunk replay over fixed ``span``-word chunks, target regrouped from the same word links."""
    return ChunkReplayAgent(fixed_length_example(span, ex))
