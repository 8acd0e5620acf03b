"""Latency and quality scoring.

Latency follows the usual Average Lagging family on delays measured in
milliseconds of source audio. StreamLAAL here assigns each emitted token to
the reference segment whose time range contains its read frontier, which is
simpler than the text-based resegmentation of the original definition.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AssignmentError, UndefinedMetricError

logger = logging.getLogger(__name__)

MAX_ORDER = 4


@dataclass
class LatencyReport:
    al_ms: float
    laal_ms: float
    tau: int
    gamma: float  # target tokens per millisecond used for AL
    stream_laal_ms: Optional[float] = None


def _check(delays, source_duration_ms, ref_len):
    if len(delays) == 0:
        raise UndefinedMetricError("latency is undefined for an empty hypothesis")
    if source_duration_ms <= 0:
        raise UndefinedMetricError("latency is undefined for a zero-duration source")
    if ref_len <= 0:
        raise UndefinedMetricError("latency is undefined for an empty reference")


def _lagging(delays, source_duration_ms, gamma) -> tuple[float, int]:
    d = np.asarray(delays, dtype=float)
    hits = np.flatnonzero(d >= source_duration_ms)
    tau = int(hits[0]) + 1 if hits.size else len(d)
    lag = d[:tau] - np.arange(tau) / gamma
    return float(lag.mean()), tau


def lagging_from_delays(delays: Sequence[float], source_duration_ms: float, ref_len: int,
                        hyp_len: Optional[int] = None) -> LatencyReport:
    _check(delays, source_duration_ms, ref_len)
    hyp_len = len(delays) if hyp_len is None else hyp_len
    gamma = ref_len / source_duration_ms
    al, tau = _lagging(delays, source_duration_ms, gamma)
    laal_value, _ = _lagging(delays, source_duration_ms, max(ref_len, hyp_len) / source_duration_ms)
    return LatencyReport(al_ms=al, laal_ms=laal_value, tau=tau, gamma=gamma)


def average_lagging(trace, ref_len: int) -> tuple[float, int]:
    """AL of one trace: ``(al_ms, tau)``. WAIT events are not indexed."""
    _check(trace.delays, trace.source_duration_ms, ref_len)
    return _lagging(trace.delays, trace.source_duration_ms, ref_len / trace.source_duration_ms)


def laal(trace, ref_len: int, hyp_len: Optional[int] = None) -> float:
    """Length-adaptive AL: the rate uses ``max(ref_len, hyp_len)``."""
    _check(trace.delays, trace.source_duration_ms, ref_len)
    hyp_len = len(trace.delays) if hyp_len is None else hyp_len
    gamma = max(ref_len, hyp_len) / trace.source_duration_ms
    return _lagging(trace.delays, trace.source_duration_ms, gamma)[0]


@dataclass(frozen=True)
class RefSegment:
    start_ms: int
    end_ms: int
    tokens: tuple

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass
class StreamLaalResult:
    value: float
    per_segment: list  # LAAL per segment, None where the segment got no tokens
    skipped: list[int] = field(default_factory=list)


def stream_laal_details(traces, refs: Sequence[RefSegment]) -> StreamLaalResult:
    """StreamLAAL over one long stream.

    ``traces`` share a global clock; ``refs`` are the reference segments in
    stream order. Each written token goes to the first segment whose range
    ``[start, end]`` contains its delay; LAAL is computed per segment on a
    segment-local clock and averaged with weights equal to reference length.
    """
    if not refs:
        raise UndefinedMetricError("no reference segments")
    assigned: list[list[float]] = [[] for _ in refs]
    for trace in traces:
        for d in trace.delays:
            for k, seg in enumerate(refs):
                if seg.start_ms <= d <= seg.end_ms:
                    assigned[k].append(d - seg.start_ms)
                    break
            else:
                raise AssignmentError(f"token with read frontier {d} ms lies outside every segment")
    values, weights, per_segment, skipped = [], [], [], []
    for k, (seg, delays) in enumerate(zip(refs, assigned)):
        if not delays:
            skipped.append(k)
            per_segment.append(None)
            continue
        rep = lagging_from_delays(delays, seg.duration_ms, len(seg.tokens))
        per_segment.append(rep.laal_ms)
        values.append(rep.laal_ms)
        weights.append(len(seg.tokens))
    if skipped:
        logger.warning("%d reference segments received no tokens and were skipped", len(skipped))
    if not values:
        raise UndefinedMetricError("no segment received any token")
    value = float(np.average(values, weights=weights))
    return StreamLaalResult(value, per_segment, skipped)


def stream_laal(traces, refs: Sequence[RefSegment]) -> float:
    return stream_laal_details(traces, refs).value


def to_global_clock(traces, refs: Sequence[Sequence[str]]):
    """Lay independent per-utterance traces end to end on one clock.

    Returns shifted traces and the matching :class:`RefSegment` list.
    """
    from .stream_sim import SimulationTrace, StreamEvent

    shifted, segments = [], []
    offset = 0
    for trace, ref in zip(traces, refs, strict=True):
        events = []
        for e in trace.events:
            payload = e.payload
            if isinstance(payload, dict):
                payload = {k: v + offset for k, v in payload.items()}
            events.append(StreamEvent(e.kind, e.time_ms + offset, payload, e.anchor))
        shifted.append(
            SimulationTrace(trace.id, events, [d + offset for d in trace.delays], trace.source_duration_ms + offset)
        )
        segments.append(RefSegment(offset, offset + trace.source_duration_ms, tuple(ref)))
        offset += trace.source_duration_ms
    return shifted, segments


# ---------------------------------------------------------------------------
# BLEU


@dataclass
class BleuScore:
    score: float
    precisions: list[float]  # percentages, after smoothing
    brevity_penalty: float
    smoothed: list[bool]  # orders whose match count was zero
    matches: list[int]
    totals: list[int]
    hyp_len: int
    ref_len: int


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hyp: Sequence[str], ref: Sequence[str]) -> tuple[list[int], list[int]]:
    """Clipped n-gram match counts and hypothesis n-gram totals for one pair."""
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        matches.append(sum(min(c, r[g]) for g, c in h.items()))
        totals.append(max(len(hyp) - n + 1, 0))
    return matches, totals


def bleu(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> BleuScore:
    """Corpus BLEU with pooled clipped precisions for n = 1..4.

    For n >= 2 an order with zero matches is smoothed by adding one to both
    its match count and total; such orders are flagged in ``smoothed``. A
    unigram precision of zero gives a score of zero.
    """
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses for {len(refs)} references")
    if not hyps:
        raise UndefinedMetricError("BLEU is undefined for an empty corpus")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        m, t = bleu_stats(hyp, ref)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        hyp_len += len(hyp)
        ref_len += len(ref)

    smoothed = [m == 0 for m in matches]
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if m == 0 and n > 1:
            m, t = m + 1, t + 1
        precisions.append(m / t if t else 0.0)

    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1 - ref_len / hyp_len)
    else:
        bp = 1.0
    if precisions[0] == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(math.fsum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuScore(
        score=score,
        precisions=[100.0 * p for p in precisions],
        brevity_penalty=bp,
        smoothed=smoothed,
        matches=matches,
        totals=totals,
        hyp_len=hyp_len,
        ref_len=ref_len,
    )


# ---------------------------------------------------------------------------
# Boundary alignment


def boundary_alignment_rate(trigger_positions: Sequence[int], gold_boundaries: Sequence[int],
                            tolerance: int = 1) -> float:
    """Fraction of triggers lying within ``tolerance`` positions of a gold boundary."""
    if len(trigger_positions) == 0:
        raise UndefinedMetricError("boundary alignment is undefined without triggers")
    if not gold_boundaries:
        return 0.0
    gold = np.asarray(sorted(set(gold_boundaries)))
    trig = np.asarray(trigger_positions)
    dist = np.abs(trig[:, None] - gold[None, :]).min(axis=1)
    return float(np.mean(dist <= tolerance))
