import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from simulchunk.errors import AssignmentError, UndefinedMetricError
from simulchunk.metrics import (
    RefSegment,
    average_lagging,
    bleu,
    bleu_stats,
    boundary_alignment_rate,
    laal,
    lagging_from_delays,
    stream_laal,
    stream_laal_details,
    to_global_clock,
)
from simulchunk.stream_sim import EventKind, SimulationTrace, StreamEvent
from oracles import spreadsheet_lagging


def make_trace(delays, total, uid="t"):
    events = []
    last = None
    for d in delays:
        if d != last:
            events.append(StreamEvent(EventKind.READ, d, {"start_ms": last or 0, "end_ms": d}))
            last = d
        events.append(StreamEvent(EventKind.WRITE, d, "x", 0))
    return SimulationTrace(uid, events, list(delays), total)


def test_al_by_hand():
    # T = 4000, |ref| = 4 -> ideal lags 0, 1000, 2000, 3000
    trace = make_trace([1000, 2000, 4000, 4000], 4000)
    al, tau = average_lagging(trace, 4)
    assert tau == 3
    assert al == pytest.approx(((1000 - 0) + (2000 - 1000) + (4000 - 2000)) / 3)


def test_laal_uses_longer_side():
    trace = make_trace([1000, 1000, 2000, 3000, 4000], 4000)
    # |hyp| = 5 > |ref| = 4 -> ideal step 800 ms
    expected = ((1000 - 0) + (1000 - 800) + (2000 - 1600) + (3000 - 2400) + (4000 - 3200)) / 5
    assert laal(trace, 4) == pytest.approx(expected)
    assert laal(trace, 4) > average_lagging(trace, 4)[0]


def test_full_wait_equals_duration():
    for total, n in [(4000, 3), (3270, 10), (1, 1), (98765, 40)]:
        al, tau = average_lagging(make_trace([total] * n, total), n)
        assert al == total and tau == 1


def test_undefined_latency():
    with pytest.raises(UndefinedMetricError):
        average_lagging(make_trace([], 1000), 3)
    with pytest.raises(UndefinedMetricError):
        laal(make_trace([0], 0), 3)
    with pytest.raises(UndefinedMetricError):
        lagging_from_delays([10], 1000, 0)


delay_lists = st.integers(1, 10000).flatmap(
    lambda T: st.tuples(
        st.just(T),
        st.lists(st.integers(0, T), min_size=1, max_size=30).map(sorted),
        st.integers(1, 30),
    )
)


@given(delay_lists)
@settings(max_examples=300)
def test_matches_spreadsheet(case):
    total, delays, ref_len = case
    trace = make_trace(delays, total)
    record = trace.to_dict()
    assert average_lagging(trace, ref_len)[0] == pytest.approx(float(spreadsheet_lagging(record, ref_len)), abs=1e-6)
    assert laal(trace, ref_len) == pytest.approx(float(spreadsheet_lagging(record, ref_len, True)), abs=1e-6)


@given(delay_lists)
@settings(max_examples=300)
def test_laal_relation_to_al(case):
    total, delays, ref_len = case
    trace = make_trace(delays, total)
    al, _ = average_lagging(trace, ref_len)
    if len(delays) <= ref_len:
        assert laal(trace, ref_len) == pytest.approx(al)
    else:
        assert laal(trace, ref_len) >= al - 1e-9


def test_stream_laal_single_segment_is_laal():
    trace = make_trace([500, 1500, 3000], 3000)
    refs = [RefSegment(0, 3000, ("a", "b", "c"))]
    assert stream_laal([trace], refs) == pytest.approx(laal(trace, 3))


def test_stream_laal_two_segments_by_hand():
    first = make_trace([1000, 2000], 2000, "a")
    second = make_trace([1000, 3000, 3000], 3000, "b")
    shifted, refs = to_global_clock([first, second], [["x", "y"], ["p", "q", "r"]])
    assert refs == [RefSegment(0, 2000, ("x", "y")), RefSegment(2000, 5000, ("p", "q", "r"))]
    assert shifted[1].delays == [3000, 5000, 5000]
    # segment a: gamma = 2/2000, lags 1000 and 2000 - 1000 -> 1000
    # segment b (local): delays 1000, 3000, 3000; tau = 2; lags 1000, 3000 - 1000 -> 1500
    result = stream_laal_details(shifted, refs)
    assert result.per_segment == pytest.approx([1000.0, 1500.0])
    assert result.value == pytest.approx((1000 * 2 + 1500 * 3) / 5)


def test_stream_laal_skips_empty_segments(caplog):
    trace = make_trace([500, 1000], 1000)
    refs = [RefSegment(0, 1000, ("a", "b")), RefSegment(1000, 2000, ("c",))]
    # a token at exactly 1000 belongs to the first segment that contains it
    result = stream_laal_details([trace], refs)
    assert result.skipped == [1]
    assert result.per_segment[1] is None
    assert "skipped" in caplog.text


def test_stream_laal_unassignable_token():
    with pytest.raises(AssignmentError):
        stream_laal([make_trace([5000], 5000)], [RefSegment(0, 1000, ("a",))])
    with pytest.raises(UndefinedMetricError):
        stream_laal([], [])


def test_global_clock_shifts_event_times():
    a = make_trace([1000], 1000)
    b = make_trace([700], 700)
    shifted, _ = to_global_clock([a, b], [["x"], ["y"]])
    assert [e.time_ms for e in shifted[1].events] == [1700, 1700]
    assert shifted[1].events[0].payload == {"start_ms": 1000, "end_ms": 1700}


def test_bleu_identity_and_disjoint():
    hyp = "das ist ein kleiner Test".split()
    assert bleu([hyp], [hyp]).score == pytest.approx(100.0)
    disjoint = bleu([["a", "b", "c", "d"]], [["w", "x", "y", "z"]])
    assert disjoint.score == 0.0
    assert disjoint.smoothed == [True] * 4


def test_bleu_two_sentences_by_hand():
    hyps = ["the cat sat on the mat".split(), "a dog runs".split()]
    refs = ["the cat is on the mat".split(), "the dog runs fast".split()]
    # pooled: 1-gram 7/9, 2-gram 4/7, 3-gram 1/5, 4-gram 0/3 -> smoothed 1/4
    # c = 9, r = 10 -> BP = exp(1 - 10/9); geometric mean = (1/45) ** (1/4)
    b = bleu(hyps, refs)
    assert b.matches == [7, 4, 1, 0] and b.totals == [9, 7, 5, 3]
    assert b.smoothed == [False, False, False, True]
    assert b.brevity_penalty == pytest.approx(0.89484, abs=1e-5)
    assert b.score == pytest.approx(34.55, abs=0.01)


def test_bleu_short_hypothesis():
    b = bleu([["a"]], [["a", "b", "c", "d"]])
    assert b.brevity_penalty == pytest.approx(math.exp(1 - 4))
    assert bleu([[]], [["a"]]).score == 0.0


def test_bleu_errors():
    with pytest.raises(UndefinedMetricError):
        bleu([], [])
    with pytest.raises(ValueError):
        bleu([["a"]], [])


def test_clipping():
    matches, totals = bleu_stats(["the"] * 4, ["the", "cat"])
    assert matches[0] == 1 and totals[0] == 4


words = st.lists(st.sampled_from(list("abcdefgh")), min_size=1, max_size=20)


@given(words)
def test_bleu_self_is_hundred(h):
    assert bleu([h], [h]).score == pytest.approx(100.0)


@given(words, st.randoms(use_true_random=False))
def test_shuffling_never_helps_higher_orders(ref, rnd):
    shuffled = list(ref)
    rnd.shuffle(shuffled)
    m_ordered, _ = bleu_stats(ref, ref)
    m_shuffled, _ = bleu_stats(shuffled, ref)
    assert all(s <= o for s, o in zip(m_shuffled[1:], m_ordered[1:]))


def test_boundary_rate_examples():
    assert boundary_alignment_rate([2, 5, 9], [2, 5, 9]) == 1.0
    assert boundary_alignment_rate([3, 7], [2, 10]) == 0.5
    assert boundary_alignment_rate([3, 7], [2, 10], tolerance=0) == 0.0
    assert boundary_alignment_rate([3], []) == 0.0
    with pytest.raises(UndefinedMetricError):
        boundary_alignment_rate([], [1])


@given(st.lists(st.integers(0, 30), min_size=1, max_size=20), st.lists(st.integers(0, 30), max_size=10),
       st.integers(0, 5))
def test_boundary_rate_monotone_in_tolerance(trig, gold, tol):
    assume(gold)
    assert boundary_alignment_rate(trig, gold, tol) <= boundary_alignment_rate(trig, gold, tol + 1)
