"""Walk one sentence from parse to reordered WAIT stream and a streamed trace.

    python3 demos/walkthrough.py
"""

from pathlib import Path

from simulchunk.aligner import group_segments
from simulchunk.chunker import chunk_utterance
from simulchunk.corpus_io import attach_timestamps, parse_bitext, parse_conllu, parse_pharaoh, parse_timestamp_manifest
from simulchunk.metrics import average_lagging, laal
from simulchunk.stream_sim import WindowConfig, oracle_agent, run_simulation
from simulchunk.supervision import build_example, reorder_target

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main(sent_id: str = "s05") -> None:
    parses = {u.id: u for u in parse_conllu((FIXTURES / "fixture.conllu").read_text())}
    bitext = {i: (s, t) for i, s, t in parse_bitext((FIXTURES / "fixture.bitext.tsv").read_text())}
    ids = [i for i, _, _ in parse_bitext((FIXTURES / "fixture.bitext.tsv").read_text())]
    link_lines = (FIXTURES / "fixture.links.pharaoh").read_text().splitlines()
    times = parse_timestamp_manifest((FIXTURES / "fixture.timestamps.jsonl").read_text())

    u = attach_timestamps(parses[sent_id], times[sent_id])
    src, tgt = bitext[sent_id]
    links = parse_pharaoh(link_lines[ids.index(sent_id)], len(src), len(tgt))

    print("source:", " ".join(src))
    print("target:", " ".join(tgt))

    chunks = chunk_utterance(u, max_span=7)
    print("\nchunks")
    for c in chunks:
        print(f"  [{c.start:2d},{c.end:2d})  {c.reason.kind.value:<16} {' '.join(src[c.start:c.end])}")

    seg = group_segments(chunks, links, len(tgt))
    ex = build_example(chunks, tgt, seg, id=sent_id, links=links)
    print("\nreordered target stream")
    print(" ", " ".join(reorder_target(ex).tokens))

    trace = run_simulation(u, oracle_agent(ex), WindowConfig(stride_s=1.0))
    al, _ = average_lagging(trace, len(tgt))
    print(f"\nstreamed at 1.0 s stride: AL {al:.0f} ms, LAAL {laal(trace, len(tgt)):.0f} ms")
    for tok, d in zip(trace.hypothesis, trace.delays):
        print(f"  {d:6.0f} ms  {tok}")


if __name__ == "__main__":
    main()
