"""Command-line entry point: ``simulchunk <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .aligner import align_pair, group_segments, train_lexicon
from .chunker import DEFAULT_MAX_SPAN, chunk_utterance
from .corpus_io import (
    format_pharaoh,
    parse_bitext,
    parse_conllu,
    parse_pharaoh,
    parse_references,
    parse_timestamp_manifest,
    read_chunks,
    read_supervision,
    read_traces,
    write_chunks,
    write_supervision,
    write_traces,
)
from .errors import JoinError, SimulChunkError
from .pipeline import AGENT_KINDS, AgentSpec, RunManifest, make_agent, run, score_traces
from .stream_sim import WindowConfig, run_simulation, utterance_from_words
from .supervision import build_example

log = logging.getLogger("simulchunk")


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _emit(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def cmd_chunk(args):
    utterances = parse_conllu(_read(args.conllu))
    chunked = [(u.id, chunk_utterance(u, args.max_span, count_punct=not args.skip_punct)) for u in utterances]
    _emit(args.out, write_chunks(chunked))
    log.info("chunked %d utterances", len(chunked))


def cmd_align(args):
    bitext = parse_bitext(_read(args.bitext))
    if args.links:
        lines = _read(args.links).splitlines()
        if len(lines) != len(bitext):
            raise JoinError(f"{len(lines)} alignment lines for {len(bitext)} bitext pairs")
        links = [parse_pharaoh(line, len(s), len(t)) for line, (_, s, t) in zip(lines, bitext)]
    else:
        table = train_lexicon([(s, t) for _, s, t in bitext], args.iters)
        links = [align_pair(s, t, table, args.threshold) for _, s, t in bitext]
        log.info("log-likelihood per iteration: %s", ", ".join(f"{x:.2f}" for x in table.log_likelihoods))
    _emit(args.out, "".join(format_pharaoh(l) + "\n" for l in links).encode("utf-8"))


def cmd_build(args):
    chunks = read_chunks(_read(args.chunks))
    bitext = parse_bitext(_read(args.bitext))
    lines = _read(args.links).splitlines()
    if len(lines) != len(bitext):
        raise JoinError(f"{len(lines)} alignment lines for {len(bitext)} bitext pairs")
    missing = sorted(set(chunks) ^ {b[0] for b in bitext})
    if missing:
        raise JoinError(f"ids not in both chunk and bitext files: {', '.join(missing)}", missing)
    examples = []
    for line, (utt_id, src, tgt) in zip(lines, bitext):
        ch = chunks[utt_id]
        if ch[-1].end != len(src):
            raise JoinError(f"{utt_id!r}: chunks cover {ch[-1].end} tokens, source has {len(src)}", [utt_id])
        links = parse_pharaoh(line, len(src), len(tgt))
        examples.append(build_example(ch, tgt, group_segments(ch, links, len(tgt)), id=utt_id, links=links))
    _emit(args.out, write_supervision(examples, args.collapse_waits))


def cmd_simulate(args):
    examples = read_supervision(_read(args.supervision))
    timings = parse_timestamp_manifest(_read(args.manifest))
    missing = sorted(ex.id for ex in examples if ex.id not in timings)
    if missing:
        raise JoinError(f"no timestamps for {', '.join(missing)}", missing)
    cfg = WindowConfig(args.window, args.stride, args.context)
    spec = AgentSpec(args.agent, args.k, args.span)
    traces = [run_simulation(utterance_from_words(ex.id, timings[ex.id]), make_agent(spec, ex), cfg) for ex in examples]
    _emit(args.out, write_traces(traces))


def cmd_score(args):
    traces = read_traces(_read(args.traces))
    refs = parse_references(_read(args.refs))
    gold = None
    if args.supervision:
        gold = {ex.id: [c.end for c in ex.chunks] for ex in read_supervision(_read(args.supervision))}
    report = score_traces(traces, refs, gold)
    _emit(args.report, (json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8"))
    c = report["corpus"]
    if "bleu" in c:
        log.info("BLEU %.2f  AL %s  StreamLAAL %s", c["bleu"]["score"], c["al_ms"], c["stream_laal_ms"])


def cmd_run(args):
    manifest = RunManifest.load(args.manifest)
    result = run(manifest)
    print(result.run_dir)
    for row in result.sweep:
        rate = "n/a" if row.boundary_alignment is None else f"{row.boundary_alignment:.3f}"
        print(f"stride {row.stride_s:4.2f}s  StreamLAAL {row.stream_laal_ms:8.1f} ms  BLEU {row.bleu:6.2f}  boundary {rate}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulchunk", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("chunk", parents=[common], help="split CoNLL-U parses into chunks")
    s.add_argument("--conllu", required=True)
    s.add_argument("--max-span", type=int, default=DEFAULT_MAX_SPAN)
    s.add_argument("--skip-punct", action="store_true", help="punctuation does not count toward --max-span")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_chunk)

    s = sub.add_parser("align", parents=[common], help="word-align a bitext (or normalize external links)")
    s.add_argument("--bitext", required=True)
    s.add_argument("--iters", type=int, default=10)
    s.add_argument("--threshold", type=float, default=0.1)
    s.add_argument("--links", help="use these Pharaoh links instead of training")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("build", parents=[common], help="build WAIT-annotated supervision")
    s.add_argument("--chunks", required=True)
    s.add_argument("--links", required=True)
    s.add_argument("--bitext", required=True)
    s.add_argument("--collapse-waits", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("simulate", parents=[common], help="run a policy over timed source words")
    s.add_argument("--supervision", required=True)
    s.add_argument("--manifest", required=True, help="word timestamp JSONL")
    s.add_argument("--agent", choices=AGENT_KINDS, default="oracle")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--span", type=int, default=7)
    s.add_argument("--stride", type=float, default=1.0)
    s.add_argument("--window", type=float, default=8.0)
    s.add_argument("--context", choices=("full", "window"), default="full")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("score", parents=[common], help="latency and BLEU for a trace file")
    s.add_argument("--traces", required=True)
    s.add_argument("--refs", required=True)
    s.add_argument("--supervision", help="adds boundary alignment against its chunks")
    s.add_argument("--report", default="-")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("run", parents=[common], help="end-to-end run from a JSON manifest")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (SimulChunkError, OSError, ValueError) as exc:
        print(f"simulchunk {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
