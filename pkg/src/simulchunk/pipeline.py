"""End-to-end runs: parses and bitext in, supervision, traces and scores out.

A run is described by a JSON manifest (schema in the README). Every output
lands in ``<output_dir>/<hash>/`` where ``hash`` covers the run settings and
the bytes of every input file, so identical manifests reproduce identical
directories byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .aligner import align_pair, group_segments, train_lexicon
from .chunker import DEFAULT_MAX_SPAN, chunk_utterance
from .corpus_io import (
    attach_timestamps,
    parse_bitext,
    parse_conllu,
    parse_pharaoh,
    parse_timestamp_manifest,
    write_supervision,
    write_traces,
)
from .errors import ConfigurationError, JoinError, SimulChunkError, UndefinedMetricError
from .metrics import average_lagging, bleu, boundary_alignment_rate, laal, stream_laal_details, to_global_clock
from .stream_sim import (
    STRIDE_SWEEP,
    Agent,
    WindowConfig,
    fixed_length_agent,
    oracle_agent,
    run_simulation,
    wait_k_agent,
)
from .supervision import ChunkAlignedExample, build_example

logger = logging.getLogger(__name__)

AGENT_KINDS = ("oracle", "wait-k", "fixed")


@dataclass(frozen=True)
class AgentSpec:
    kind: str = "oracle"
    k: int = 3
    span: int = 7

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ConfigurationError(f"unknown agent kind {self.kind!r}; expected one of {AGENT_KINDS}")
        if self.k < 1 or self.span < 1:
            raise ConfigurationError("agent k and span must be >= 1")


def make_agent(spec: AgentSpec, ex: ChunkAlignedExample) -> Agent:
    if spec.kind == "oracle":
        return oracle_agent(ex)
    if spec.kind == "wait-k":
        return wait_k_agent(spec.k, ex.target_tokens)
    return fixed_length_agent(spec.span, ex)


@dataclass
class RunManifest:
    conllu: Path
    bitext: Path
    timestamps: Path
    output_dir: Path
    links: Optional[Path] = None
    max_span: int = DEFAULT_MAX_SPAN
    count_punct: bool = True
    iterations: int = 10
    threshold: float = 0.1
    collapse_waits: bool = False
    agent: AgentSpec = field(default_factory=AgentSpec)
    window: WindowConfig = field(default_factory=WindowConfig)
    strides: tuple = STRIDE_SWEEP
    content_hash: str = ""

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "RunManifest":
        """Build and validate a manifest. Relative paths resolve against ``base_dir``."""
        def path(key, required=True):
            value = d.get(key)
            if value is None:
                if required:
                    raise ConfigurationError(f"manifest is missing {key!r}")
                return None
            return (base_dir / value).resolve()

        chunker = d.get("chunker", {})
        aligner = d.get("aligner", {})
        try:
            m = cls(
                conllu=path("conllu"),
                bitext=path("bitext"),
                timestamps=path("timestamps"),
                links=path("links", required=False),
                output_dir=path("output_dir"),
                max_span=int(chunker.get("max_span", DEFAULT_MAX_SPAN)),
                count_punct=bool(chunker.get("count_punct", True)),
                iterations=int(aligner.get("iterations", 10)),
                threshold=float(aligner.get("threshold", 0.1)),
                collapse_waits=bool(d.get("collapse_waits", False)),
                agent=AgentSpec(**d.get("agent", {})),
                window=WindowConfig(**d.get("window", {})),
                strides=tuple(float(s) for s in d.get("strides", STRIDE_SWEEP)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad manifest: {exc}") from None
        m.validate()
        m.content_hash = m.compute_hash()
        return m

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), path.parent)

    def validate(self) -> None:
        for p in (self.conllu, self.bitext, self.timestamps, self.links):
            if p is not None and not p.is_file():
                raise ConfigurationError(f"input file not found: {p}")
        if self.max_span < 1:
            raise ConfigurationError("chunker.max_span must be >= 1")
        if self.iterations < 1:
            raise ConfigurationError("aligner.iterations must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError("aligner.threshold must lie in [0, 1]")
        for s in self.strides:
            try:
                WindowConfig(self.window.window_s, s, self.window.context)
            except ValueError as exc:
                raise ConfigurationError(f"bad stride in sweep: {exc}") from None

    def settings(self) -> dict:
        """Everything that affects outputs except the input file contents."""
        return {
            "chunker": {"max_span": self.max_span, "count_punct": self.count_punct},
            "aligner": {"iterations": self.iterations, "threshold": self.threshold, "external_links": self.links is not None},
            "collapse_waits": self.collapse_waits,
            "agent": asdict(self.agent),
            "window": asdict(self.window),
            "strides": list(self.strides),
        }

    def compute_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.settings(), sort_keys=True).encode("utf-8"))
        for name in ("conllu", "bitext", "timestamps", "links"):
            p = getattr(self, name)
            h.update(f"\0{name}\0".encode())
            if p is not None:
                h.update(p.read_bytes())
        return h.hexdigest()

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.content_hash[:16]


# ---------------------------------------------------------------------------
# Corpus building


@dataclass
class BuiltCorpus:
    examples: list[ChunkAlignedExample]
    utterances: list  # timed ParsedUtterance, parallel to examples
    stats: dict

    @property
    def failures(self) -> list[dict]:
        return self.stats["failures"]


def corpus_stats(examples: Sequence[ChunkAlignedExample], failures: Sequence[dict] = ()) -> dict:
    chunks = [c for ex in examples for c in ex.chunks]
    waits = sum(ex.wait_count for ex in examples)
    tgt_total = sum(len(ex.target_tokens) for ex in examples)
    tgt_linked = sum(len({l.tgt for l in ex.links}) for ex in examples)
    src_total = sum(ex.n_source for ex in examples)
    src_linked = sum(len({l.src for l in ex.links}) for ex in examples)
    lengths = Counter(len(c) for c in chunks)
    reasons = Counter(c.reason.kind.value for c in chunks)
    return {
        "utterances": len(examples),
        "chunks": len(chunks),
        "wait_count": waits,
        "wait_rate": waits / len(chunks) if chunks else 0.0,
        "chunk_length_histogram": {str(k): lengths[k] for k in sorted(lengths)},
        "boundary_reasons": dict(sorted(reasons.items())),
        "alignment_coverage": {
            "target": tgt_linked / tgt_total if tgt_total else 0.0,
            "source": src_linked / src_total if src_total else 0.0,
        },
        "failures": list(failures),
    }


def _read(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def build_corpus(manifest: RunManifest, out_dir: Optional[Path] = None) -> BuiltCorpus:
    """Chunk, align and build supervision for every utterance in the manifest.

    Inputs are joined by id. Ids missing from any file raise :class:`JoinError`
    naming them; per-utterance problems (surface mismatches, bad links) are
    collected instead. When ``out_dir`` is given, ``stats.json`` is written
    there even if the build fails, along with ``supervision.jsonl`` on success.
    """
    parses = {u.id: u for u in parse_conllu(_read(manifest.conllu))}
    bitext = parse_bitext(_read(manifest.bitext))
    timings = parse_timestamp_manifest(_read(manifest.timestamps))
    link_lines = None
    if manifest.links is not None:
        link_lines = _read(manifest.links).splitlines()

    failures: list[dict] = []
    bitext_ids = [b[0] for b in bitext]
    missing = sorted((set(parses) | set(timings) | set(bitext_ids)) - (set(parses) & set(timings) & set(bitext_ids)))
    if missing:
        failures.append({"stage": "join", "ids": missing, "error": "id not present in every input file"})
    if link_lines is not None and len(link_lines) != len(bitext):
        failures.append(
            {"stage": "join", "ids": [], "error": f"{len(link_lines)} alignment lines for {len(bitext)} bitext pairs"}
        )
    if failures:
        stats = corpus_stats([], failures)
        _write_build(out_dir, None, stats)
        raise JoinError(failures[0]["error"] + ": " + ", ".join(missing), missing)

    if link_lines is None and bitext:
        table = train_lexicon([(s, t) for _, s, t in bitext], manifest.iterations)
        all_links = [align_pair(s, t, table, manifest.threshold) for _, s, t in bitext]
    else:
        all_links = [None] * len(bitext)

    examples, utterances = [], []
    for row, (utt_id, src, tgt) in enumerate(bitext):
        try:
            u = attach_timestamps(parses[utt_id], timings[utt_id])
            if u.surfaces != src:
                raise JoinError(f"{utt_id!r}: bitext source differs from the parse", [utt_id])
            links = all_links[row]
            if links is None:
                links = parse_pharaoh(link_lines[row], len(src), len(tgt))
            chunks = chunk_utterance(u, manifest.max_span, manifest.count_punct)
            seg = group_segments(chunks, links, len(tgt))
            examples.append(build_example(chunks, tgt, seg, id=utt_id, links=links))
            utterances.append(u)
        except SimulChunkError as exc:
            failures.append({"stage": "build", "ids": [utt_id], "error": str(exc)})

    stats = corpus_stats(examples, failures)
    supervision = write_supervision(examples, manifest.collapse_waits)
    _write_build(out_dir, None if failures else supervision, stats)
    if failures:
        bad = [i for f in failures for i in f["ids"]]
        raise JoinError(f"{len(failures)} utterances failed to build: {', '.join(bad)}", bad)
    return BuiltCorpus(examples, utterances, stats)


def _dump(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def _write_build(out_dir, supervision, stats):
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "stats.json").write_bytes(_dump(stats))
    if supervision is not None:
        (out_dir / "supervision.jsonl").write_bytes(supervision)


# ---------------------------------------------------------------------------
# Simulation and scoring


def simulate(corpus: BuiltCorpus, spec: AgentSpec, cfg: WindowConfig) -> list:
    return [run_simulation(u, make_agent(spec, ex), cfg) for u, ex in zip(corpus.utterances, corpus.examples)]


def pooled_boundary_rate(traces, gold: Sequence[Sequence[int]], tolerance: int = 1) -> float:
    """Boundary alignment over all triggers of a corpus, each trigger weighted equally."""
    hits = total = 0
    for trace, boundaries in zip(traces, gold, strict=True):
        trig = trace.triggers()
        if trig:
            hits += boundary_alignment_rate(trig, boundaries, tolerance) * len(trig)
            total += len(trig)
    if total == 0:
        raise UndefinedMetricError("no triggers in the corpus")
    return hits / total


def score_traces(traces, refs: dict[str, list[str]], gold: Optional[dict[str, list[int]]] = None) -> dict:
    """Per-utterance and corpus metrics for a list of traces.

    ``refs`` maps utterance id to reference tokens. ``gold`` optionally maps
    ids to chunk boundaries for the boundary alignment rate.
    """
    missing = [t.id for t in traces if t.id not in refs]
    if missing:
        raise JoinError(f"no reference for {', '.join(missing)}", missing)
    per_utt = []
    for t in traces:
        ref = refs[t.id]
        row = {"id": t.id, "hyp_len": len(t.hypothesis), "ref_len": len(ref), "wait_count": t.output_stream.count("<WAIT>")}
        try:
            al, tau = average_lagging(t, len(ref))
            row.update(al_ms=al, tau=tau, laal_ms=laal(t, len(ref)))
        except UndefinedMetricError as exc:
            row.update(al_ms=None, tau=None, laal_ms=None, undefined=str(exc))
        b = bleu([t.hypothesis], [ref])
        row.update(bleu=b.score, bleu_smoothed=b.smoothed)
        if gold is not None and t.triggers():
            row["boundary_alignment"] = boundary_alignment_rate(t.triggers(), gold[t.id])
        per_utt.append(row)

    corpus: dict = {"utterances": len(traces)}
    if traces:
        b = bleu([t.hypothesis for t in traces], [refs[t.id] for t in traces])
        corpus["bleu"] = {
            "score": b.score,
            "precisions": b.precisions,
            "brevity_penalty": b.brevity_penalty,
            "smoothed": b.smoothed,
            "hyp_len": b.hyp_len,
            "ref_len": b.ref_len,
        }
        defined = [r for r in per_utt if r["al_ms"] is not None]
        corpus["al_ms"] = sum(r["al_ms"] for r in defined) / len(defined) if defined else None
        corpus["laal_ms"] = sum(r["laal_ms"] for r in defined) / len(defined) if defined else None
        shifted, segments = to_global_clock(traces, [refs[t.id] for t in traces])
        try:
            sl = stream_laal_details(shifted, segments)
            corpus["stream_laal_ms"] = sl.value
            corpus["stream_laal_skipped"] = [traces[k].id for k in sl.skipped]
        except UndefinedMetricError as exc:
            corpus["stream_laal_ms"] = None
            corpus["stream_laal_undefined"] = str(exc)
        if gold is not None:
            try:
                corpus["boundary_alignment"] = pooled_boundary_rate(traces, [gold[t.id] for t in traces])
            except UndefinedMetricError:
                corpus["boundary_alignment"] = None
    return {"corpus": corpus, "utterances": per_utt}


@dataclass
class SweepRow:
    stride_s: float
    stream_laal_ms: float
    bleu: float
    boundary_alignment: Optional[float]


def sweep_stride(manifest: RunManifest, strides: Optional[Sequence[float]] = None,
                 corpus: Optional[BuiltCorpus] = None, agent: Optional[AgentSpec] = None) -> list[SweepRow]:
    """One (StreamLAAL, BLEU, boundary alignment) row per stride, sorted by stride."""
    if corpus is None:
        corpus = build_corpus(manifest)
    agent = agent or manifest.agent
    strides = sorted(manifest.strides if strides is None else strides)
    refs = [ex.target_tokens for ex in corpus.examples]
    gold = [[c.end for c in ex.chunks] for ex in corpus.examples]
    rows = []
    for stride in strides:
        cfg = WindowConfig(manifest.window.window_s, stride, manifest.window.context)
        traces = simulate(corpus, agent, cfg)
        shifted, segments = to_global_clock(traces, refs)
        try:
            rate = pooled_boundary_rate(traces, gold)
        except UndefinedMetricError:
            rate = None
        rows.append(
            SweepRow(
                stride_s=stride,
                stream_laal_ms=stream_laal_details(shifted, segments).value,
                bleu=bleu([t.hypothesis for t in traces], refs).score,
                boundary_alignment=rate,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Full run


@dataclass
class RunResult:
    run_dir: Path
    corpus: BuiltCorpus
    report: dict
    sweep: list[SweepRow]


def run(manifest: RunManifest) -> RunResult:
    """Build, simulate at the manifest stride, score, and sweep strides.

    Writes ``manifest.json`` (settings and hash) before anything else, then
    ``stats.json``, ``supervision.jsonl``, ``traces.jsonl``, ``report.json``
    and ``sweep.json`` into :attr:`RunManifest.run_dir`.
    """
    out = manifest.run_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_bytes(_dump({"content_hash": manifest.content_hash, **manifest.settings()}))
    corpus = build_corpus(manifest, out)
    traces = simulate(corpus, manifest.agent, manifest.window)
    (out / "traces.jsonl").write_bytes(write_traces(traces))
    refs = {ex.id: ex.target_tokens for ex in corpus.examples}
    gold = {ex.id: [c.end for c in ex.chunks] for ex in corpus.examples}
    report = score_traces(traces, refs, gold)
    (out / "report.json").write_bytes(_dump(report))
    sweep = sweep_stride(manifest, corpus=corpus) if corpus.examples else []
    (out / "sweep.json").write_bytes(_dump([asdict(r) for r in sweep]))
    logger.info("run %s written to %s", manifest.content_hash[:16], out)
    return RunResult(out, corpus, report, sweep)
