import json
import shutil

import pytest

from simulchunk.chunker import check_tiling
from simulchunk.corpus_io import WAIT, read_supervision
from simulchunk.errors import ConfigurationError, JoinError
from simulchunk.pipeline import AgentSpec, RunManifest, build_corpus, run, sweep_stride
from simulchunk.supervision import invert_reorder, reorder_target
from synthetic import FIXTURES

INPUTS = {
    "conllu": "fixture.conllu",
    "bitext": "fixture.bitext.tsv",
    "timestamps": "fixture.timestamps.jsonl",
    "links": "fixture.links.pharaoh",
}


def manifest_in(tmp_path, copy=True, **overrides):
    """Write a manifest (and optionally copies of the fixture inputs) into ``tmp_path``."""
    d = dict(INPUTS)
    if copy:
        for name in INPUTS.values():
            shutil.copy(FIXTURES / name, tmp_path / name)
    else:
        d = {k: str(FIXTURES / v) for k, v in d.items()}
    d["output_dir"] = "out"
    d.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps({k: v for k, v in d.items() if v is not None}))
    return path


def test_fixture_build(tmp_path):
    m = RunManifest.load(manifest_in(tmp_path))
    corpus = build_corpus(m, tmp_path / "build")
    data = (tmp_path / "build" / "supervision.jsonl").read_bytes()
    assert data.decode().count("\n") == 12
    examples = read_supervision(data)
    for ex in examples:
        assert check_tiling(ex.chunks, ex.n_source, 7) == []
        assert ex.segmentation.is_partition(len(ex.target_tokens))
        assert invert_reorder(reorder_target(ex)) == ex.target_tokens
        assert reorder_target(ex).tokens.count(WAIT) == sum(1 for s in ex.segmentation.segments if not s)
    stats = json.loads((tmp_path / "build" / "stats.json").read_text())
    assert stats == corpus.stats
    assert stats["utterances"] == 12 and stats["failures"] == []
    empty = sum(1 for ex in examples for s in ex.segmentation.segments if not s)
    n_chunks = sum(len(ex.chunks) for ex in examples)
    assert stats["wait_rate"] == pytest.approx(empty / n_chunks)
    assert sum(stats["chunk_length_histogram"].values()) == n_chunks == stats["chunks"]
    assert 0 < stats["alignment_coverage"]["target"] <= 1


def test_empty_corpus(tmp_path):
    for name in INPUTS.values():
        (tmp_path / name).write_text("")
    m = RunManifest.load(manifest_in(tmp_path, copy=False, **{k: str(tmp_path / v) for k, v in INPUTS.items()}))
    corpus = build_corpus(m, tmp_path / "b")
    assert corpus.examples == []
    assert (tmp_path / "b" / "supervision.jsonl").read_bytes() == b""
    assert corpus.stats["chunks"] == 0 and corpus.stats["wait_rate"] == 0.0
    assert corpus.stats["chunk_length_histogram"] == {}
    result = run(m)
    assert result.sweep == []


def test_span_one_histogram(tmp_path):
    m = RunManifest.load(manifest_in(tmp_path, chunker={"max_span": 1}))
    stats = build_corpus(m).stats
    assert stats["chunk_length_histogram"] == {"1": stats["chunks"]}


def test_join_error_lists_ids(tmp_path):
    path = manifest_in(tmp_path)
    bitext = (tmp_path / "fixture.bitext.tsv").read_text().splitlines()
    (tmp_path / "fixture.bitext.tsv").write_text("\n".join(bitext[:-1] + ["zz\ta b\tc d"]) + "\n")
    m = RunManifest.load(path)
    with pytest.raises(JoinError) as err:
        build_corpus(m, tmp_path / "b")
    assert err.value.ids == ["s12", "zz"]
    stats = json.loads((tmp_path / "b" / "stats.json").read_text())
    assert stats["failures"][0]["ids"] == ["s12", "zz"]
    assert not (tmp_path / "b" / "supervision.jsonl").exists()


def test_surface_mismatch_is_reported(tmp_path):
    path = manifest_in(tmp_path)
    text = (tmp_path / "fixture.bitext.tsv").read_text().replace("The quick brown", "The fast brown", 1)
    (tmp_path / "fixture.bitext.tsv").write_text(text)
    with pytest.raises(JoinError) as err:
        build_corpus(RunManifest.load(path), tmp_path / "b")
    assert err.value.ids == ["s01"]
    stats = json.loads((tmp_path / "b" / "stats.json").read_text())
    assert stats["utterances"] == 11
    assert stats["failures"][0]["stage"] == "build"


def test_trained_aligner_path(tmp_path):
    m = RunManifest.load(manifest_in(tmp_path, links=None))
    assert m.links is None
    corpus = build_corpus(m)
    assert len(corpus.examples) == 12
    assert all(ex.segmentation.is_partition(len(ex.target_tokens)) for ex in corpus.examples)


def test_manifest_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        RunManifest.load(manifest_in(tmp_path, conllu="missing.conllu"))
    with pytest.raises(ConfigurationError):
        RunManifest.load(manifest_in(tmp_path, agent={"kind": "psychic"}))
    with pytest.raises(ConfigurationError):
        RunManifest.load(manifest_in(tmp_path, window={"stride_s": 9.0}))
    with pytest.raises(ConfigurationError):
        RunManifest.load(manifest_in(tmp_path, strides=[0.5, 12.0]))
    with pytest.raises(ConfigurationError):
        RunManifest.load(manifest_in(tmp_path, aligner={"threshold": 2}))


def test_hash_tracks_content_not_location(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    ha = RunManifest.load(manifest_in(a)).content_hash
    hb = RunManifest.load(manifest_in(b)).content_hash
    assert ha == hb
    (b / "fixture.bitext.tsv").write_text((b / "fixture.bitext.tsv").read_text() + "\n")
    assert RunManifest.load(b / "run.json").content_hash != ha
    assert RunManifest.load(manifest_in(b, chunker={"max_span": 5})).content_hash != ha


def test_sweep_oracle(tmp_path):
    m = RunManifest.load(manifest_in(tmp_path))
    rows = sweep_stride(m, strides=[3.0, 0.5, 1.0, 2.0])
    assert [r.stride_s for r in rows] == [0.5, 1.0, 2.0, 3.0]
    lat = [r.stream_laal_ms for r in rows]
    assert all(a <= b for a, b in zip(lat, lat[1:]))
    assert len({round(r.bleu, 9) for r in rows}) == 1
    assert all(r.boundary_alignment == 1.0 for r in rows)


def test_fixed_agent_below_oracle_at_two_seconds(tmp_path):
    m = RunManifest.load(manifest_in(tmp_path))
    corpus = build_corpus(m)
    [oracle] = sweep_stride(m, [2.0], corpus, AgentSpec("oracle"))
    [fixed] = sweep_stride(m, [2.0], corpus, AgentSpec("fixed", span=7))
    assert fixed.boundary_alignment < oracle.boundary_alignment == 1.0


def test_wait_k_sweep_runs(tmp_path):
    m = RunManifest.load(manifest_in(tmp_path, agent={"kind": "wait-k", "k": 3}))
    rows = sweep_stride(m)
    assert len(rows) == 7
    assert all(r.bleu == pytest.approx(rows[0].bleu) for r in rows)


def test_run_is_reproducible(tmp_path):
    path = manifest_in(tmp_path)
    first = run(RunManifest.load(path))
    snapshot = {p.name: p.read_bytes() for p in first.run_dir.iterdir()}
    assert set(snapshot) == {"manifest.json", "stats.json", "supervision.jsonl", "traces.jsonl", "report.json", "sweep.json"}
    shutil.rmtree(first.run_dir)
    second = run(RunManifest.load(path))
    assert second.run_dir == first.run_dir
    assert {p.name: p.read_bytes() for p in second.run_dir.iterdir()} == snapshot
    recorded = json.loads(snapshot["manifest.json"])
    assert first.run_dir.name == recorded["content_hash"][:16]


def test_manifest_written_before_failure(tmp_path):
    path = manifest_in(tmp_path)
    (tmp_path / "fixture.timestamps.jsonl").write_text(
        "\n".join((tmp_path / "fixture.timestamps.jsonl").read_text().splitlines()[1:]) + "\n"
    )
    m = RunManifest.load(path)
    with pytest.raises(JoinError):
        run(m)
    assert (m.run_dir / "manifest.json").exists()
    assert json.loads((m.run_dir / "stats.json").read_text())["failures"][0]["ids"] == ["s01"]


def test_report_contents(tmp_path):
    result = run(RunManifest.load(manifest_in(tmp_path)))
    corpus = result.report["corpus"]
    assert corpus["boundary_alignment"] == 1.0
    assert corpus["stream_laal_skipped"] == []
    assert len(result.report["utterances"]) == 12
    assert {"al_ms", "laal_ms", "bleu", "bleu_smoothed", "tau"} <= set(result.report["utterances"][0])
