"""Sweep the encoder stride and compare the chunk replay agent with fixed-span chunking.

    python3 demos/stride_sweep.py
"""

from pathlib import Path

from simulchunk.pipeline import AgentSpec, RunManifest, build_corpus, sweep_stride
from simulchunk.stream_sim import STRIDE_SWEEP

MANIFEST = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "run.json"


def main() -> None:
    manifest = RunManifest.load(MANIFEST)
    corpus = build_corpus(manifest)
    print(f"{'agent':<10} {'stride':>7} {'StreamLAAL':>11} {'BLEU':>7} {'boundary':>9}")
    for spec in (AgentSpec("oracle"), AgentSpec("fixed", span=7), AgentSpec("wait-k", k=3)):
        for row in sweep_stride(manifest, list(STRIDE_SWEEP), corpus, spec):
            print(f"{spec.kind:<10} {row.stride_s:>6.2f}s {row.stream_laal_ms:>9.0f}ms "
                  f"{row.bleu:>7.2f} {row.boundary_alignment:>9.1%}")


if __name__ == "__main__":
    main()
