"""Syntax-aware chunking and WAIT supervision for simultaneous translation, with a streaming simulator and latency metrics."""

from .aligner import ChunkSegmentation, LexiconTable, align_pair, group_segments, train_lexicon
from .chunker import BoundaryKind, BoundaryReason, Chunk, boundary_candidates, chunk_utterance, fixed_chunks
from .corpus_io import WAIT, AlignmentLink, ParsedUtterance, Token, parse_conllu, parse_pharaoh
from .metrics import average_lagging, bleu, boundary_alignment_rate, laal, stream_laal
from .pipeline import RunManifest, build_corpus, run, sweep_stride
from .stream_sim import (
    STRIDE_SWEEP,
    SimulationTrace,
    WindowConfig,
    fixed_length_agent,
    full_wait_agent,
    oracle_agent,
    run_simulation,
    wait_k_agent,
)
from .supervision import ChunkAlignedExample, build_example, invert_reorder, reorder_target

__version__ = "0.1.0"
