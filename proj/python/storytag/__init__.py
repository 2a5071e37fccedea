"""Multi-view story tagging from plot synopses and reviews."""

from ._core import (
    CheckpointError,
    CorpusError,
    MovieRecord,
    Tagger,
    TrainingError,
    cutoff_index,
    load_dataset,
    local_slope,
    micro_f1,
    pagerank,
    sentence_similarity,
    standard_tags,
    summarize_reviews,
    tags_learned,
    top_k,
    train,
)

__all__ = [
    "CheckpointError",
    "CorpusError",
    "MovieRecord",
    "Tagger",
    "TrainingError",
    "cutoff_index",
    "load_dataset",
    "local_slope",
    "micro_f1",
    "pagerank",
    "sentence_similarity",
    "standard_tags",
    "summarize_reviews",
    "tags_learned",
    "top_k",
    "train",
]
