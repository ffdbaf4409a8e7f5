"""Produces the model-derived inputs the metrics engine consumes: image
embeddings (CXGB files), image-text alignment scores, and pairwise
re-identification scores."""

__version__ = "0.1.0"

from .jobs import (
    AlignmentJob,
    ExtractionJob,
    ReidJob,
    run_alignment,
    run_extraction,
    run_job_file,
    run_reid,
)
from .registry import register_encoder, resolve_encoder, resolve_reid_scorer, resolve_text_embedder
