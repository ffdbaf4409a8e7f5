"""Evaluation engine for generative chest-radiograph models.

Computes distributional fidelity (Frechet distance, kernel MMD), manifold
mode-coverage metrics, re-identification risk audits, per-condition
stratified analysis, and cross-model rank/correlation reports over
externally produced embeddings, images, and manifests.
"""

__version__ = "0.1.0"

from .conditional_analysis import (
    ConditionalConfig,
    ConditionalReport,
    Stratum,
    conditional_metrics,
    prevalence_counts,
    stratify,
)
from .distribution_stats import (
    FidelityResult,
    GaussianStats,
    KidConfig,
    KidResult,
    fit_gaussian,
    frechet_distance,
    kid,
)
from .leaderboard import (
    MetricTable,
    RankTable,
    aggregate_ranks,
    emit_report,
    mean_alignment,
    pearson,
    rank_metric,
    read_metric_table,
    spearman,
)
from .manifest_io import (
    LABEL_NAMES,
    EmbeddingMatrix,
    GrayImage,
    SampleManifest,
    SampleRecord,
    load_gray_image,
    parse_manifest,
    read_embeddings,
    write_embeddings,
)
from .manifold_metrics import PrdcConfig, PrdcResult, knn_radii, prdc
from .privacy_audit import (
    PrivacyConfig,
    PrivacyPairRecord,
    PrivacySummary,
    audit_privacy,
    latent_distance,
    per_prompt_extrema,
    pixel_distance,
    read_score_csv,
    summarize_privacy,
)
