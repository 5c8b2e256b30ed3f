"""Rank-based feature normalization and multi-class score re-ranking."""

from .core import (
    FormatError,
    MatrixError,
    as_matrix,
    read_labels,
    read_matrix,
    validate_labels,
    validate_matrix,
    write_labels,
    write_matrix,
)
from .normalize import (
    L2,
    NormalizationPipeline,
    Power,
    RankApprox,
    RankExact,
    RankReference,
    TiePolicy,
    WithinGroupRank,
    apply_pipeline,
    fit_rank_reference,
    l2_normalize,
    power_normalize,
    rank_normalize_approx,
    rank_normalize_exact,
    within_group_rank_normalize,
)
from .rerank import MirParams, MirTrace, minmax_normalize_scores, mir_rerank, mir_trace, rolloff_profile
from .classify import LinearModel, TrainParams, loss_and_gradient, predict_scores, train_ovr_linear
from .evaluate import (
    Histogram,
    average_precision,
    column_std_profile,
    cosine_similarity_stats,
    mean_average_precision,
    per_class_average_precision,
    value_histogram,
)
from .synth import SynthParams, benchmark_split, generate_sparse_bursty

__version__ = "0.1.0"
