"""Scoring extracted records against reference annotations."""

from arete.validation.levenshtein import fold, levenshtein, mean_min_levenshtein, similarity
from arete.validation.matching import (
    MatchedPair,
    MatchSet,
    distance_weighted_metrics,
    match_records,
    pair_weight,
    pair_weights,
    weighted_counts,
)
from arete.validation.metrics import (
    ConfusionCounts,
    MetricSet,
    RowScore,
    ScoredRow,
    confusion_metrics,
    f1_score,
    format_metric,
    read_scored_rows,
    score_obs,
    score_pred,
    weighted_f1,
)
from arete.validation.report import (
    ValidationReport,
    ValidationSummary,
    performance_report,
    render_summary,
    species_slug,
    summarize,
)

__all__ = [
    "ConfusionCounts", "MatchSet", "MatchedPair", "MetricSet", "RowScore", "ScoredRow",
    "ValidationReport", "ValidationSummary", "confusion_metrics", "distance_weighted_metrics",
    "f1_score", "fold", "format_metric", "levenshtein", "match_records", "mean_min_levenshtein",
    "pair_weight", "pair_weights", "performance_report", "read_scored_rows", "render_summary",
    "score_obs", "score_pred", "similarity", "species_slug", "summarize", "weighted_counts",
    "weighted_f1",
]
