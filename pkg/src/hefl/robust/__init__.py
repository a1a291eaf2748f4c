"""Robust selection rules and masked encrypted aggregation."""

from .mask import (
    KgcDecision,
    SelectionMask,
    aggregation_depth,
    build_mask,
    mask_matrix,
    masked_aggregate,
    masked_sort_round,
    mean_aggregate,
)
from .rules import (
    RULES,
    SCORE_MODES,
    DistanceTable,
    RuleConfig,
    SelectionResult,
    krum_scores,
    krum_select,
    median_rank,
    median_select,
    multi_krum_select,
    select,
    sumdis_select,
)

__all__ = [
    "DistanceTable", "KgcDecision", "RULES", "RuleConfig", "SCORE_MODES", "SelectionMask",
    "SelectionResult", "aggregation_depth", "build_mask", "krum_scores", "krum_select", "mask_matrix",
    "masked_aggregate", "masked_sort_round", "mean_aggregate", "median_rank", "median_select",
    "multi_krum_select", "select", "sumdis_select",
]
