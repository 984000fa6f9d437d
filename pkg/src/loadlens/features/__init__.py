"""Canonical time-series features, eye merging and feature matrices."""

from .catch22 import FEATURE_NAMES, INTEGER_FEATURES, WELCH_CONFIG, catch22_from_z
from .vectors import (
    META_COLUMNS,
    N_FEATURES,
    FeatureMatrix,
    FeatureMode,
    FeatureVector,
    MergeMode,
    RowKey,
    build_feature_matrix,
    concat_rows,
    extract_catch22,
    feature_histogram_mode,
    feature_longstretch_above_mean,
    feature_pnn40,
    feature_trev,
    merge_eyes,
    raw_representation,
    zscore_valid,
)

__all__ = [
    "FEATURE_NAMES",
    "INTEGER_FEATURES",
    "META_COLUMNS",
    "N_FEATURES",
    "WELCH_CONFIG",
    "FeatureMatrix",
    "FeatureMode",
    "FeatureVector",
    "MergeMode",
    "RowKey",
    "build_feature_matrix",
    "catch22_from_z",
    "concat_rows",
    "extract_catch22",
    "feature_histogram_mode",
    "feature_longstretch_above_mean",
    "feature_pnn40",
    "feature_trev",
    "merge_eyes",
    "raw_representation",
    "zscore_valid",
]
