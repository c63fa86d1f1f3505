"""County-level food perception gap analytics.

Human hashtags and machine tags on geo-located food images are turned into
per-county feature vectors (gap, human-only, machine-only, and conditional
subjective-label probabilities) and correlated with county health metrics.
"""

from .gap import FeatureMatrix, aggregate, image_distributions, image_gap
from .geo import CountyShape, GeoPoint, SpatialIndex, assign_county, contains, load_shapes
from .ingest import CorpusConfig, FilterReport, HealthTable, Post, build_corpus, parse_health, parse_posts
from .report import RankedTable, emit, rank
from .stats import benjamini_hochberg, boost, correlate, cv_correlation, make_folds, p_value, pearson, subjective_boost
from .subjective import CondProbMatrix, conditional_probs, impute
from .vocab import Tag, Vocabulary, load_vocabulary, normalize_tag

__all__ = [
    "FeatureMatrix", "aggregate", "image_distributions", "image_gap",
    "CountyShape", "GeoPoint", "SpatialIndex", "assign_county", "contains", "load_shapes",
    "CorpusConfig", "FilterReport", "HealthTable", "Post", "build_corpus", "parse_health",
    "parse_posts", "RankedTable", "emit", "rank",
    "benjamini_hochberg", "boost", "correlate", "cv_correlation", "make_folds", "p_value",
    "pearson", "subjective_boost", "CondProbMatrix", "conditional_probs", "impute",
    "Tag", "Vocabulary", "load_vocabulary", "normalize_tag",
]

__version__ = "0.1.0"
