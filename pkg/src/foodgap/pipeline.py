"""In-memory end-to-end analysis (no store directory)."""

from __future__ import annotations

import numpy as np

from . import gap, stats, subjective
from .ingest import CorpusConfig, HealthTable, build_corpus, post_from_record
from .vocab import MetricRegistry, Vocabulary


def feature_sets(corpus, vocab, labels=(), weighting="uniform", threads=1):
    """Dense FeatureSets for gap/human/machine and each subjective label."""
    sets = []
    for fam, fm in gap.aggregate_families(corpus, vocab, gap.FAMILIES, weighting, threads).items():
        sets.append(stats.FeatureSet(fam, list(fm.tags), fm.dense(), fm.counties))
    for lab in labels:
        mat = subjective.impute(subjective.conditional_probs(corpus, lab, vocab))
        cols = mat.columns
        values = (np.column_stack([mat.column(i) for i in cols]) if cols
                  else np.zeros((len(mat.counties), 0)))
        sets.append(stats.FeatureSet(f"subjective:{lab}", [vocab.text(i) for i in cols],
                                     values, mat.counties, mat.baseline_vector()))
    return sets


def analyze_synthetic(data, labels=None, folds=10, seed=0, alpha=0.05,
                      grouping="metric-family", threads=1):
    """Run corpus filters, features and correlation on ``synth.generate`` output.

    Posts keep their generated county (geo assignment is covered by the file
    pipeline). Returns ``(CorrelationResult, FilterReport)``.
    """
    truth = data["truth"]
    vocab = Vocabulary.from_texts(data["vocab"])
    labels = tuple(truth["plan"]["labels"]) if labels is None else tuple(labels)
    metrics = MetricRegistry()
    posts = [post_from_record(r) for r in data["records"]]
    health = HealthTable(data["health"], metrics)
    cfg = CorpusConfig(truth["config"]["min_county_posts"], truth["config"]["min_tag_counties"],
                       threads)
    corpus, rep = build_corpus(posts, None, health, vocab, cfg)
    sets = feature_sets(corpus, vocab, labels, threads=threads)
    result = stats.correlate(sets, health, list(metrics), k=folds, seed=seed, alpha=alpha,
                             grouping=grouping, threads=threads)
    return result, rep
