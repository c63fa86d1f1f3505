"""Correlation machinery: Pearson r, t-test p-values, k-fold CV, BH, boost.

Undefined correlations (a constant input) are represented by NaN and
propagate through p-values and boosts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

BH_GROUPINGS = ("metric-family", "metric", "family", "global")


def pearson(x, y):
    """Sample Pearson correlation; NaN if either vector is constant or its
    spread is not representable."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d vectors of equal length")
    if len(x) < 3:
        raise ValueError("pearson needs at least 3 observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    if not 0.0 < den < math.inf:
        # spread too small (or large) to represent
        return math.nan
    r = float(np.dot(dx, dy)) / den
    return min(1.0, max(-1.0, r))


def pearson_columns(X, y):
    """Pearson r of every column of ``X`` against ``y`` (NaN for constants)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 3:
        raise ValueError("pearson needs at least 3 observations")
    out = np.full(X.shape[1], np.nan)
    if np.ptp(y) == 0:
        return out
    ok = np.ptp(X, axis=0) > 0
    dX = X[:, ok] - X[:, ok].mean(axis=0)
    dy = y - y.mean()
    num = dy @ dX
    den = np.sqrt(np.einsum("ij,ij->j", dX, dX) * float(dy @ dy))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.clip(num / den, -1.0, 1.0)
    r[~((den > 0) & np.isfinite(den))] = np.nan
    out[ok] = r
    return out


def p_value(r, n):
    """Two-sided p of H0: rho = 0, t = r*sqrt((n-2)/(1-r^2)) on n-2 df."""
    if n < 3:
        raise ValueError("p_value needs n >= 3")
    if math.isnan(r):
        return math.nan
    if abs(r) >= 1.0:
        return 0.0
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    # P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    return float(special.betainc(df / 2.0, 0.5, df / (df + t2)))


def p_values(r, n):
    r = np.asarray(r, dtype=float)
    out = np.full(r.shape, np.nan)
    ok = ~np.isnan(r)
    rr = r[ok]
    df = n - 2
    with np.errstate(divide="ignore"):
        t2 = np.where(np.abs(rr) >= 1.0, np.inf, rr * rr * df / (1.0 - rr * rr))
    out[ok] = special.betainc(df / 2.0, 0.5, df / (df + t2))
    return out


@dataclass(frozen=True)
class FoldSpec:
    k: int
    assignment: dict  # fips -> fold index
    seed: int

    @property
    def counties(self):
        return sorted(self.assignment)

    def fold_ids(self, counties=None):
        counties = self.counties if counties is None else counties
        return np.array([self.assignment[c] for c in counties])

    def sizes(self):
        return np.bincount(self.fold_ids(), minlength=self.k)


def make_folds(counties, k=10, seed=0):
    """Seeded shuffle of the sorted county list, dealt round-robin."""
    counties = sorted(counties)
    if k < 2 or k > len(counties):
        raise ValueError(f"cannot make {k} folds from {len(counties)} counties")
    order = np.random.default_rng(seed).permutation(len(counties))
    assignment = {counties[j]: pos % k for pos, j in enumerate(order)}
    return FoldSpec(k, dict(sorted(assignment.items())), seed)


def _fold_summary(rs, k, se_mode):
    mean = rs.mean(axis=0)
    sd = rs.std(axis=0, ddof=1)
    se = sd / math.sqrt(k) if se_mode == "sem" else sd
    return mean, se


def cv_correlation(feature, target, fold_ids, k=None, se_mode="sem"):
    """Mean and standard error of r over k leave-one-fold-out fits.

    Returns (nan, nan) if any training split gives an undefined r.
    """
    x = np.asarray(feature, dtype=float)
    y = np.asarray(target, dtype=float)
    fold_ids = np.asarray(fold_ids)
    k = int(fold_ids.max()) + 1 if k is None else k
    rs = np.array([pearson(x[fold_ids != f], y[fold_ids != f]) for f in range(k)])
    if np.isnan(rs).any():
        return math.nan, math.nan
    mean, se = _fold_summary(rs, k, se_mode)
    return float(mean), float(se)


def cv_columns(X, y, fold_ids, k, se_mode="sem"):
    """Vectorized ``cv_correlation`` over the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rs = np.vstack([pearson_columns(X[fold_ids != f], y[fold_ids != f]) for f in range(k)])
    bad = np.isnan(rs).any(axis=0)
    mean, se = _fold_summary(rs, k, se_mode)
    mean[bad] = np.nan
    se[bad] = np.nan
    return mean, se


def benjamini_hochberg(p, alpha=0.05):
    """Step-up BH: reject the k smallest p where k is the largest rank with
    p_(k) <= k * alpha / m. Values tied with the cutoff are all rejected."""
    p = np.asarray(p, dtype=float)
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    ps = np.sort(p)
    below = np.nonzero(ps <= alpha * np.arange(1, m + 1) / m)[0]
    if below.size == 0:
        return np.zeros(m, dtype=bool)
    cutoff = ps[below[-1]]
    return p <= cutoff


def boost(r_gap, r_machine, r_human):
    """|r_gap| - max(|r_machine|, |r_human|); NaN if any input is NaN."""
    if any(math.isnan(v) for v in (r_gap, r_machine, r_human)):
        return math.nan
    return abs(r_gap) - max(abs(r_machine), abs(r_human))


def subjective_boost(r_conditional, r_baseline):
    if math.isnan(r_conditional) or math.isnan(r_baseline):
        return math.nan
    return abs(r_conditional) - abs(r_baseline)


@dataclass
class CorrelationRecord:
    tag: str
    metric: str
    family: str
    mean_r: float
    se_r: float
    r_full: float
    p_raw: float
    significant: bool = False
    boost: float = math.nan

    @property
    def defined(self):
        return not (math.isnan(self.mean_r) or math.isnan(self.r_full))

    FIELDS = ("tag", "metric", "family", "mean_r", "se_r", "r_full", "p_raw",
              "significant", "boost")


@dataclass
class CorrelationResult:
    records: list
    counties: list
    folds: FoldSpec
    baselines: dict = field(default_factory=dict)  # (family, metric) -> (mean_r, se_r, r_full)

    @property
    def n_undefined(self):
        return sum(not r.defined for r in self.records)


@dataclass
class FeatureSet:
    """Dense county x tag features for one family, ready for correlation."""

    family: str
    tags: list
    values: np.ndarray  # rows follow ``counties``
    counties: list
    baseline: np.ndarray | None = None  # subjective families only


def bh_groups(records, grouping):
    if grouping not in BH_GROUPINGS:
        raise ValueError(f"unknown BH grouping {grouping!r}")
    groups = {}
    for n, rec in enumerate(records):
        key = {"metric-family": (rec.metric, rec.family), "metric": (rec.metric,),
               "family": (rec.family,), "global": ()}[grouping]
        groups.setdefault(key, []).append(n)
    return groups


def correlate(feature_sets, health, metrics, k=10, seed=0, alpha=0.05,
              grouping="metric-family", se_mode="sem", threads=1):
    """Correlate every (family, tag) feature with every health metric.

    Counties are those present in every feature set and in ``health``.
    Records come back ordered by (metric, family, tag).
    """
    counties = sorted(set.intersection(*(set(fs.counties) for fs in feature_sets),
                                       set(health.rows)))
    folds = make_folds(counties, k, seed)
    fold_ids = folds.fold_ids(counties)
    n = len(counties)
    aligned = []
    for fs in feature_sets:
        pos = {c: i for i, c in enumerate(fs.counties)}
        rows = [pos[c] for c in counties]
        base = None if fs.baseline is None else fs.baseline[rows]
        aligned.append((fs, fs.values[rows], base))

    def one(job):
        metric, (fs, X, base) = job
        y = np.array(health.vector(metric.key, counties))
        mean, se = cv_columns(X, y, fold_ids, k, se_mode)
        full = pearson_columns(X, y)
        pv = p_values(full, n)
        recs = [CorrelationRecord(t, metric.key, fs.family, float(mean[j]), float(se[j]),
                                  float(full[j]), float(pv[j]))
                for j, t in enumerate(fs.tags)]
        for r in recs:
            if not r.defined:
                r.mean_r = r.se_r = r.r_full = r.p_raw = math.nan
        bl = None
        if base is not None:
            bm, bs = cv_correlation(base, y, fold_ids, k, se_mode)
            bl = (bm, bs, pearson(base, y))
        return metric.key, fs.family, recs, bl

    jobs = [(m, a) for m in metrics for a in aligned]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    by_key = {}
    baselines = {}
    for metric, family, recs, bl in results:
        by_key[(metric, family)] = {r.tag: r for r in recs}
        if bl is not None:
            baselines[(family, metric)] = bl

    records = []
    for (metric, family), recs in by_key.items():
        for tag, rec in recs.items():
            if family == "gap" and (metric, "machine") in by_key and (metric, "human") in by_key:
                m = by_key[(metric, "machine")].get(tag)
                h = by_key[(metric, "human")].get(tag)
                if m is not None and h is not None:
                    rec.boost = boost(rec.mean_r, m.mean_r, h.mean_r)
            elif (family, metric) in baselines:
                rec.boost = subjective_boost(rec.mean_r, baselines[(family, metric)][0])
            records.append(rec)
    records.sort(key=lambda r: (r.metric, r.family, r.tag))

    defined = [r for r in records if r.defined]
    for idx in bh_groups(defined, grouping).values():
        flags = benjamini_hochberg([defined[i].p_raw for i in idx], alpha)
        for i, flag in zip(idx, flags):
            defined[i].significant = bool(flag)
    return CorrelationResult(records, counties, folds, baselines)
