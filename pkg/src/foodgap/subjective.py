"""County-level P(label | machine tag) with cross-county imputation."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .gap import _fmt, group_by_county_user


@dataclass
class CondProbMatrix:
    label: str
    tags: tuple  # vocabulary texts, indexed by tag id
    rows: dict  # fips -> {tag_id: P(label | tag)}; undefined entries absent
    baseline: dict  # fips -> P(label)
    imputed: frozenset = frozenset()  # {(fips, tag_id)}
    dropped: tuple = ()  # tag ids observed in no county

    @property
    def counties(self):
        return sorted(self.baseline)

    @property
    def columns(self):
        """Tag ids kept in the matrix (observed in at least one county)."""
        seen = set()
        for vals in self.rows.values():
            seen.update(vals)
        return sorted(seen)

    def missing(self):
        cols = self.columns
        return [(c, i) for c in self.counties for i in cols if i not in self.rows.get(c, {})]

    def column(self, tag_id, counties=None):
        counties = self.counties if counties is None else counties
        return np.array([self.rows[c].get(tag_id, np.nan) for c in counties])

    def baseline_vector(self, counties=None):
        counties = self.counties if counties is None else counties
        return np.array([self.baseline[c] for c in counties])

    def write(self, dest):
        """Matrix CSV plus ``.mask.csv`` (1 = imputed) and ``.baseline.csv``."""
        dest = Path(dest)
        cols = self.columns
        stem = dest.with_name(dest.stem)
        with dest.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fips"] + [self.tags[i] for i in cols])
            for c in self.counties:
                row = self.rows.get(c, {})
                w.writerow([c] + [_fmt(row[i]) if i in row else "" for i in cols])
        with Path(f"{stem}.mask.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fips"] + [self.tags[i] for i in cols])
            for c in self.counties:
                w.writerow([c] + [int((c, i) in self.imputed) for i in cols])
        with Path(f"{stem}.baseline.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fips", self.label])
            for c in self.counties:
                w.writerow([c, _fmt(self.baseline[c])])

    @classmethod
    def read(cls, src, label, vocab_texts):
        src = Path(src)
        stem = src.with_name(src.stem)
        index = {t: i for i, t in enumerate(vocab_texts)}
        rows, imputed, baseline = {}, set(), {}
        with src.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            ids = [index[t] for t in next(reader)[1:]]
            for rec in reader:
                rows[rec[0]] = {i: float(v) for i, v in zip(ids, rec[1:]) if v != ""}
        with Path(f"{stem}.mask.csv").open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for rec in reader:
                imputed.update((rec[0], i) for i, v in zip(ids, rec[1:]) if v == "1")
        with Path(f"{stem}.baseline.csv").open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for rec in reader:
                baseline[rec[0]] = float(rec[1])
        dropped = tuple(i for i in range(len(vocab_texts)) if i not in set(ids))
        return cls(label, tuple(vocab_texts), rows, baseline, frozenset(imputed), dropped)


def _mean(values):
    return math.fsum(values) / len(values)


def conditional_probs(corpus, label, vocab):
    """Observed P(label | machine tag) per county, before imputation.

    An image contributes an indicator (label among its human tags) to every
    vocabulary machine tag it carries. Indicators are averaged per
    (county, user, tag), then over the users of the county that have the tag.
    """
    groups = group_by_county_user(corpus)
    rows, baseline = {}, {}
    for county in sorted(groups):
        users = groups[county]
        per_tag = defaultdict(list)
        user_rates = []
        for user in sorted(users):
            tag_hits = defaultdict(list)
            flags = []
            for post in sorted(users[user], key=lambda p: p.id):
                ids = sorted(set(vocab.ids(post.machine_texts)))
                if not ids or not vocab.ids(post.human_tags_raw):
                    continue
                hit = 1.0 if label in post.human_tags_raw else 0.0
                flags.append(hit)
                for i in ids:
                    tag_hits[i].append(hit)
            if not flags:
                continue
            user_rates.append(_mean(flags))
            for i, hits in tag_hits.items():
                per_tag[i].append(_mean(hits))
        if not user_rates:
            continue
        baseline[county] = _mean(user_rates)
        rows[county] = {i: _mean(v) for i, v in sorted(per_tag.items())}
    observed = set()
    for vals in rows.values():
        observed.update(vals)
    dropped = tuple(i for i in range(len(vocab)) if i not in observed)
    return CondProbMatrix(label, tuple(vocab.texts), rows, baseline, frozenset(), dropped)


def impute(matrix: CondProbMatrix) -> CondProbMatrix:
    """Fill undefined (county, tag) entries with the tag's mean over the
    counties where it is defined."""
    observed = defaultdict(list)
    for c in matrix.counties:
        for i, v in matrix.rows.get(c, {}).items():
            if (c, i) not in matrix.imputed:
                observed[i].append(v)
    fill = {i: _mean(vs) for i, vs in observed.items()}
    rows = {c: dict(matrix.rows.get(c, {})) for c in matrix.counties}
    imputed = set(matrix.imputed)
    for c in matrix.counties:
        row = rows[c]
        for i in sorted(fill):
            if i not in row:
                row[i] = fill[i]
                imputed.add((c, i))
            elif (c, i) in imputed:
                row[i] = fill[i]
        rows[c] = dict(sorted(row.items()))
    return replace(matrix, rows=rows, imputed=frozenset(imputed))


def subjective_features(corpus, labels, vocab):
    return {lab: impute(conditional_probs(corpus, lab, vocab)) for lab in labels}
