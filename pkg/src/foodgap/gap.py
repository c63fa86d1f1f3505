"""Per-image tag distributions, perception-gap vectors and county aggregation.

Distributions and gaps are sparse ``{tag_id: value}`` dicts; zero entries
are never stored.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FAMILIES = ("gap", "human", "machine")
WEIGHTINGS = ("uniform", "score")


def _uniform(ids):
    ids = sorted(set(ids))
    return {i: 1.0 / len(ids) for i in ids}


def image_distributions(post, vocab, weighting="uniform"):
    """Normalized (human, machine) distributions over the vocabulary.

    Returns None when either side has no vocabulary tag. Human tags are
    always equally weighted; machine tags are equal or score-proportional.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    human_ids = vocab.ids(post.human_tags_raw)
    machine = [(vocab.get(t), s) for t, s in post.machine_tags if t in vocab]
    if not human_ids or not machine:
        return None
    human = _uniform(human_ids)
    scores = [s for _, s in machine]
    if weighting == "score" and all(s is not None for s in scores) and math.fsum(scores) > 0:
        total = math.fsum(scores)
        mach = {i: s / total for i, s in machine if s > 0}
    else:
        mach = _uniform(i for i, _ in machine)
    return human, mach


def image_gap(human, machine):
    """Signed gap machine - human over the union support, zeros dropped."""
    out = {}
    for i in set(human) | set(machine):
        v = machine.get(i, 0.0) - human.get(i, 0.0)
        if v != 0.0:
            out[i] = v
    return out


def image_vector(post, vocab, family, weighting="uniform"):
    """The per-image vector a feature family aggregates, or None if invalid."""
    dists = image_distributions(post, vocab, weighting)
    if dists is None:
        return None
    human, machine = dists
    if family == "gap":
        return image_gap(human, machine)
    if family == "human":
        return human
    if family == "machine":
        return machine
    raise ValueError(f"unknown family {family!r}")


def sparse_mean(vectors):
    """Entrywise mean of sparse vectors (absent = 0), compensated sums.

    ``math.fsum`` is exactly rounded, so the result does not depend on the
    order of ``vectors``.
    """
    n = len(vectors)
    cols = defaultdict(list)
    for vec in vectors:
        for i, v in vec.items():
            cols[i].append(v)
    out = {}
    for i in sorted(cols):
        v = math.fsum(cols[i]) / n
        if v != 0.0:
            out[i] = v
    return out


@dataclass
class FeatureMatrix:
    family: str
    tags: tuple  # column texts, indexed by tag id
    rows: dict  # fips -> {tag_id: value}
    support: dict = field(default_factory=dict)  # tag_id -> #counties with nonzero entry
    missing: tuple = ()  # counties with no valid image

    @property
    def counties(self):
        return sorted(self.rows)

    def dense(self, counties=None):
        counties = self.counties if counties is None else counties
        out = np.zeros((len(counties), len(self.tags)))
        for r, c in enumerate(counties):
            for i, v in self.rows[c].items():
                out[r, i] = v
        return out

    def column(self, tag_id, counties=None):
        counties = self.counties if counties is None else counties
        return np.array([self.rows[c].get(tag_id, 0.0) for c in counties])

    def write(self, dest):
        """Matrix CSV (fips x tag) plus ``<stem>.support.csv``."""
        dest = Path(dest)
        with dest.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fips", *self.tags])
            for c in self.counties:
                row = self.rows[c]
                w.writerow([c] + [_fmt(row.get(i, 0.0)) for i in range(len(self.tags))])
        with support_path(dest).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tag", "support"])
            for i, t in enumerate(self.tags):
                w.writerow([t, self.support.get(i, 0)])

    @classmethod
    def read(cls, src, family):
        src = Path(src)
        rows = {}
        with src.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            tags = tuple(header[1:])
            for rec in reader:
                vals = {i: float(v) for i, v in enumerate(rec[1:]) if float(v) != 0.0}
                rows[rec[0]] = vals
        return cls(family, tags, rows, _support(rows))


def support_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".support.csv")


def _fmt(v):
    return "0" if v == 0.0 else repr(float(v))


def _support(rows):
    counts = defaultdict(int)
    for vec in rows.values():
        for i, v in vec.items():
            if v != 0.0:
                counts[i] += 1
    return dict(sorted(counts.items()))


def group_by_county_user(corpus):
    groups = defaultdict(lambda: defaultdict(list))
    for post in corpus:
        groups[post.county][post.user].append(post)
    return groups


def aggregate_families(corpus, vocab, families=FAMILIES, weighting="uniform", threads=1):
    """County feature matrices for several families from one pass over the
    images: per county, the mean over its users of each user's mean image
    vector."""
    for fam in families:
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}")
    groups = group_by_county_user(corpus)

    def county_rows(item):
        county, users = item
        user_vecs = {f: [] for f in families}
        for user in sorted(users):
            per_image = {f: [] for f in families}
            for post in sorted(users[user], key=lambda p: p.id):
                dists = image_distributions(post, vocab, weighting)
                if dists is None:
                    continue
                human, machine = dists
                vecs = {"human": human, "machine": machine}
                if "gap" in families:
                    vecs["gap"] = image_gap(human, machine)
                for f in families:
                    per_image[f].append(vecs[f])
            for f in families:
                if per_image[f]:
                    user_vecs[f].append(sparse_mean(per_image[f]))
        return county, {f: (sparse_mean(v) if v else None) for f, v in user_vecs.items()}

    items = sorted(groups.items())
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(county_rows, items))
    else:
        results = [county_rows(it) for it in items]
    out = {}
    for f in families:
        rows = {c: r[f] for c, r in results if r[f] is not None}
        missing = tuple(c for c, r in results if r[f] is None)
        out[f] = FeatureMatrix(f, tuple(vocab.texts), rows, _support(rows), missing)
    return out


def aggregate(corpus, vocab, family="gap", weighting="uniform", threads=1):
    """County feature matrix for one family (see ``aggregate_families``)."""
    return aggregate_families(corpus, vocab, (family,), weighting, threads)[family]
