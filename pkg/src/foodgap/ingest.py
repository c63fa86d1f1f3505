"""Post corpus and health-table parsing plus the corpus filter pipeline."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .geo import GeoPoint, InvalidPoint, assign_county
from .vocab import MetricRegistry, VocabularyError, normalize_fips, normalize_tag

log = logging.getLogger(__name__)

DEFAULT_TOPK = 30


class DataError(ValueError):
    """Input data that cannot be used (fatal)."""


class EmptyCorpusError(DataError):
    def __init__(self, stage):
        super().__init__(f"empty-corpus: no posts left after stage {stage!r}")
        self.stage = stage


@dataclass
class Post:
    id: str
    user: str
    when: datetime
    where: GeoPoint
    human_tags_raw: tuple
    machine_tags: tuple  # ((tag, score or None), ...), best first
    county: str | None = None

    @property
    def machine_texts(self):
        return tuple(t for t, _ in self.machine_tags)

    def to_json(self):
        rec = {
            "id": self.id,
            "user": self.user,
            "ts": self.when.isoformat().replace("+00:00", "Z"),
            "lat": self.where.lat,
            "lon": self.where.lon,
            "human_tags": list(self.human_tags_raw),
            "machine_tags": [{"tag": t} if s is None else {"tag": t, "score": s}
                             for t, s in self.machine_tags],
        }
        if self.county is not None:
            rec["county"] = self.county
        return rec


@dataclass
class ParseReport:
    read: int = 0
    valid: int = 0
    skipped: Counter = field(default_factory=Counter)


def _parse_ts(raw):
    if isinstance(raw, bool) or raw is None:
        raise ValueError
    if isinstance(raw, (int, float)):
        return datetime.fromtimestamp(raw, tz=timezone.utc)
    text = str(raw).strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _dedupe(tags):
    seen = []
    for t in tags:
        if t not in seen:
            seen.append(t)
    return tuple(seen)


def parse_machine_tags(raw, topk=DEFAULT_TOPK):
    """Normalize machine tags and keep the ``topk`` best.

    Scores are optional; if any entry lacks one, the given order is the
    ranking. A tag repeated in the list keeps its best position.
    """
    entries = []
    for item in raw:
        if isinstance(item, str):
            tag, score = item, None
        else:
            tag, score = item.get("tag"), item.get("score")
        tag = normalize_tag(tag)
        if tag is None:
            continue
        if score is not None:
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise ValueError("bad-score")
            score = float(score)
            if not (0.0 <= score <= 1.0):
                raise ValueError("bad-score")
        entries.append((tag, score))
    if entries and all(s is not None for _, s in entries):
        # stable: equal scores keep file order
        entries.sort(key=lambda e: -e[1])
    else:
        entries = [(t, None) for t, _ in entries]
    out, seen = [], set()
    for tag, score in entries:
        if tag not in seen:
            seen.add(tag)
            out.append((tag, score))
    return tuple(out[:topk])


def post_from_record(rec, topk=DEFAULT_TOPK):
    """Build a Post from one decoded record; ValueError(reason) if unusable."""
    if not isinstance(rec, dict):
        raise ValueError("not-an-object")
    pid, user = rec.get("id"), rec.get("user")
    if pid in (None, "") or user in (None, ""):
        raise ValueError("missing-field")
    lat, lon = rec.get("lat"), rec.get("lon")
    if lat is None or lon is None:
        raise ValueError("no-geo")
    try:
        where = GeoPoint(float(lon), float(lat))
    except (InvalidPoint, TypeError, ValueError):
        raise ValueError("bad-geo") from None
    if where.lon == 0.0 and where.lat == 0.0:
        raise ValueError("bad-geo")
    try:
        when = _parse_ts(rec.get("ts"))
    except (ValueError, TypeError, OverflowError, OSError):
        raise ValueError("bad-ts") from None
    human = rec.get("human_tags") or []
    machine = rec.get("machine_tags") or []
    if not isinstance(human, list) or not isinstance(machine, list):
        raise ValueError("bad-tags")
    human = _dedupe(t for t in map(normalize_tag, human) if t is not None)
    try:
        machine = parse_machine_tags(machine, topk)
    except (AttributeError, TypeError):
        raise ValueError("bad-tags") from None
    county = rec.get("county")
    if county is not None:
        try:
            county = normalize_fips(county)
        except VocabularyError:
            raise ValueError("bad-county") from None
    return Post(str(pid), str(user), when, where, human, machine, county)


def parse_posts(source, topk=DEFAULT_TOPK):
    """Read a JSON-lines post file.

    Returns ``(posts, ParseReport)``; bad lines are skipped and tallied by
    reason. Only an unreadable file is fatal.
    """
    path = Path(source)
    report = ParseReport()
    posts, seen = [], set()
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read posts file {path}: {exc}") from None
    with fh:
        for line in fh:
            if not line.strip():
                continue
            report.read += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                report.skipped["bad-json"] += 1
                continue
            try:
                post = post_from_record(rec, topk)
            except ValueError as exc:
                report.skipped[str(exc)] += 1
                continue
            if post.id in seen:
                report.skipped["duplicate-id"] += 1
                continue
            seen.add(post.id)
            posts.append(post)
    report.valid = len(posts)
    if report.skipped:
        log.info("%s: skipped %d lines %s", path, sum(report.skipped.values()),
                 dict(sorted(report.skipped.items())))
    return posts, report


def write_posts(posts, dest):
    with Path(dest).open("w", encoding="utf-8") as fh:
        for p in posts:
            fh.write(json.dumps(p.to_json(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


HEALTH_COLUMNS = ("fips", "smokers", "obesity", "food_env_index", "phys_inactive",
                  "excess_drink", "alc_driving_deaths", "diabetes", "food_insecure",
                  "limited_access")


@dataclass
class HealthTable:
    rows: dict  # fips -> {metric key: value}
    metrics: MetricRegistry = field(default_factory=MetricRegistry)
    excluded: int = 0

    def __contains__(self, fips):
        return fips in self.rows

    def __len__(self):
        return len(self.rows)

    def vector(self, key, counties):
        return [self.rows[c][key] for c in counties]

    def write(self, dest):
        with Path(dest).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fips"] + [m.column for m in self.metrics])
            for fips in sorted(self.rows):
                w.writerow([fips] + [repr(self.rows[fips][m.key]) for m in self.metrics])


def parse_health(source, metrics: MetricRegistry | None = None):
    """Read the county health CSV; rows missing any metric are excluded."""
    metrics = metrics or MetricRegistry()
    path = Path(source)
    rows = {}
    excluded = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        missing_cols = [m.column for m in metrics if m.column not in fields]
        if "fips" not in fields or missing_cols:
            raise DataError(f"{path}: health header lacks {(['fips'] if 'fips' not in fields else []) + missing_cols}")
        for lineno, raw in enumerate(reader, start=2):
            row = {(k or "").strip(): v for k, v in raw.items()}
            try:
                fips = normalize_fips(row["fips"])
            except VocabularyError:
                excluded += 1
                continue
            values = {}
            for m in metrics:
                try:
                    v = float(row.get(m.column) or "nan")
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    break
                values[m.key] = v
            else:
                if fips in rows:
                    raise DataError(f"{path}:{lineno}: duplicate FIPS {fips}")
                rows[fips] = values
                continue
            excluded += 1
    if not rows:
        raise DataError(f"{path}: no parsable health rows")
    return HealthTable(rows, metrics, excluded)


@dataclass
class CorpusConfig:
    min_posts_per_county: int = 2000
    min_counties_per_human_tag: int = 20
    threads: int = 1

    def __post_init__(self):
        if self.min_posts_per_county < 1 or self.min_counties_per_human_tag < 1:
            raise ValueError("thresholds must be positive")


@dataclass
class FilterReport:
    total: int
    geo_assigned: int
    health_matched: int
    county_retained: int
    tag_retained: int
    retained_counties: list
    passing_tags: int = 0
    parse_skipped: dict = field(default_factory=dict)

    STAGES = ("total", "geo_assigned", "health_matched", "county_retained", "tag_retained")

    def counts(self):
        return [getattr(self, s) for s in self.STAGES]

    def to_json(self):
        d = {s: getattr(self, s) for s in self.STAGES}
        d.update(retained_counties=list(self.retained_counties),
                 passing_tags=self.passing_tags,
                 parse_skipped=dict(sorted(self.parse_skipped.items())))
        return d


def _assign_all(posts, index, threads):
    points = [p.where for p in posts]
    if threads > 1 and len(points) > 1000:
        chunk = -(-len(points) // threads)
        parts = [points[i:i + chunk] for i in range(0, len(points), chunk)]
        with ThreadPoolExecutor(threads) as ex:
            out = []
            for res in ex.map(lambda pts: [assign_county(p, index) for p in pts], parts):
                out.extend(res)
        return out
    return [assign_county(p, index) for p in points]


def canonical_order(posts):
    return sorted(posts, key=lambda p: (p.county, p.user, p.id))


def build_corpus(posts, index, health: HealthTable, vocab, cfg: CorpusConfig | None = None):
    """Apply the dataset filters in order and return ``(corpus, FilterReport)``.

    1. drop posts not inside any county;
    2. drop posts whose county has no health row;
    3. keep counties with at least ``min_posts_per_county`` posts;
    4. keep posts with a vocabulary human tag used in at least
       ``min_counties_per_human_tag`` retained counties and at least one
       vocabulary machine tag.

    With ``index=None`` the posts' existing ``county`` field is trusted.
    """
    cfg = cfg or CorpusConfig()
    total = len(posts)
    if index is not None:
        counties = _assign_all(posts, index, cfg.threads)
        posts = [Post(p.id, p.user, p.when, p.where, p.human_tags_raw, p.machine_tags, c)
                 for p, c in zip(posts, counties)]
    if total == 0:
        raise EmptyCorpusError("input")

    stage = [p for p in posts if p.county is not None]
    geo_assigned = len(stage)
    if not stage:
        raise EmptyCorpusError("geo-assignment")

    stage = [p for p in stage if p.county in health]
    health_matched = len(stage)
    if not stage:
        raise EmptyCorpusError("health-match")

    per_county = Counter(p.county for p in stage)
    keep = {c for c, n in per_county.items() if n >= cfg.min_posts_per_county}
    stage = [p for p in stage if p.county in keep]
    county_retained = len(stage)
    if not stage:
        raise EmptyCorpusError("county-threshold")

    tag_counties = defaultdict(set)
    for p in stage:
        for t in p.human_tags_raw:
            if t in vocab:
                tag_counties[t].add(p.county)
    passing = {t for t, cs in tag_counties.items() if len(cs) >= cfg.min_counties_per_human_tag}
    stage = [p for p in stage
             if any(t in passing for t in p.human_tags_raw)
             and any(t in vocab for t in p.machine_texts)]
    if not stage:
        raise EmptyCorpusError("tag-filter")

    corpus = canonical_order(stage)
    report = FilterReport(
        total=total,
        geo_assigned=geo_assigned,
        health_matched=health_matched,
        county_retained=county_retained,
        tag_retained=len(corpus),
        retained_counties=sorted({p.county for p in corpus}),
        passing_tags=len(passing),
    )
    return corpus, report
