"""Tag vocabulary, subjective labels, health-metric and county registries."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

CATEGORIES = ("drinks", "part-of-dish", "name-of-dish", "food101-derived")
# spellings seen in crowd-sourced category files
_CATEGORY_ALIASES = {
    "part-of-a-dish": "part-of-dish",
    "name-of-a-dish": "name-of-dish",
    "food101": "food101-derived",
    "food-101": "food101-derived",
    "drink": "drinks",
}

DEFAULT_SUBJECTIVE_LABELS = ("healthy", "delicious", "organic")


class VocabularyError(ValueError):
    """Malformed or empty vocabulary / registry input."""


def normalize_tag(raw):
    """Strip whitespace and leading '#', lowercase.

    Returns None (the rejection marker) when nothing usable is left or the
    body contains whitespace or another '#'.
    """
    if raw is None:
        return None
    text = str(raw).strip().lstrip("#").strip().lower()
    if not text or "#" in text or len(text.split()) != 1:
        return None
    return text


def normalize_category(raw: str) -> str:
    cat = raw.strip().lower().replace("_", "-").replace(" ", "-")
    cat = _CATEGORY_ALIASES.get(cat, cat)
    if cat not in CATEGORIES:
        raise VocabularyError(f"unknown tag category {raw!r}")
    return cat


@dataclass(frozen=True)
class Tag:
    text: str
    category: str


class Vocabulary:
    """Ordered, immutable tag set; ids follow lexicographic order of text."""

    def __init__(self, tags):
        by_text = {}
        for t in tags:
            by_text.setdefault(t.text, t)
        self.tags = tuple(by_text[k] for k in sorted(by_text))
        self.texts = tuple(t.text for t in self.tags)
        self.index = {text: i for i, text in enumerate(self.texts)}

    @classmethod
    def from_texts(cls, texts, category="name-of-dish"):
        return cls(Tag(normalize_tag(t), category) for t in texts)

    def __len__(self):
        return len(self.tags)

    def __iter__(self):
        return iter(self.tags)

    def __contains__(self, text):
        return text in self.index

    def id(self, text):
        return self.index[text]

    def text(self, tag_id):
        return self.texts[tag_id]

    def get(self, text, default=None):
        return self.index.get(text, default)

    def ids(self, texts):
        """Vocabulary ids of the given (normalized) texts, unknowns skipped."""
        return [self.index[t] for t in texts if t in self.index]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tags == other.tags

    def __repr__(self):
        return f"Vocabulary({len(self)} tags)"


def load_vocabulary(source):
    """Read a ``tag,category`` CSV (header required).

    Returns ``(vocabulary, n_duplicates)``. Rows are canonicalized so the id
    assignment does not depend on row order.
    """
    path = Path(source)
    tags = {}
    duplicates = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise VocabularyError(f"{path}: empty vocabulary file")
        header = [h.strip().lower() for h in header]
        if header[:2] != ["tag", "category"]:
            raise VocabularyError(f"{path}:1: expected header 'tag,category', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise VocabularyError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            text = normalize_tag(row[0])
            if text is None:
                raise VocabularyError(f"{path}:{lineno}: unusable tag {row[0]!r}")
            try:
                cat = normalize_category(row[1])
            except VocabularyError as exc:
                raise VocabularyError(f"{path}:{lineno}: {exc}") from None
            if text in tags:
                duplicates += 1
                continue
            tags[text] = Tag(text, cat)
    if not tags:
        raise VocabularyError(f"{path}: no vocabulary rows")
    if duplicates:
        log.warning("%s: %d duplicate vocabulary rows collapsed", path, duplicates)
    return Vocabulary(tags.values()), duplicates


def write_vocabulary(vocab: Vocabulary, dest) -> None:
    with Path(dest).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tag", "category"])
        for t in vocab:
            w.writerow([t.text, t.category])


def subjective_labels(labels=DEFAULT_SUBJECTIVE_LABELS, vocab: Vocabulary | None = None):
    """Normalize a label set and check it is disjoint from the vocabulary."""
    out = []
    for raw in labels:
        lab = normalize_tag(raw)
        if lab is None:
            raise VocabularyError(f"unusable subjective label {raw!r}")
        if vocab is not None and lab in vocab:
            raise VocabularyError(f"subjective label {lab!r} is also a vocabulary tag")
        if lab not in out:
            out.append(lab)
    return tuple(out)


@dataclass(frozen=True)
class HealthMetric:
    key: str
    column: str
    label: str
    description: str
    better_direction: str = "lower"

    def __post_init__(self):
        if self.better_direction not in ("higher", "lower"):
            raise VocabularyError(f"better_direction must be higher/lower, got {self.better_direction!r}")


DEFAULT_METRICS = (
    HealthMetric("Smokers", "smokers", "Smokers", "Adult smokers (%)"),
    HealthMetric("AdultObesity", "obesity", "Obese", "Adult obesity (%)"),
    HealthMetric("FoodEnvIndex", "food_env_index", "FoodEnvInd",
                 "Food environment index (1 worst .. 10 best)", "higher"),
    HealthMetric("PhysicallyInactive", "phys_inactive", "PhysInactv", "Physically inactive (%)"),
    HealthMetric("ExcessiveDrinking", "excess_drink", "ExcessDrink", "Excessive drinking (%)"),
    HealthMetric("AlcImpairedDrivingDeaths", "alc_driving_deaths", "AlcDrivDeath",
                 "Alcohol-impaired driving deaths (%)"),
    HealthMetric("DiabetesPrevalence", "diabetes", "DiabetesPrev", "Diabetes prevalence (%)"),
    HealthMetric("FoodInsecurity", "food_insecure", "FoodInsecure", "Food insecurity (%)"),
    HealthMetric("LimitedAccessHealthyFood", "limited_access", "LimitedAccess",
                 "Limited access to healthy food (%)"),
)


@dataclass(frozen=True)
class MetricRegistry:
    metrics: tuple = DEFAULT_METRICS

    def __iter__(self):
        return iter(self.metrics)

    def __len__(self):
        return len(self.metrics)

    @property
    def keys(self):
        return tuple(m.key for m in self.metrics)

    def resolve(self, name: str) -> HealthMetric:
        """Look a metric up by key, file column or short table label."""
        low = name.strip().lower()
        for m in self.metrics:
            if low in (m.key.lower(), m.column.lower(), m.label.lower()):
                return m
        raise KeyError(f"unknown health metric {name!r}")


def load_metric_registry(source) -> MetricRegistry:
    """Override the built-in metrics from a CSV with header
    ``key,column,label,description,better_direction``."""
    path = Path(source)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise VocabularyError(f"{path}: no metric rows")
    metrics = []
    for lineno, row in enumerate(rows, start=2):
        try:
            metrics.append(HealthMetric(
                key=row["key"].strip(),
                column=row["column"].strip(),
                label=(row.get("label") or row["key"]).strip(),
                description=(row.get("description") or "").strip(),
                better_direction=(row.get("better_direction") or "lower").strip().lower(),
            ))
        except (KeyError, AttributeError) as exc:
            raise VocabularyError(f"{path}:{lineno}: missing field {exc}") from None
    keys = [m.key for m in metrics]
    if len(set(keys)) != len(keys):
        raise VocabularyError(f"{path}: duplicate metric keys")
    return MetricRegistry(tuple(metrics))


@dataclass
class CountyRegistry:
    entries: dict = field(default_factory=dict)

    def add(self, fips: str, name: str = "") -> None:
        fips = normalize_fips(fips)
        if fips in self.entries:
            raise VocabularyError(f"duplicate FIPS {fips}")
        self.entries[fips] = name

    def __contains__(self, fips):
        return fips in self.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(sorted(self.entries))


def normalize_fips(raw) -> str:
    """Zero-pad a county FIPS code to five digits."""
    text = str(raw).strip()
    if text.endswith(".0"):
        text = text[:-2]
    if not text.isdigit() or len(text) > 5:
        raise VocabularyError(f"bad FIPS code {raw!r}")
    return text.zfill(5)
