"""Seeded synthetic corpora with planted county-level correlations, and a
naive dense reference implementation of the feature computations.

Counties are unit squares on a lon/lat grid. Planted effects move a tag's
machine and/or human usage rate with a county latent variable; the health
metric is then built from the *realized* county feature so that the
full-sample correlation hits the target exactly.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .vocab import DEFAULT_METRICS, DEFAULT_SUBJECTIVE_LABELS, MetricRegistry, normalize_tag

# latent shift of a planted tag's human usage probability per unit z
EFFECT_AMPLITUDE = 0.05
HUMAN_BASE_RATE = 0.25
MACHINE_BASE_RATE = 0.45
# machine images carry several times more vocabulary tags than human ones;
# scaling machine-side rate shifts keeps the two sides comparable in weight
# space (tuned empirically: |r| of both single-annotator features ~0.45)
MACHINE_SCALE = 3.0
LABEL_RATES = {"healthy": 0.15, "delicious": 0.25, "organic": 0.06}
NOISE_TAGS = ("foodie", "yummy", "hungry", "instafood", "foodporn")
METRIC_SCALE = {
    "Smokers": (18.0, 3.5), "AdultObesity": (30.0, 4.5), "FoodEnvIndex": (7.5, 1.0),
    "PhysicallyInactive": (25.0, 5.0), "ExcessiveDrinking": (17.0, 3.0),
    "AlcImpairedDrivingDeaths": (30.0, 8.0), "DiabetesPrevalence": (10.0, 2.5),
    "FoodInsecurity": (14.0, 3.5), "LimitedAccessHealthyFood": (7.0, 4.0),
}
T0 = 1451606400  # 2016-01-01T00:00:00Z


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class PlantedEffect:
    tag: str
    metric: str
    family: str = "gap"
    r: float = 0.8
    sd: float = 0.1  # sd of a county-level nuisance shared by both annotators

    @classmethod
    def parse(cls, text):
        """``tag:metric:family:r:sd``"""
        parts = text.split(":")
        if len(parts) != 5:
            raise PlanError(f"plant {text!r} is not tag:metric:family:r:sd")
        return cls(parts[0], parts[1], parts[2], float(parts[3]), float(parts[4]))


@dataclass(frozen=True)
class SubjectivePlant:
    label: str
    tag: str
    metric: str
    r: float = 0.5

    @classmethod
    def parse(cls, text):
        """``label:tag:metric:r``"""
        parts = text.split(":")
        if len(parts) != 4:
            raise PlanError(f"subjective plant {text!r} is not label:tag:metric:r")
        return cls(parts[0], parts[1], parts[2], float(parts[3]))


@dataclass
class SynthPlan:
    seed: int = 0
    counties: int = 194
    users_per_county: int = 10
    images_per_user: int = 5  # mean; each user gets 1 .. 2*mean-1 images
    vocab_size: int = 30
    effects: tuple = ()
    subjective: tuple = ()
    labels: tuple = DEFAULT_SUBJECTIVE_LABELS

    def validate(self, metrics=None):
        metrics = metrics or MetricRegistry()
        if self.counties < 3:
            raise PlanError("need at least 3 counties for a correlation")
        if min(self.users_per_county, self.images_per_user, self.vocab_size) < 1:
            raise PlanError("all counts must be >= 1")
        for e in self.effects:
            if not -1.0 < e.r < 1.0:
                raise PlanError(f"target r {e.r} outside (-1, 1)")
            if e.family not in ("gap", "human", "machine"):
                raise PlanError(f"unknown family {e.family!r}")
            if e.sd < 0:
                raise PlanError("noise sd must be >= 0")
            metrics.resolve(e.metric)
        for s in self.subjective:
            if not -1.0 < s.r < 1.0:
                raise PlanError(f"target r {s.r} outside (-1, 1)")
            if normalize_tag(s.label) not in [normalize_tag(x) for x in self.labels]:
                raise PlanError(f"subjective label {s.label!r} not in plan labels")
            metrics.resolve(s.metric)


def county_fips(i):
    return f"{1 + i // 50:02d}{2 * (i % 50) + 1:03d}"


def county_square(i, ncols):
    return -120.0 + i % ncols, 30.0 + i // ncols


def _vocab_texts(plan):
    width = max(3, len(str(plan.vocab_size - 1)))
    texts = {f"dish{n:0{width}d}" for n in range(plan.vocab_size)}
    texts.update(normalize_tag(e.tag) for e in plan.effects)
    texts.update(normalize_tag(s.tag) for s in plan.subjective)
    return sorted(texts)


def generate_records(plan: SynthPlan, metrics=None):
    """Post records (dicts, with a ``county`` truth field) plus layout info."""
    metrics = metrics or MetricRegistry()
    plan.validate(metrics)
    rng = np.random.default_rng(plan.seed)
    n = plan.counties
    ncols = math.ceil(math.sqrt(n))
    fips = [county_fips(i) for i in range(n)]
    vocab = _vocab_texts(plan)
    planted = {normalize_tag(e.tag) for e in plan.effects}
    background = [t for t in vocab if t not in planted]
    if not background:
        raise PlanError("vocabulary has no background tags")
    labels = [normalize_tag(x) for x in plan.labels]

    latent = rng.standard_normal((len(plan.effects), n))
    nuisance = np.vstack([rng.normal(0.0, e.sd, n) for e in plan.effects]) if plan.effects else np.zeros((0, n))
    sub_latent = rng.standard_normal((len(plan.subjective), n))
    label_base = {lab: LABEL_RATES.get(lab, 0.15) for lab in labels}

    records = []
    for c in range(n):
        x0, y0 = county_square(c, ncols)
        rates = []
        for k, e in enumerate(plan.effects):
            shift = EFFECT_AMPLITUDE * latent[k, c]
            noise = nuisance[k, c]
            if e.family == "gap":
                pm, ph = noise + shift, noise - shift
            elif e.family == "machine":
                pm, ph = noise + shift, noise
            else:
                pm, ph = noise, noise + shift
            pm = MACHINE_BASE_RATE + MACHINE_SCALE * pm
            ph = HUMAN_BASE_RATE + ph
            rates.append((normalize_tag(e.tag), min(max(pm, 0.0), 1.0), min(max(ph, 0.0), 1.0)))
        sub_rates = [(normalize_tag(s.label), normalize_tag(s.tag),
                      min(max(0.3 + 0.1 * sub_latent[k, c], 0.0), 1.0))
                     for k, s in enumerate(plan.subjective)]
        serial = 0
        for u in range(plan.users_per_county):
            user = f"u{fips[c]}_{u:03d}"
            for _ in range(int(rng.integers(1, 2 * plan.images_per_user))):
                content = list(rng.choice(background, size=min(int(rng.integers(1, 4)), len(background)),
                                          replace=False))
                extra = list(rng.choice(background, size=min(3, len(background)), replace=False))
                machine = {t: float(rng.uniform(0.5, 1.0)) for t in content}
                for t in extra:
                    machine.setdefault(t, float(rng.uniform(0.05, 0.5)))
                human = content[:int(rng.integers(1, len(content) + 1))]
                for tag, pm, ph in rates:
                    if rng.random() < pm:
                        machine[tag] = float(rng.uniform(0.3, 0.9))
                    if rng.random() < ph and tag not in human:
                        human.append(tag)
                if rng.random() < 0.5:
                    human.append(NOISE_TAGS[int(rng.integers(len(NOISE_TAGS)))])
                for lab in labels:
                    p = label_base[lab]
                    for slab, stag, q in sub_rates:
                        if slab == lab and stag in machine:
                            p = q
                    if rng.random() < p:
                        human.append(lab)
                mtags = sorted(machine.items(), key=lambda kv: (-kv[1], kv[0]))
                records.append({
                    "id": f"p{fips[c]}_{serial:05d}",
                    "user": user,
                    "ts": T0 + int(rng.integers(0, 86400 * 365)),
                    "lon": x0 + float(rng.uniform(1e-6, 1 - 1e-6)),
                    "lat": y0 + float(rng.uniform(1e-6, 1 - 1e-6)),
                    "human_tags": ["#" + t for t in human],
                    "machine_tags": [{"tag": t, "score": round(s, 6)} for t, s in mtags],
                    "county": fips[c],
                })
                serial += 1
    return records, fips, vocab, ncols


def boundary_geojson(fips, ncols):
    feats = []
    for i, f in enumerate(fips):
        x0, y0 = county_square(i, ncols)
        ring = [[x0, y0], [x0 + 1, y0], [x0 + 1, y0 + 1], [x0, y0 + 1], [x0, y0]]
        feats.append({"type": "Feature", "properties": {"fips": f, "name": f"County {f}"},
                      "geometry": {"type": "Polygon", "coordinates": [ring]}})
    return {"type": "FeatureCollection", "features": feats}


def _standardize(v):
    v = np.asarray(v, dtype=float)
    sd = v.std()
    if sd == 0:
        raise PlanError("planted feature is constant across counties")
    return (v - v.mean()) / sd


def metric_with_correlations(features, targets, rng, size):
    """A vector whose Pearson r with each of ``features`` equals ``targets``.

    Solves for loadings on the standardized features and fills the
    remaining variance with noise orthogonal to them.
    """
    if not features:
        return rng.standard_normal(size)
    Z = np.column_stack([_standardize(f) for f in features])
    R = Z.T @ Z / size
    t = np.asarray(targets, dtype=float)
    try:
        a = np.linalg.solve(R, t)
    except np.linalg.LinAlgError:
        raise PlanError("planted features are collinear") from None
    resid = 1.0 - float(t @ a)
    if resid <= 0:
        raise PlanError("planted correlations are jointly infeasible")
    e = rng.standard_normal(size)
    A = np.column_stack([np.ones(size), Z])
    e = e - A @ np.linalg.lstsq(A, e, rcond=None)[0]
    return Z @ a + math.sqrt(resid) * _standardize(e)


def _corr(x, y):
    return float(np.corrcoef(x, y)[0, 1])


def generate(plan: SynthPlan, out_dir=None, metrics=None):
    """Build a synthetic dataset; optionally write it to ``out_dir``.

    Returns a dict with ``records``, ``vocab``, ``health`` (fips -> values),
    ``geojson``, ``truth`` and, when written, ``paths``.
    """
    metrics = metrics or MetricRegistry(DEFAULT_METRICS)
    records, fips, vocab, ncols = generate_records(plan, metrics)
    labels = [normalize_tag(x) for x in plan.labels]
    # realized features are only needed to anchor planted metrics
    feats = oracle_features(records, vocab, labels) if plan.effects or plan.subjective else None
    rng = np.random.default_rng([plan.seed, 1])
    index = {t: i for i, t in enumerate(vocab)}

    def feature(family, tag, label=None):
        key = f"subjective:{label}" if family == "subjective" else family
        return np.array([feats[key][f][index[tag]] for f in fips])

    per_metric = {m.key: [] for m in metrics}
    for e in plan.effects:
        per_metric[metrics.resolve(e.metric).key].append(
            (feature(e.family, normalize_tag(e.tag)), e.r))
    for s in plan.subjective:
        per_metric[metrics.resolve(s.metric).key].append(
            (feature("subjective", normalize_tag(s.tag), normalize_tag(s.label)), s.r))

    health = {f: {} for f in fips}
    for m in metrics:
        planted = per_metric[m.key]
        y = metric_with_correlations([p[0] for p in planted], [p[1] for p in planted], rng, len(fips))
        mean, sd = METRIC_SCALE.get(m.key, (10.0, 2.0))
        for f, v in zip(fips, mean + sd * y):
            health[f][m.key] = float(v)

    truth = {"plan": _plan_dict(plan), "vocab": vocab, "effects": [], "subjective": []}
    for e in plan.effects:
        key = metrics.resolve(e.metric).key
        y = np.array([health[f][key] for f in fips])
        tag = normalize_tag(e.tag)
        truth["effects"].append({
            "tag": tag, "metric": key, "family": e.family, "target_r": e.r,
            "realized_r": _corr(feature(e.family, tag), y),
            "realized_r_gap": _corr(feature("gap", tag), y),
            "realized_r_machine": _corr(feature("machine", tag), y),
            "realized_r_human": _corr(feature("human", tag), y),
        })
    for s in plan.subjective:
        key = metrics.resolve(s.metric).key
        y = np.array([health[f][key] for f in fips])
        lab, tag = normalize_tag(s.label), normalize_tag(s.tag)
        truth["subjective"].append({
            "label": lab, "tag": tag, "metric": key, "target_r": s.r,
            "realized_r": _corr(feature("subjective", tag, lab), y),
        })
    per_county = {}
    for rec in records:
        per_county[rec["county"]] = per_county.get(rec["county"], 0) + 1
    truth["config"] = {"min_county_posts": min(per_county.values()), "min_tag_counties": 1}
    geojson = boundary_geojson(fips, ncols)
    out = {"records": records, "vocab": vocab, "health": health, "geojson": geojson,
           "truth": truth, "fips": fips}
    if out_dir is not None:
        out["paths"] = write_dataset(out, out_dir, metrics)
    return out


def _plan_dict(plan):
    d = asdict(plan)
    d["effects"] = [asdict(e) for e in plan.effects]
    d["subjective"] = [asdict(s) for s in plan.subjective]
    d["labels"] = list(plan.labels)
    return d


def write_dataset(data, out_dir, metrics=None):
    metrics = metrics or MetricRegistry()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / name for k, name in (
        ("posts", "posts.jsonl"), ("counties", "counties.geojson"), ("health", "health.csv"),
        ("vocab", "vocab.csv"), ("truth", "truth.json"), ("config", "run.cfg"))}
    with paths["posts"].open("w", encoding="utf-8") as fh:
        for rec in data["records"]:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    paths["counties"].write_text(json.dumps(data["geojson"], sort_keys=True) + "\n", encoding="utf-8")
    with paths["health"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fips"] + [m.column for m in metrics])
        for f in data["fips"]:
            w.writerow([f] + [repr(data["health"][f][m.key]) for m in metrics])
    with paths["vocab"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tag", "category"])
        for t in data["vocab"]:
            w.writerow([t, "name-of-dish"])
    paths["truth"].write_text(json.dumps(data["truth"], indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    cfg = data["truth"]["config"]
    labels = ",".join(data["truth"]["plan"]["labels"])
    paths["config"].write_text(
        "# written by the synthetic generator\n"
        f"posts = {paths['posts'].name}\n"
        f"counties = {paths['counties'].name}\n"
        f"health = {paths['health'].name}\n"
        f"vocab = {paths['vocab'].name}\n"
        f"min_county_posts = {cfg['min_county_posts']}\n"
        f"min_tag_counties = {cfg['min_tag_counties']}\n"
        f"labels = {labels}\n"
        f"seed = {data['truth']['plan']['seed']}\n",
        encoding="utf-8")
    return paths


# reference implementation -------------------------------------------------

def _load_records(source):
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
    return [r if isinstance(r, dict) else r.to_json() for r in source]


def _clean(tag):
    tag = str(tag).strip()
    while tag.startswith("#"):
        tag = tag[1:]
    return tag.strip().lower()


def oracle_features(source, vocab, labels=(), weighting="uniform", topk=30):
    """Dense, single-pass recomputation of every feature family.

    ``source`` is a post file (or list of records) whose records carry a
    ``county`` field and have already passed the corpus filters. Returns
    ``{family: {fips: np.ndarray over vocab}}`` with families gap, human,
    machine and ``subjective:<label>`` (imputed; NaN for tags never seen),
    plus ``baseline:<label>`` mapping fips -> P(label).
    """
    vocab = list(vocab)
    V = len(vocab)
    labels = [_clean(x) for x in labels]
    per_user = {}
    for rec in _load_records(source):
        human = [_clean(t) for t in rec.get("human_tags", [])]
        mt = []
        for item in rec.get("machine_tags", []):
            if isinstance(item, str):
                mt.append((_clean(item), None))
            else:
                mt.append((_clean(item["tag"]), item.get("score")))
        if mt and all(s is not None for _, s in mt):
            mt = sorted(mt, key=lambda e: -e[1])
        firsts = []
        for t, s in mt:
            if t not in [f[0] for f in firsts]:
                firsts.append((t, s))
        mt = firsts[:topk]
        wh = np.zeros(V)
        for j in range(V):
            if vocab[j] in human:
                wh[j] = 1.0
        present = np.zeros(V, dtype=bool)
        wm = np.zeros(V)
        for t, s in mt:
            if t in vocab:
                j = vocab.index(t)
                present[j] = True
                wm[j] = s if s is not None else 0.0
        if wh.sum() == 0 or not present.any():
            continue
        if weighting == "uniform" or any(s is None for _, s in mt) or wm.sum() == 0:
            wm = present.astype(float)
        wh = wh / wh.sum()
        wm = wm / wm.sum()
        key = (rec["county"], rec["user"])
        per_user.setdefault(key, []).append((wh, wm, present, set(human)))

    counties = sorted({c for c, _ in per_user})
    out = {"gap": {}, "human": {}, "machine": {}}
    for lab in labels:
        out[f"subjective:{lab}"] = {}
        out[f"baseline:{lab}"] = {}
    for county in counties:
        users = sorted(u for c, u in per_user if c == county)
        hs, ms, gs = [], [], []
        for u in users:
            imgs = per_user[(county, u)]
            h = np.mean([i[0] for i in imgs], axis=0)
            m = np.mean([i[1] for i in imgs], axis=0)
            hs.append(h)
            ms.append(m)
            gs.append(np.mean([i[1] - i[0] for i in imgs], axis=0))
        out["human"][county] = np.mean(hs, axis=0)
        out["machine"][county] = np.mean(ms, axis=0)
        out["gap"][county] = np.mean(gs, axis=0)
        for lab in labels:
            user_p, user_base = [], []
            for u in users:
                imgs = per_user[(county, u)]
                ind = np.full((len(imgs), V), np.nan)
                for n, (_, _, present, human) in enumerate(imgs):
                    ind[n, present] = 1.0 if lab in human else 0.0
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    user_p.append(np.nanmean(ind, axis=0))
                user_base.append(np.mean([1.0 if lab in i[3] else 0.0 for i in imgs]))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out[f"subjective:{lab}"][county] = np.nanmean(np.array(user_p), axis=0)
            out[f"baseline:{lab}"][county] = float(np.mean(user_base))
    for lab in labels:
        mat = np.array([out[f"subjective:{lab}"][c] for c in counties]).reshape(len(counties), V)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fill = np.nanmean(mat, axis=0)
        for r, c in enumerate(counties):
            row = mat[r].copy()
            gaps = np.isnan(row)
            row[gaps] = fill[gaps]
            out[f"subjective:{lab}"][c] = row
    return out
