"""Command-line driver: staged pipeline over a persisted store directory.

Store layout (under ``--out``)::

    ingest/     corpus.jsonl, vocab.csv, health.csv, filter_report.json
    features/   gap.csv, human.csv, machine.csv (+ .support.csv),
                subjective_<label>.csv (+ .mask.csv, .baseline.csv), coverage.json
    correlate/  correlations.csv, baselines.csv, folds.csv, summary.json
    report/     <metric>_<family>.{md,csv}, table_gap.md, table_subjective.md
    state.json, provenance.jsonl, .lock
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import fcntl
import hashlib
import json
import logging
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import gap, geo, ingest, report, stats, subjective, synth
from . import vocab as tagvocab

log = logging.getLogger("foodgap")

STAGES = ("ingest", "features", "correlate", "report")
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class StageError(RuntimeError):
    """Missing upstream artifact or store conflict."""

    exit_code = EXIT_DATA


class ConfigMismatch(StageError):
    exit_code = EXIT_USAGE


@dataclasses.dataclass
class RunConfig:
    posts: str | None = None
    counties: str | None = None
    health: str | None = None
    vocab: str | None = None
    metrics: str | None = None
    out: str = "foodgap-out"
    min_county_posts: int = 2000
    min_tag_counties: int = 20
    topk: int = 30
    weighting: str = "uniform"
    family: str = "all"
    labels: tuple = tagvocab.DEFAULT_SUBJECTIVE_LABELS
    folds: int = 10
    alpha: float = 0.05
    seed: int = 0
    bh_grouping: str = "metric-family"
    se_mode: str = "sem"
    top: int = 5
    format: str = "md"
    significant_only: bool = True
    threads: int = 1
    force: bool = False

    def __post_init__(self):
        if isinstance(self.labels, str):
            self.labels = tuple(x for x in self.labels.split(",") if x.strip())
        self.labels = tuple(self.labels)
        for name in ("min_county_posts", "min_tag_counties", "topk", "folds", "top", "threads"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.weighting not in gap.WEIGHTINGS:
            raise ValueError(f"weighting must be one of {gap.WEIGHTINGS}")
        if self.family not in ("all", "subjective") + gap.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.bh_grouping not in stats.BH_GROUPINGS:
            raise ValueError(f"bh_grouping must be one of {stats.BH_GROUPINGS}")
        if self.se_mode not in ("sem", "std"):
            raise ValueError("se_mode must be sem or std")
        if self.format not in ("md", "csv"):
            raise ValueError("format must be md or csv")

    # fields that feed each stage's config hash
    STAGE_KEYS = {
        "ingest": ("min_county_posts", "min_tag_counties", "topk"),
        "features": ("family", "weighting", "labels"),
        "correlate": ("family", "folds", "alpha", "seed", "bh_grouping", "se_mode"),
        "report": ("top", "format", "significant_only"),
    }

    def stage_hash(self, stage):
        d = {k: getattr(self, k) for k in self.STAGE_KEYS[stage]}
        if "labels" in d:
            d["labels"] = list(d["labels"])
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def store(self):
        return Path(self.out)


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}
_PATH_KEYS = ("posts", "counties", "health", "vocab", "metrics", "out")


def read_config_file(path):
    """``key = value`` lines, '#' comments. Relative paths resolve against
    the file's directory."""
    path = Path(path)
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        default = fields[key].default
        if key in _PATH_KEYS:
            values[key] = str((path.parent / val).resolve()) if not Path(val).is_absolute() else val
        elif isinstance(default, bool):
            if val.lower() not in _BOOL:
                raise ValueError(f"{path}:{lineno}: {key} expects a boolean")
            values[key] = _BOOL[val.lower()]
        elif isinstance(default, int):
            values[key] = int(val)
        elif isinstance(default, float):
            values[key] = float(val)
        else:
            values[key] = val
    return values


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Store:
    def __init__(self, root):
        self.root = Path(root)
        self.state_path = self.root / "state.json"
        self.provenance_path = self.root / "provenance.jsonl"

    def path(self, stage, name=""):
        return self.root / stage / name if name else self.root / stage

    def state(self):
        if self.state_path.exists():
            return json.loads(self.state_path.read_text(encoding="utf-8"))
        return {}

    def record(self, stage, cfg_hash, inputs, outputs, started):
        state = self.state()
        entry = {
            "stage": stage,
            "config_hash": cfg_hash,
            "inputs": {str(p): sha256(p) for p in inputs},
            "outputs": {str(p): sha256(p) for p in sorted(outputs)},
        }
        state[stage] = entry
        self.state_path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        prov = dict(entry, started=started, finished=_now())
        with self.provenance_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(prov, sort_keys=True) + "\n")

    def up_to_date(self, stage, cfg_hash, inputs, force=False):
        """True if the stored run matches; raise on a config conflict."""
        entry = self.state().get(stage)
        if entry is None:
            return False
        if entry["config_hash"] != cfg_hash:
            if force:
                return False
            raise ConfigMismatch(
                f"stage {stage!r} in {self.root} was built with a different configuration; "
                "use --force to rebuild")
        if force:
            return False
        try:
            if entry["inputs"] != {str(p): sha256(p) for p in inputs}:
                return False
            return all(Path(p).exists() and sha256(p) == h for p, h in entry["outputs"].items())
        except OSError:
            return False

    def outputs(self, stage):
        entry = self.state().get(stage)
        if entry is None or not all(Path(p).exists() for p in entry["outputs"]):
            raise StageError(f"stage {stage!r} has no artifacts in {self.root}: run {stage} first")
        return [Path(p) for p in entry["outputs"]]

    @contextmanager
    def lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "w") as fh:
            try:
                fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                raise StageError(f"store {self.root} is in use by another pipeline") from None
            try:
                yield self
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _metrics(cfg):
    return tagvocab.load_metric_registry(cfg.metrics) if cfg.metrics else tagvocab.MetricRegistry()


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


# stages -------------------------------------------------------------------

def stage_ingest(cfg, store):
    missing = [k for k in ("posts", "counties", "health", "vocab") if not getattr(cfg, k)]
    if missing:
        raise StageError(f"ingest needs --{' --'.join(missing)}")
    inputs = [Path(cfg.posts), Path(cfg.counties), Path(cfg.health), Path(cfg.vocab)]
    if cfg.metrics:
        inputs.append(Path(cfg.metrics))
    for p in inputs:
        if not p.exists():
            raise StageError(f"input file not found: {p}")
    h = cfg.stage_hash("ingest")
    if store.up_to_date("ingest", h, inputs, cfg.force):
        return "skipped"
    started = _now()
    metrics = _metrics(cfg)
    voc, dups = tagvocab.load_vocabulary(cfg.vocab)
    _, index = geo.load_shapes(cfg.counties)
    health = ingest.parse_health(cfg.health, metrics)
    posts, parse_rep = ingest.parse_posts(cfg.posts, cfg.topk)
    corpus, rep = ingest.build_corpus(
        posts, index, health, voc,
        ingest.CorpusConfig(cfg.min_county_posts, cfg.min_tag_counties, cfg.threads))
    rep.parse_skipped = dict(parse_rep.skipped)
    out = store.path("ingest")
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_posts(corpus, out / "corpus.jsonl")
    tagvocab.write_vocabulary(voc, out / "vocab.csv")
    health.write(out / "health.csv")
    summary = rep.to_json()
    summary.update(vocab_size=len(voc), vocab_duplicates=dups, health_rows=len(health),
                   health_excluded=health.excluded, lines_read=parse_rep.read)
    (out / "filter_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    log.info("ingest: %s", " -> ".join(f"{s}={getattr(rep, s)}" for s in rep.STAGES))
    store.record("ingest", h, inputs, [out / n for n in ("corpus.jsonl", "vocab.csv", "health.csv",
                                                        "filter_report.json")], started)
    return "ran"


def _load_corpus(path, topk):
    posts, _ = ingest.parse_posts(path, topk)
    return ingest.canonical_order(posts)


def _wants(cfg, family):
    return cfg.family in ("all", family)


def stage_features(cfg, store):
    upstream = store.outputs("ingest")
    h = cfg.stage_hash("features")
    if store.up_to_date("features", h, upstream, cfg.force):
        return "skipped"
    started = _now()
    voc, _ = tagvocab.load_vocabulary(store.path("ingest", "vocab.csv"))
    corpus = _load_corpus(store.path("ingest", "corpus.jsonl"), cfg.topk)
    out = store.path("features")
    out.mkdir(parents=True, exist_ok=True)
    outputs, coverage = [], {}
    families = [f for f in gap.FAMILIES if _wants(cfg, f)]
    if "gap" in families:
        families = list(gap.FAMILIES)  # boosts need the single-annotator families
    for fam, fm in gap.aggregate_families(corpus, voc, families, cfg.weighting, cfg.threads).items():
        fm.write(out / f"{fam}.csv")
        outputs += [out / f"{fam}.csv", gap.support_path(out / f"{fam}.csv")]
        coverage[fam] = {"counties": len(fm.rows), "missing": list(fm.missing)}
    if _wants(cfg, "subjective"):
        labels = tagvocab.subjective_labels(cfg.labels, voc)
        for lab in labels:
            mat = subjective.impute(subjective.conditional_probs(corpus, lab, voc))
            dest = out / f"subjective_{lab}.csv"
            mat.write(dest)
            outputs += [dest, out / f"subjective_{lab}.mask.csv", out / f"subjective_{lab}.baseline.csv"]
            coverage[f"subjective:{lab}"] = {
                "counties": len(mat.baseline), "imputed": len(mat.imputed),
                "dropped_tags": [voc.text(i) for i in mat.dropped]}
    (out / "coverage.json").write_text(json.dumps(coverage, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    outputs.append(out / "coverage.json")
    store.record("features", h, upstream, outputs, started)
    return "ran"


def load_feature_sets(store, vocab_texts):
    sets = []
    feat = store.path("features")
    for fam in gap.FAMILIES:
        p = feat / f"{fam}.csv"
        if p.exists():
            fm = gap.FeatureMatrix.read(p, fam)
            sets.append(stats.FeatureSet(fam, list(fm.tags), fm.dense(), fm.counties))
    for p in sorted(feat.glob("subjective_*.csv")):
        if p.name.endswith((".mask.csv", ".baseline.csv")):
            continue
        lab = p.stem[len("subjective_"):]
        mat = subjective.CondProbMatrix.read(p, lab, vocab_texts)
        cols = mat.columns
        values = np.column_stack([mat.column(i) for i in cols]) if cols else np.zeros((len(mat.counties), 0))
        sets.append(stats.FeatureSet(f"subjective:{lab}", [vocab_texts[i] for i in cols], values,
                                     mat.counties, mat.baseline_vector()))
    return sets


def write_correlations(result, dest):
    with Path(dest).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(stats.CorrelationRecord.FIELDS)
        for r in result.records:
            w.writerow([_fmt(getattr(r, f)) for f in stats.CorrelationRecord.FIELDS])


def read_correlations(src):
    out = []
    with Path(src).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            num = {k: float(row[k]) if row[k] != "" else math.nan
                   for k in ("mean_r", "se_r", "r_full", "p_raw", "boost")}
            out.append(stats.CorrelationRecord(row["tag"], row["metric"], row["family"],
                                               num["mean_r"], num["se_r"], num["r_full"],
                                               num["p_raw"], row["significant"] == "1", num["boost"]))
    return out


def stage_correlate(cfg, store):
    upstream = store.outputs("features") + [store.path("ingest", "health.csv")]
    h = cfg.stage_hash("correlate")
    if store.up_to_date("correlate", h, upstream, cfg.force):
        return "skipped"
    started = _now()
    metrics = _metrics(cfg)
    voc, _ = tagvocab.load_vocabulary(store.path("ingest", "vocab.csv"))
    health = ingest.parse_health(store.path("ingest", "health.csv"), metrics)
    sets = load_feature_sets(store, list(voc.texts))
    wanted = {f for f in gap.FAMILIES if _wants(cfg, f)}
    if "gap" in wanted:
        wanted.update(gap.FAMILIES)
    sets = [s for s in sets if s.family in wanted
            or (s.family.startswith("subjective:") and _wants(cfg, "subjective"))]
    if not sets:
        raise StageError("no feature matrices for the requested family: run features first")
    result = stats.correlate(sets, health, list(metrics), k=cfg.folds, seed=cfg.seed,
                             alpha=cfg.alpha, grouping=cfg.bh_grouping, se_mode=cfg.se_mode,
                             threads=cfg.threads)
    out = store.path("correlate")
    out.mkdir(parents=True, exist_ok=True)
    write_correlations(result, out / "correlations.csv")
    with (out / "baselines.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "metric", "mean_r", "se_r", "r_full"])
        for (fam, metric), vals in sorted(result.baselines.items()):
            w.writerow([fam, metric] + [_fmt(float(v)) for v in vals])
    with (out / "folds.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fips", "fold"])
        for c, f in result.folds.assignment.items():
            w.writerow([c, f])
    summary = {
        "counties": len(result.counties),
        "records": len(result.records),
        "undefined": result.n_undefined,
        "significant": sum(r.significant for r in result.records),
        "fold_sizes": result.folds.sizes().tolist(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    store.record("correlate", h, upstream,
                 [out / n for n in ("correlations.csv", "baselines.csv", "folds.csv", "summary.json")],
                 started)
    return "ran"


def _slug(family):
    return family.replace(":", "-")


def stage_report(cfg, store):
    upstream = store.outputs("correlate")
    h = cfg.stage_hash("report")
    if store.up_to_date("report", h, upstream, cfg.force):
        return "skipped"
    started = _now()
    metrics = _metrics(cfg)
    records = read_correlations(store.path("correlate", "correlations.csv"))
    out = store.path("report")
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("*"):
        old.unlink()
    families = sorted({r.family for r in records if not math.isnan(r.boost)})
    tables, outputs = [], []
    ext = "md" if cfg.format == "md" else "csv"
    for m in metrics:
        for fam in families:
            t = report.rank(records, m.key, cfg.top, cfg.significant_only, family=fam, label=m.label)
            tables.append(t)
            dest = out / f"{m.key}_{_slug(fam)}.{ext}"
            dest.write_text(report.emit(t, cfg.format), encoding="utf-8")
            outputs.append(dest)
    if cfg.format == "md":
        gap_tables = [t for t in tables if t.family == "gap"]
        if gap_tables:
            (out / "table_gap.md").write_text(
                report.summary_table(gap_tables, width=cfg.top), encoding="utf-8")
            outputs.append(out / "table_gap.md")
        subj = [f for f in families if f.startswith("subjective:")]
        if subj:
            (out / "table_subjective.md").write_text(
                report.summary_table([t for t in tables if t.family in subj], columns=subj),
                encoding="utf-8")
            outputs.append(out / "table_subjective.md")
    store.record("report", h, upstream, outputs, started)
    return "ran"


STAGE_FUNCS = {"ingest": stage_ingest, "features": stage_features,
               "correlate": stage_correlate, "report": stage_report}


def run_pipeline(cfg: RunConfig, stages=STAGES):
    """Run the requested stages in pipeline order; returns {stage: ran|skipped}."""
    store = Store(cfg.out)
    status = {}
    with store.lock():
        for stage in STAGES:
            if stage in stages:
                status[stage] = STAGE_FUNCS[stage](cfg, store)
                log.info("%s: %s", stage, status[stage])
    return status


# argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="key = value config file; flags override it")
    g.add_argument("--out", help="store / output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--force", action="store_true", default=None)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _add_ingest(p):
    p.add_argument("--posts")
    p.add_argument("--counties")
    p.add_argument("--health")
    p.add_argument("--vocab")
    p.add_argument("--metrics", help="CSV overriding the health-metric registry")
    p.add_argument("--min-county-posts", type=int, dest="min_county_posts")
    p.add_argument("--min-tag-counties", type=int, dest="min_tag_counties")
    p.add_argument("--topk", type=int)


def _add_features(p):
    p.add_argument("--family", choices=("gap", "human", "machine", "subjective", "all"))
    p.add_argument("--weighting", choices=gap.WEIGHTINGS)
    p.add_argument("--labels", help="comma-separated subjective labels")


def _add_correlate(p, family=True):
    if family:
        p.add_argument("--family", choices=("gap", "human", "machine", "subjective", "all"))
    p.add_argument("--folds", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bh-grouping", dest="bh_grouping", choices=stats.BH_GROUPINGS)
    p.add_argument("--se", dest="se_mode", choices=("sem", "std"))


def _add_report(p):
    p.add_argument("--top", type=int)
    p.add_argument("--format", choices=("md", "csv"))
    sig = p.add_mutually_exclusive_group()
    sig.add_argument("--significant-only", dest="significant_only", action="store_true", default=None)
    sig.add_argument("--all-records", dest="significant_only", action="store_false")


def build_parser():
    parent = _global_flags()
    parser = _Parser(prog="foodgap", description="Food perception gap analytics pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_ingest(sub.add_parser("ingest", parents=[parent], help="parse, geo-assign and filter posts"))
    _add_features(sub.add_parser("features", parents=[parent], help="county feature matrices"))
    _add_correlate(sub.add_parser("correlate", parents=[parent], help="CV correlations, BH, boosts"))
    _add_report(sub.add_parser("report", parents=[parent], help="boost-ranked tables"))
    run = sub.add_parser("run", parents=[parent], help="all stages")
    _add_ingest(run)
    _add_features(run)
    _add_correlate(run, family=False)
    _add_report(run)
    sp = sub.add_parser("synth", parents=[parent], help="write a synthetic dataset")
    sp.add_argument("--counties", type=int, default=194)
    sp.add_argument("--users-per-county", type=int, default=10)
    sp.add_argument("--images-per-user", type=int, default=5)
    sp.add_argument("--vocab-size", type=int, default=30)
    sp.add_argument("--plant", action="append", default=[], metavar="TAG:METRIC:FAMILY:R:SD")
    sp.add_argument("--plant-subjective", action="append", default=[], metavar="LABEL:TAG:METRIC:R")
    sp.add_argument("--labels", default=",".join(tagvocab.DEFAULT_SUBJECTIVE_LABELS))
    return parser


def config_from_args(args):
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for k, v in vars(args).items():
        if k in names and v is not None:
            values[k] = v
    return RunConfig(**values)


def _synth(args):
    plan = synth.SynthPlan(
        seed=args.seed or 0, counties=args.counties, users_per_county=args.users_per_county,
        images_per_user=args.images_per_user, vocab_size=args.vocab_size,
        effects=tuple(synth.PlantedEffect.parse(s) for s in args.plant),
        subjective=tuple(synth.SubjectivePlant.parse(s) for s in args.plant_subjective),
        labels=tuple(x for x in args.labels.split(",") if x))
    out = args.out or "synth-out"
    synth.generate(plan, out)
    print(f"synthetic dataset written to {out}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            _synth(args)
            return EXIT_OK
        try:
            cfg = config_from_args(args)
        except (ValueError, TypeError, OSError) as exc:
            print(f"foodgap: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        stages = STAGES if args.command == "run" else (args.command,)
        status = run_pipeline(cfg, stages)
        for stage, st in status.items():
            print(f"{stage}: {'up to date' if st == 'skipped' else 'done'}")
        return EXIT_OK
    except StageError as exc:
        print(f"foodgap: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ingest.DataError, geo.GeoError, tagvocab.VocabularyError, synth.PlanError,
            geo.InvalidPoint, KeyError, OSError) as exc:
        print(f"foodgap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"foodgap: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
