"""Boost-ranked tables in the style of the published result tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass


@dataclass
class RankedTable:
    metric: str
    family: str
    rows: list  # CorrelationRecord, best first
    label: str = ""  # short display name of the metric


def rank(records, metric, top_n=5, significant_only=True, family=None, label=""):
    """Records for one metric with a defined boost, sorted by (boost desc, tag)."""
    keep = [r for r in records
            if r.metric == metric and (family is None or r.family == family)
            and not math.isnan(r.boost)
            and (r.significant or not significant_only)]
    families = {r.family for r in keep}
    if family is None and len(families) > 1:
        raise ValueError(f"records mix families {sorted(families)}; pass family=")
    keep.sort(key=lambda r: (-r.boost, r.tag))
    fam = family if family is not None else (families.pop() if families else "")
    return RankedTable(metric, fam, keep[:top_n], label)


def fmt_r(v, digits=2):
    """'.31' / '-.24' style: fixed digits, no leading zero."""
    text = f"{v:.{digits}f}"
    if text.startswith("-0."):
        return "-" + text[2:]
    if text.startswith("0."):
        return text[1:]
    return text


def cell(rec):
    return f"{rec.tag} ({fmt_r(rec.mean_r)}±{fmt_r(rec.se_r, 3)})"


def emit(table: RankedTable, fmt="markdown"):
    if fmt in ("md", "markdown"):
        return _markdown(table)
    if fmt == "csv":
        return _csv(table)
    raise ValueError(f"unknown format {fmt!r}")


def _markdown(table):
    name = table.label or table.metric
    lines = [f"## {name} ({table.family})", ""]
    if not table.rows:
        lines.append("(none significant)")
        return "\n".join(lines) + "\n"
    lines += ["| Rank | Tag (mean r ± SE) | Boost |", "|---:|---|---:|"]
    for n, rec in enumerate(table.rows, start=1):
        lines.append(f"| {n} | {cell(rec)} | {fmt_r(rec.boost)} |")
    return "\n".join(lines) + "\n"


def _csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "tag", "metric", "family", "mean_r", "se_r", "r_full",
                "p_raw", "significant", "boost"])
    for n, rec in enumerate(table.rows, start=1):
        w.writerow([n, rec.tag, rec.metric, rec.family, repr(rec.mean_r), repr(rec.se_r),
                    repr(rec.r_full), repr(rec.p_raw), int(rec.significant), repr(rec.boost)])
    return buf.getvalue()


def summary_table(tables, columns=None, width=None):
    """One markdown grid: a row per metric, Top-1..Top-N cells (N = ``width``,
    default the longest table).

    With ``columns`` (family names) each metric row instead holds the top
    cell of each family, e.g. one column per subjective label.
    """
    tables = list(tables)
    if columns is None:
        if width is None:
            width = max((len(t.rows) for t in tables), default=0)
        head = ["Health metric"] + [f"Top {i}" for i in range(1, max(width, 1) + 1)]
        out = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for t in sorted(tables, key=lambda t: t.label or t.metric):
            cells = [cell(r) for r in t.rows] + [""] * (len(head) - 1 - len(t.rows))
            out.append("| " + " | ".join([t.label or t.metric] + cells) + " |")
        return "\n".join(out) + "\n"
    by = {(t.metric, t.family): t for t in tables}
    metrics = sorted({(t.label or t.metric, t.metric) for t in tables})
    head = ["Health metric"] + [c.split(":", 1)[-1] for c in columns]
    out = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for label, metric in metrics:
        depth = max((len(by[(metric, c)].rows) for c in columns if (metric, c) in by), default=0)
        for i in range(max(depth, 1)):
            cells = []
            for c in columns:
                t = by.get((metric, c))
                cells.append(cell(t.rows[i]) if t is not None and i < len(t.rows) else "")
            out.append("| " + " | ".join([label if i == 0 else ""] + cells) + " |")
    return "\n".join(out) + "\n"
