import math

import pytest

from foodgap.report import cell, emit, fmt_r, rank, summary_table
from foodgap.stats import CorrelationRecord


def rec(tag, boost, family="gap", metric="AdultObesity", sig=True, r=0.31, se=0.007):
    return CorrelationRecord(tag, metric, family, r, se, r, 1e-4, sig, boost)


RECORDS = [
    rec("chickenkatsu", 0.2),
    rec("burger", 0.05),
    rec("apple", 0.05),
    rec("ramen", 0.4, sig=False),
    rec("kale", math.nan),
    rec("sushi", 0.3, metric="Smokers"),
    rec("pho", -0.1),
]


@pytest.mark.parametrize("v,text", [(0.31, ".31"), (-0.24, "-.24"), (0.0071, ".01"), (1.0, "1.00")])
def test_fmt_r(v, text):
    assert fmt_r(v) == text


def test_cell_format():
    assert cell(RECORDS[0]) == "chickenkatsu (.31±.007)"


def test_rank_order_and_filters():
    t = rank(RECORDS, "AdultObesity", top_n=5, label="Obese")
    assert [r.tag for r in t.rows] == ["chickenkatsu", "apple", "burger", "pho"]
    t_all = rank(RECORDS, "AdultObesity", significant_only=False)
    assert t_all.rows[0].tag == "ramen"
    assert len(rank(RECORDS, "AdultObesity", top_n=2).rows) == 2


def test_rank_mixed_families_rejected():
    mixed = RECORDS + [rec("x", 0.1, family="subjective:healthy")]
    with pytest.raises(ValueError):
        rank(mixed, "AdultObesity")
    assert [r.tag for r in rank(mixed, "AdultObesity", family="subjective:healthy").rows] == ["x"]


def test_markdown():
    text = emit(rank(RECORDS, "AdultObesity", top_n=2, label="Obese"), "md")
    assert text.splitlines()[0] == "## Obese (gap)"
    assert "| 1 | chickenkatsu (.31±.007) | .20 |" in text
    empty = emit(rank(RECORDS, "FoodInsecurity", family="gap"), "md")
    assert "(none significant)" in empty


def test_csv_unrounded():
    text = emit(rank(RECORDS, "AdultObesity", top_n=1), "csv")
    lines = text.splitlines()
    assert lines[0].startswith("rank,tag,metric")
    assert lines[1].split(",")[4] == repr(0.31)


def test_unknown_format():
    with pytest.raises(ValueError):
        emit(rank(RECORDS, "AdultObesity"), "html")


def test_summary_tables():
    tables = [rank(RECORDS, "AdultObesity", 3, label="Obese"),
              rank(RECORDS, "Smokers", 3, label="Smokers")]
    grid = summary_table(tables).splitlines()
    assert grid[0] == "| Health metric | Top 1 | Top 2 | Top 3 |"
    assert grid[2].startswith("| Obese | chickenkatsu")
    assert grid[3] == "| Smokers | sushi (.31±.007) |  |  |"
    subj = [rank([rec("kale", 0.1, family="subjective:healthy")], "AdultObesity",
                 family="subjective:healthy", label="Obese")]
    grid = summary_table(subj, columns=["subjective:healthy", "subjective:organic"]).splitlines()
    assert grid[0] == "| Health metric | healthy | organic |"
    assert grid[2] == "| Obese | kale (.31±.007) |  |"


def test_summary_fixed_width():
    grid = summary_table([rank(RECORDS, "Smokers", 5, label="Smokers")], width=5).splitlines()
    assert grid[0] == "| Health metric | Top 1 | Top 2 | Top 3 | Top 4 | Top 5 |"
    assert grid[2].count("|") == 7
