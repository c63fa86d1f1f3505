import pytest
from hypothesis import given
from hypothesis import strategies as st

from foodgap.vocab import (
    CountyRegistry,
    MetricRegistry,
    VocabularyError,
    load_metric_registry,
    load_vocabulary,
    normalize_fips,
    normalize_tag,
    subjective_labels,
    Vocabulary,
)


def write(tmp_path, text, name="vocab.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_sorted_ids(tmp_path):
    voc, dups = load_vocabulary(write(tmp_path, "tag,category\nheineken,drinks\nburger,name-of-a-dish\n"))
    assert len(voc) == 2
    assert voc.index == {"burger": 0, "heineken": 1}
    assert dups == 0
    assert voc.tags[0].category == "name-of-dish"


def test_duplicates_collapsed(tmp_path):
    voc, dups = load_vocabulary(write(
        tmp_path, "tag,category\nburger,name-of-dish\nheineken,drinks\n#Burger,name-of-dish\n"))
    assert len(voc) == 2
    assert dups == 1


def test_row_order_does_not_change_ids(tmp_path):
    rows = ["sushi,name-of-dish", "beer,drinks", "bun,part-of-dish", "pho,food101-derived"]
    a, _ = load_vocabulary(write(tmp_path, "tag,category\n" + "\n".join(rows), "a.csv"))
    b, _ = load_vocabulary(write(tmp_path, "tag,category\n" + "\n".join(rows[::-1]), "b.csv"))
    assert a.index == b.index
    assert a == b


def test_full_scale_vocabulary(tmp_path):
    rows = "\n".join(f"tag{i:04d},name-of-dish" for i in range(1170))
    voc, _ = load_vocabulary(write(tmp_path, "tag,category\n" + rows))
    assert len(voc) == 1170


@pytest.mark.parametrize("text,needle", [
    ("", "empty"),
    ("tag,category\n", "no vocabulary rows"),
    ("tag,category\nburger\n", ":2:"),
    ("tag,category\nburger,drinks\nfoo,bar,baz\n", ":3:"),
    ("tag,category\nburger,not-a-category\n", ":2:"),
    ("word,kind\nburger,drinks\n", "header"),
])
def test_malformed(tmp_path, text, needle):
    with pytest.raises(VocabularyError, match=needle):
        load_vocabulary(write(tmp_path, text))


@pytest.mark.parametrize("raw,expected", [
    ("#ChickenKatsu ", "chickenkatsu"),
    ("burger", "burger"),
    ("#", None),
    ("  ", None),
    ("two words", None),
    ("#Crème", "crème"),
])
def test_normalize_tag(raw, expected):
    assert normalize_tag(raw) == expected


@given(st.text())
def test_normalize_idempotent(raw):
    once = normalize_tag(raw)
    if once is not None:
        assert normalize_tag(once) == once


@given(st.lists(st.from_regex(r"[a-z]{1,8}", fullmatch=True), min_size=1, max_size=30))
def test_lookup_is_bijection(texts):
    voc = Vocabulary.from_texts(texts)
    assert sorted(voc.index.values()) == list(range(len(voc)))
    for t in voc.texts:
        assert voc.text(voc.id(t)) == t
    assert list(voc.texts) == sorted(set(texts))


def test_subjective_labels_disjoint():
    voc = Vocabulary.from_texts(["burger", "healthy"])
    assert subjective_labels(["#Delicious", "organic"]) == ("delicious", "organic")
    with pytest.raises(VocabularyError):
        subjective_labels(["healthy"], voc)


def test_metric_registry_defaults():
    reg = MetricRegistry()
    assert len(reg) == 9
    higher = [m.key for m in reg if m.better_direction == "higher"]
    assert higher == ["FoodEnvIndex"]
    assert reg.resolve("Obese").key == "AdultObesity"
    assert reg.resolve("obesity").key == "AdultObesity"
    with pytest.raises(KeyError):
        reg.resolve("BMI")


def test_metric_registry_override(tmp_path):
    p = write(tmp_path, "key,column,label,description,better_direction\n"
                        "Obesity,obese_pct,Obese,adult obesity,lower\n", "m.csv")
    reg = load_metric_registry(p)
    assert reg.keys == ("Obesity",)


def test_county_registry():
    reg = CountyRegistry()
    reg.add("1001", "Autauga")
    assert "01001" in reg
    with pytest.raises(VocabularyError):
        reg.add("01001")
    assert normalize_fips(6037.0) == "06037"
