"""
How often is a dish called #healthy?
====================================

P(healthy | machine tag) per county. Each user is averaged first, then the
users of a county that have the tag. Counties where the tag never appears
get the tag's mean over the other counties.
"""

from datetime import datetime, timezone

from foodgap import conditional_probs, impute
from foodgap.geo import GeoPoint
from foodgap.ingest import Post
from foodgap.vocab import Vocabulary

vocab = Vocabulary.from_texts(["salad", "burger"])
when, where = datetime(2016, 1, 1, tzinfo=timezone.utc), GeoPoint(-90, 35)


def post(pid, user, county, human, machine):
    return Post(pid, user, when, where, tuple(human), ((machine, None),), county)


corpus = [
    post("1", "ann", "00001", ["salad", "healthy"], "salad"),
    post("2", "ann", "00001", ["salad"], "salad"),
    post("3", "bob", "00001", ["burger"], "burger"),
    post("4", "cat", "00002", ["salad", "healthy"], "salad"),
    post("5", "dan", "00003", ["burger", "healthy"], "burger"),
]

raw = conditional_probs(corpus, "healthy", vocab)
for c in raw.counties:
    print(c, "baseline", round(raw.baseline[c], 3),
          {vocab.text(i): v for i, v in raw.rows[c].items()})

filled = impute(raw)
print("imputed cells", sorted(filled.imputed))
for c in filled.counties:
    print(c, {vocab.text(i): round(v, 3) for i, v in filled.rows[c].items()})
