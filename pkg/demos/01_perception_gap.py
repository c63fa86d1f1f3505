"""
The perception gap of a single image
====================================

A user posts a burger with #foodie #hungry #yummy #burger. A classifier sees
six foods. Only vocabulary tags count, so the human side is just "burger".
"""

import math
from datetime import datetime, timezone

from foodgap import Vocabulary, aggregate, image_distributions, image_gap
from foodgap.geo import GeoPoint
from foodgap.ingest import Post

vocab = Vocabulary.from_texts(["burger", "chicken", "fries", "chips", "ketchup", "milkshake", "sushi"])

post = Post(
    id="p1", user="u1", when=datetime(2016, 1, 1, tzinfo=timezone.utc),
    where=GeoPoint(-86.5, 32.5),
    human_tags_raw=("foodie", "hungry", "yummy", "burger"),
    machine_tags=tuple((t, None) for t in ("burger", "chicken", "fries", "chips", "ketchup", "milkshake")),
    county="01001",
)

human, machine = image_distributions(post, vocab)
gap = image_gap(human, machine)

print("human  ", {vocab.text(i): round(v, 4) for i, v in human.items()})
print("machine", {vocab.text(i): round(v, 4) for i, v in machine.items()})
print("gap    ", {vocab.text(i): round(v, 4) for i, v in gap.items()})

# gap entries always sum to zero and the L1 norm never exceeds 2
print("sum", math.fsum(gap.values()), "L1", math.fsum(abs(v) for v in gap.values()))

# county rows average per user first, so a prolific poster counts once
more = [Post(f"p{k}", "u2", post.when, post.where, ("sushi",), (("sushi", None),), "01001")
         for k in range(2, 12)]
row = aggregate([post] + more, vocab, "gap").rows["01001"]
print("county gap row", {vocab.text(i): round(v, 4) for i, v in row.items()})
