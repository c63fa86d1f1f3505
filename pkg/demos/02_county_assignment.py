"""
Assigning posts to counties
===========================

Counties are GeoJSON polygons, possibly with several parts and holes.
Points on a shared edge go to the smallest FIPS code.
"""

import json
import tempfile
from pathlib import Path

from foodgap import assign_county, load_shapes


def square(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


features = [
    # a county with a lake in the middle
    {"type": "Feature", "properties": {"GEOID": "01001"},
     "geometry": {"type": "Polygon", "coordinates": [square(0, 0, 4, 4), square(1, 1, 3, 3)]}},
    # a neighbour sharing the x = 4 edge, plus an island
    {"type": "Feature", "properties": {"STATEFP": "01", "COUNTYFP": "003"},
     "geometry": {"type": "MultiPolygon",
                  "coordinates": [[square(4, 0, 8, 4)], [square(10, 10, 11, 11)]]}},
]

path = Path(tempfile.mkdtemp()) / "counties.geojson"
path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
shapes, index = load_shapes(path)
print([s.fips for s in shapes])

for where, pt in [("land", (0.5, 0.5)), ("lake", (2, 2)), ("lake shore", (1, 2)),
                  ("shared edge", (4, 2)), ("island", (10.5, 10.5)), ("ocean", (20, 20))]:
    print(f"{where:12s} {pt} -> {assign_county(pt, index)}")
