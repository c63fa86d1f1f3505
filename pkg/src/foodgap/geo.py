"""Point-in-polygon county assignment over GeoJSON county boundaries."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .vocab import VocabularyError, normalize_fips


class GeoError(ValueError):
    """Structural problem in a boundary file (raised at load time)."""


class InvalidPoint(ValueError):
    """Coordinates that are non-finite or out of range."""


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        lon, lat = self.lon, self.lat
        if not (isinstance(lon, (int, float)) and isinstance(lat, (int, float))):
            raise InvalidPoint(f"non-numeric coordinates ({lon!r}, {lat!r})")
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise InvalidPoint(f"non-finite coordinates ({lon}, {lat})")
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise InvalidPoint(f"coordinates out of range ({lon}, {lat})")


def _check_ring(ring, where):
    pts = [(float(x), float(y)) for x, y, *_ in ring]
    if len(pts) < 4:
        raise GeoError(f"{where}: ring has {len(pts)} points, need >= 4")
    if pts[0] != pts[-1]:
        raise GeoError(f"{where}: ring is not closed")
    return tuple(pts)


def _on_segment(x, y, x1, y1, x2, y2):
    if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) != 0.0:
        return False
    return min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2)


def ring_position(ring, x, y):
    """1 if strictly inside ``ring``, 0 if on its boundary, -1 if outside.

    Even-odd ray casting towards +x; the half-open rule on edge endpoints
    keeps vertices from being counted twice.
    """
    inside = False
    x1, y1 = ring[0]
    for x2, y2 in ring[1:]:
        if _on_segment(x, y, x1, y1, x2, y2):
            return 0
        if (y1 > y) != (y2 > y):
            xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xcross:
                inside = not inside
        x1, y1 = x2, y2
    return 1 if inside else -1


@dataclass(frozen=True)
class Polygon:
    outer: tuple
    holes: tuple = ()

    def contains(self, x, y):
        if ring_position(self.outer, x, y) < 0:
            return False
        # a point on a hole's edge is still on the polygon
        return all(ring_position(h, x, y) < 1 for h in self.holes)


@dataclass(frozen=True)
class CountyShape:
    fips: str
    polygons: tuple
    bbox: tuple  # (minx, miny, maxx, maxy)

    @classmethod
    def build(cls, fips, polygons, where=""):
        """Validate rings (given as coordinate sequences) and compute the bbox.

        ``polygons`` is a list of ``[outer, hole, hole, ...]`` ring lists,
        i.e. GeoJSON MultiPolygon coordinates.
        """
        where = where or fips
        parts = []
        xs, ys = [], []
        if not polygons:
            raise GeoError(f"{where}: no polygons")
        for pi, rings in enumerate(polygons):
            if not rings:
                raise GeoError(f"{where}: polygon {pi} has no rings")
            outer = _check_ring(rings[0], f"{where} polygon {pi} outer")
            holes = tuple(_check_ring(r, f"{where} polygon {pi} hole {hi}")
                          for hi, r in enumerate(rings[1:]))
            for hi, h in enumerate(holes):
                if not all(ring_position(outer, px, py) >= 0 for px, py in h):
                    raise GeoError(f"{where}: polygon {pi} hole {hi} not inside its outer ring")
            parts.append(Polygon(outer, holes))
            xs.extend(p[0] for p in outer)
            ys.extend(p[1] for p in outer)
        return cls(fips, tuple(parts), (min(xs), min(ys), max(xs), max(ys)))

    def in_bbox(self, x, y):
        x0, y0, x1, y1 = self.bbox
        return x0 <= x <= x1 and y0 <= y <= y1

    def contains(self, p) -> bool:
        x, y = (p.lon, p.lat) if isinstance(p, GeoPoint) else p
        if not self.in_bbox(x, y):
            return False
        return any(poly.contains(x, y) for poly in self.polygons)


def contains(shape: CountyShape, p: GeoPoint) -> bool:
    return shape.contains(p)


class SpatialIndex:
    """Uniform grid over shape bounding boxes.

    ``candidates`` returns every shape whose bbox covers the point, so it is
    a superset of the containing shapes.
    """

    def __init__(self, shapes, cell_size=None):
        self.shapes = tuple(sorted(shapes, key=lambda s: s.fips))
        if not self.shapes:
            raise GeoError("cannot index an empty shape set")
        if cell_size is None:
            spans = [max(s.bbox[2] - s.bbox[0], s.bbox[3] - s.bbox[1]) for s in self.shapes]
            spans.sort()
            cell_size = spans[len(spans) // 2] or 1.0
        self.cell = float(cell_size)
        self.grid = {}
        for i, s in enumerate(self.shapes):
            x0, y0, x1, y1 = s.bbox
            for cx in range(self._c(x0), self._c(x1) + 1):
                for cy in range(self._c(y0), self._c(y1) + 1):
                    self.grid.setdefault((cx, cy), []).append(i)

    def _c(self, v):
        return math.floor(v / self.cell)

    def candidates(self, x, y):
        idx = self.grid.get((self._c(x), self._c(y)), ())
        return [self.shapes[i] for i in idx if self.shapes[i].in_bbox(x, y)]

    def __len__(self):
        return len(self.shapes)


def _validate_point(p):
    if isinstance(p, GeoPoint):
        return p.lon, p.lat
    lon, lat = p
    GeoPoint(lon, lat)
    return lon, lat


def assign_county(p, index: SpatialIndex):
    """FIPS of the county containing ``p`` or None.

    Shapes are scanned in FIPS order, so a point on a shared edge goes to
    the smallest FIPS. Raises InvalidPoint for bad coordinates.
    """
    x, y = _validate_point(p)
    for shape in index.candidates(x, y):
        if shape.contains((x, y)):
            return shape.fips
    return None


def assign_county_exhaustive(p, shapes):
    """Reference path without the index: scan every shape."""
    x, y = _validate_point(p)
    hits = [s.fips for s in shapes if s.contains((x, y))]
    return min(hits) if hits else None


def _feature_fips(props, where):
    for key in ("fips", "FIPS", "GEOID", "geoid"):
        if props.get(key) not in (None, ""):
            try:
                return normalize_fips(props[key])
            except VocabularyError as exc:
                raise GeoError(f"{where}: {exc}") from None
    if props.get("STATEFP") and props.get("COUNTYFP"):
        return normalize_fips(f"{props['STATEFP']}{props['COUNTYFP']}")
    raise GeoError(f"{where}: missing fips/GEOID property")


def shapes_from_geojson(doc):
    if doc.get("type") != "FeatureCollection":
        raise GeoError("boundary file must be a GeoJSON FeatureCollection")
    features = doc.get("features") or []
    if not features:
        raise GeoError("boundary file has no features")
    parts = {}
    for n, feat in enumerate(features):
        props = feat.get("properties") or {}
        where = f"feature {n}"
        fips = _feature_fips(props, where)
        where = f"feature {n} ({fips})"
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            polys = [coords]
        elif gtype == "MultiPolygon":
            polys = coords
        else:
            raise GeoError(f"{where}: unsupported geometry {gtype!r}")
        try:
            CountyShape.build(fips, polys, where)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, GeoError):
                raise
            raise GeoError(f"{where}: bad coordinates ({exc})") from None
        parts.setdefault(fips, []).extend(polys)
    # several features with one FIPS are merged into one shape
    return [CountyShape.build(f, polys) for f, polys in sorted(parts.items())]


def load_shapes(source):
    """Parse a county boundary FeatureCollection; returns (shapes, index)."""
    with Path(source).open(encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GeoError(f"{source}: not valid JSON ({exc})") from None
    shapes = shapes_from_geojson(doc)
    return shapes, SpatialIndex(shapes)
