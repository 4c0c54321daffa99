"""Geographic primitives, POI dataset ingestion and a grid index for proximity queries.

Distances are great-circle meters on a sphere of mean radius 6,371,000 m.
The index is a uniform lat/lon grid (default cell roughly 500 m at the
equator); longitude cells wrap across the antimeridian.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

EARTH_RADIUS_M = 6_371_000.0

# meters spanned by one degree of latitude on the sphere
METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0

# ~500 m at the equator
DEFAULT_CELL_DEG = 500.0 / METERS_PER_DEG_LAT

_generation_counter = itertools.count(1)


class IngestError(ValueError):
    """A dataset record could not be ingested; message names the record and field."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"coordinates must be finite, got ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range [-180, 180]")


@dataclass(frozen=True)
class Poi:
    id: str
    name: str
    category: str
    point: GeoPoint
    tags: Optional[dict] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("poi id must be non-empty")
        if not self.name.strip():
            raise ValueError(f"poi {self.id!r}: name must be non-empty")
        if not self.category or self.category != self.category.strip().lower():
            raise ValueError(f"poi {self.id!r}: category must be non-empty lowercase")


@dataclass(frozen=True)
class Circle:
    center: GeoPoint
    radius_m: float

    def __post_init__(self):
        if not (math.isfinite(self.radius_m) and self.radius_m > 0):
            raise ValueError(f"radius_m must be positive and finite, got {self.radius_m}")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    p1 = math.radians(a.lat)
    p2 = math.radians(b.lat)
    dp = math.radians(b.lat - a.lat)
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1.0 - h))


class PoiStore:
    """Immutable collection of POIs with a uniform grid index over lat/lon.

    Safe for unlimited concurrent readers once built. Each store carries a
    distinct generation number so caches can detect dataset reloads.
    """

    def __init__(self, pois: Iterable[Poi], cell_deg: float = DEFAULT_CELL_DEG):
        if cell_deg <= 0:
            raise ValueError("cell_deg must be positive")
        self.cell_deg = cell_deg
        self._ncols = max(1, math.ceil(360.0 / cell_deg))
        self.generation = next(_generation_counter)
        self._pois: list[Poi] = []
        self._by_id: dict[str, Poi] = {}
        self._by_name: dict[str, list[Poi]] = {}
        self._by_category: dict[str, list[Poi]] = {}
        self._grid: dict[tuple[int, int], list[Poi]] = {}
        for poi in pois:
            if poi.id in self._by_id:
                raise IngestError(f"duplicate poi id {poi.id!r}")
            self._by_id[poi.id] = poi
            self._pois.append(poi)
            self._by_name.setdefault(poi.name.strip().casefold(), []).append(poi)
            self._by_category.setdefault(poi.category, []).append(poi)
            self._grid.setdefault(self._cell_of(poi.point), []).append(poi)

    def __len__(self) -> int:
        return len(self._pois)

    def __iter__(self):
        return iter(self._pois)

    def get(self, poi_id: str) -> Optional[Poi]:
        return self._by_id.get(poi_id)

    def categories(self) -> dict[str, int]:
        return {cat: len(pois) for cat, pois in sorted(self._by_category.items())}

    def by_category(self, category: str) -> list[Poi]:
        return list(self._by_category.get(category.strip().lower(), []))

    def _cell_of(self, p: GeoPoint) -> tuple[int, int]:
        row = int(math.floor((p.lat + 90.0) / self.cell_deg))
        col = int(math.floor((p.lon + 180.0) / self.cell_deg)) % self._ncols
        return row, col

    def _cell_ranges(self, center: GeoPoint, radius_m: float) -> tuple[int, int, int, int]:
        """(row_lo, row_hi, col_lo, n_cols) covering the bounding box of the radius."""
        dlat = radius_m / METERS_PER_DEG_LAT
        lat_lo = max(-90.0, center.lat - dlat)
        lat_hi = min(90.0, center.lat + dlat)
        # widest parallel inside the band decides the longitude span
        max_abs_lat = min(90.0, max(abs(lat_lo), abs(lat_hi)))
        cos_lat = math.cos(math.radians(max_abs_lat))
        if cos_lat <= 1e-12 or radius_m >= math.pi * EARTH_RADIUS_M * cos_lat:
            dlon = 180.0
        else:
            dlon = min(180.0, radius_m / (METERS_PER_DEG_LAT * cos_lat))
        row_lo = int(math.floor((lat_lo + 90.0) / self.cell_deg))
        row_hi = int(math.floor((lat_hi + 90.0) / self.cell_deg))
        # column range may cross the antimeridian; it is walked modulo the wrap
        col_lo = int(math.floor((center.lon - dlon + 180.0) / self.cell_deg))
        col_hi = int(math.floor((center.lon + dlon + 180.0) / self.cell_deg))
        return row_lo, row_hi, col_lo, min(self._ncols, col_hi - col_lo + 1)

    def near(self, center: GeoPoint, radius_m: float) -> list[Poi]:
        """All POIs with haversine distance from center at most radius_m."""
        row_lo, row_hi, col_lo, ncols = self._cell_ranges(center, radius_m)
        n_cells = (row_hi - row_lo + 1) * ncols
        if n_cells > max(64, 8 * len(self._pois)):
            # wide query: enumerating cells would cost more than scanning
            return [p for p in self._pois if haversine_m(center, p.point) <= radius_m]
        out = []
        for row in range(row_lo, row_hi + 1):
            for k in range(ncols):
                for poi in self._grid.get((row, (col_lo + k) % self._ncols), ()):
                    if haversine_m(center, poi.point) <= radius_m:
                        out.append(poi)
        return out


def within(store: PoiStore, area: Circle) -> list[Poi]:
    """POIs inside the circle (boundary inclusive); order unspecified."""
    return store.near(area.center, area.radius_m)


def ring_query(store: PoiStore, center: GeoPoint, d: float, eps: float, category: str) -> list[Poi]:
    """POIs of the category whose distance from center differs from d by at most eps."""
    if d < 0 or eps < 0:
        raise ValueError("d and eps must be non-negative")
    cat = category.strip().lower()
    out = []
    for poi in store.near(center, d + eps):
        if poi.category == cat and abs(haversine_m(center, poi.point) - d) <= eps:
            out.append(poi)
    return out


def find_by_name(store: PoiStore, name: str, area: Optional[Circle] = None) -> list[Poi]:
    """POIs whose name matches case-insensitively after trimming, optionally inside area."""
    if not name.strip():
        raise ValueError("name must be non-empty")
    hits = store._by_name.get(name.strip().casefold(), [])
    if area is not None:
        hits = [p for p in hits if haversine_m(area.center, p.point) <= area.radius_m]
    return list(hits)


def _parse_latlon(raw_lat, raw_lon, where: str) -> GeoPoint:
    try:
        lat = float(raw_lat)
        lon = float(raw_lon)
    except (TypeError, ValueError):
        raise IngestError(f"{where}: lat/lon not numeric ({raw_lat!r}, {raw_lon!r})") from None
    try:
        return GeoPoint(lat, lon)
    except ValueError as exc:
        raise IngestError(f"{where}: {exc}") from None


def _load_csv(path: Path, cell_deg: float) -> PoiStore:
    pois = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "name", "lat", "lon", "category"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:line {lineno}"
            if not (row.get("id") or "").strip():
                raise IngestError(f"{where}: missing field 'id'")
            if not (row.get("name") or "").strip():
                raise IngestError(f"{where}: missing field 'name'")
            category = (row.get("category") or "").strip().lower()
            if not category:
                raise IngestError(f"{where}: missing field 'category'")
            point = _parse_latlon(row.get("lat"), row.get("lon"), where)
            pois.append(Poi(row["id"].strip(), row["name"].strip(), category, point))
    return PoiStore(pois, cell_deg=cell_deg)


def _load_geojson(path: Path, cell_deg: float) -> PoiStore:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise IngestError(f"{path}: not a FeatureCollection")
    pois = []
    for idx, feat in enumerate(doc["features"]):
        where = f"{path}:feature {idx}"
        if feat.get("id") in (None, ""):
            raise IngestError(f"{where}: missing feature 'id'")
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise IngestError(f"{where}: geometry must be a Point")
        coords = geom.get("coordinates")
        if not isinstance(coords, (list, tuple)) or len(coords) < 2:
            raise IngestError(f"{where}: malformed coordinates")
        props = feat.get("properties") or {}
        name = (props.get("name") or "").strip()
        if not name:
            raise IngestError(f"{where}: missing property 'name'")
        category = (props.get("category") or "").strip().lower()
        if not category:
            raise IngestError(f"{where}: missing property 'category'")
        point = _parse_latlon(coords[1], coords[0], where)
        tags = {k: str(v) for k, v in props.items() if k not in ("name", "category")}
        pois.append(Poi(str(feat["id"]), name, category, point, tags=tags or None))
    return PoiStore(pois, cell_deg=cell_deg)


def load_pois(source: str | Path, cell_deg: float = DEFAULT_CELL_DEG) -> PoiStore:
    """Load a POI dataset from a CSV or GeoJSON file.

    CSV needs the header ``id,name,lat,lon,category``; GeoJSON needs a
    FeatureCollection of Point features with ``id`` plus ``properties.name``
    and ``properties.category``. Malformed records and duplicate ids raise
    :class:`IngestError` naming the offending record.
    """
    path = Path(source)
    if not path.exists():
        raise IngestError(f"dataset not found: {path}")
    if path.suffix.lower() in (".json", ".geojson"):
        return _load_geojson(path, cell_deg)
    if path.suffix.lower() == ".csv":
        return _load_csv(path, cell_deg)
    # no recognizable extension: sniff the first byte
    with open(path, encoding="utf-8") as fh:
        head = fh.read(1)
    if head == "{":
        return _load_geojson(path, cell_deg)
    return _load_csv(path, cell_deg)


def dump_pois(store: PoiStore, path: str | Path, fmt: str = "csv") -> None:
    """Write the store back out; loading the result yields the same POI multiset."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "name", "lat", "lon", "category"])
            for poi in store:
                writer.writerow([poi.id, poi.name, repr(poi.point.lat), repr(poi.point.lon), poi.category])
    elif fmt == "geojson":
        features = [
            {
                "type": "Feature",
                "id": poi.id,
                "geometry": {"type": "Point", "coordinates": [poi.point.lon, poi.point.lat]},
                "properties": {"name": poi.name, "category": poi.category, **(poi.tags or {})},
            }
            for poi in store
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"type": "FeatureCollection", "features": features}, fh)
    else:
        raise ValueError(f"unknown format {fmt!r}")
