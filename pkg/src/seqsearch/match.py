"""Exemplar-set matching: find and rank location sets that mirror a pattern of
example places inside a target area.

A query holds ordered example slots. Slot 1 is the anchor; every other slot
carries the distance it should sit from the anchor. A result assigns one POI
per slot, all inside the area, categories matching, with each realized
anchor distance within ``eps_m`` of the requested one. Results are ranked by
the mean absolute deviation from the requested distances (meters, lower is
better) and mapped to a similarity in (0, 1].
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .geo import Circle, GeoPoint, Poi, PoiStore, find_by_name, haversine_m, ring_query, within

DEFAULT_K = 10
DEFAULT_EPS_M = 500.0
DEFAULT_CANDIDATE_CAP = 8
BRUTE_FORCE_LIMIT = 10_000_000


class MatchError(ValueError):
    pass


class UnknownPlace(MatchError):
    def __init__(self, name: str):
        super().__init__(f"no place named {name!r} in the dataset")
        self.name = name


class AmbiguousPlace(MatchError):
    def __init__(self, name: str, candidates: list[Poi]):
        super().__init__(f"{len(candidates)} places named {name!r}; cannot pick one")
        self.name = name
        self.candidates = candidates


class AnchorUnresolved(MatchError):
    def __init__(self):
        super().__init__("slot 1 must resolve to a place before named slots can be anchored")


class InstanceTooLarge(MatchError):
    pass


@dataclass(frozen=True)
class ExampleSpec:
    """One example slot: a named place or a bare category, plus its anchor distance.

    ``anchor_distance_m`` is the requested distance from slot 1 and must be 0
    for slot 1 itself. Named specs may carry an empty category until they are
    resolved against a dataset.
    """

    kind: str  # "named" | "category_only"
    category: str
    name: Optional[str] = None
    anchor_distance_m: float = 0.0

    def __post_init__(self):
        if self.kind not in ("named", "category_only"):
            raise ValueError(f"kind must be named or category_only, got {self.kind!r}")
        if self.kind == "named" and not (self.name or "").strip():
            raise ValueError("named example requires a name")
        if self.kind == "category_only" and not self.category.strip():
            raise ValueError("category_only example requires a category")
        if not (math.isfinite(self.anchor_distance_m) and self.anchor_distance_m >= 0):
            raise ValueError(f"anchor_distance_m must be finite and >= 0, got {self.anchor_distance_m}")


@dataclass(frozen=True)
class ExemplarQuery:
    examples: tuple[ExampleSpec, ...]
    area: Circle
    k: int = DEFAULT_K
    eps_m: float = DEFAULT_EPS_M

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if len(self.examples) < 1:
            raise ValueError("query needs at least one example")
        if self.examples[0].anchor_distance_m != 0:
            raise ValueError("slot 1 must have anchor_distance_m = 0")
        if self.k < 1:
            raise ValueError("k must be positive")
        if not (math.isfinite(self.eps_m) and self.eps_m > 0):
            raise ValueError("eps_m must be positive and finite")

    @property
    def resolved(self) -> bool:
        return all(ex.category for ex in self.examples)


@dataclass(frozen=True)
class MatchResult:
    assignment: tuple[Poi, ...]
    score_m: float
    similarity: float


@dataclass(frozen=True)
class MatchConfig:
    # candidates kept per non-anchor slot before combinations are enumerated;
    # None means no truncation
    cap: Optional[int] = DEFAULT_CANDIDATE_CAP


def similarity_from_score(score_m: float) -> float:
    return 1.0 / (1.0 + score_m / 100.0)


def score(query: ExemplarQuery, assignment: list[Poi] | tuple[Poi, ...]) -> float:
    """Mean absolute deviation (meters) between realized and requested anchor distances."""
    m = len(query.examples)
    if len(assignment) != m:
        raise MatchError(f"assignment has {len(assignment)} pois for {m} slots")
    if m == 1:
        return 0.0
    anchor = assignment[0].point
    total = 0.0
    for i in range(1, m):
        actual = haversine_m(anchor, assignment[i].point)
        total += abs(actual - query.examples[i].anchor_distance_m)
    return total / (m - 1)


def _require_resolved(query: ExemplarQuery):
    if not query.resolved:
        raise MatchError("query has unresolved named examples; call resolve_query first")


def resolve_examples(store: PoiStore, examples: tuple[ExampleSpec, ...] | list[ExampleSpec]) -> tuple[ExampleSpec, ...]:
    """Resolve named example slots against the dataset.

    Each named spec must match exactly one POI; its category is taken from the
    dataset and, for slots past the first, its anchor distance is recomputed
    from the resolved slot-1 place (any user-stated distance is advisory).
    Category-only specs pass through unchanged.
    """
    if len(examples) < 1:
        raise MatchError("query needs at least one example")
    resolved_pois: list[Optional[Poi]] = []
    for ex in examples:
        if ex.kind == "named":
            hits = find_by_name(store, ex.name or "")
            if not hits:
                raise UnknownPlace(ex.name or "")
            if len(hits) > 1:
                raise AmbiguousPlace(ex.name or "", hits)
            resolved_pois.append(hits[0])
        else:
            resolved_pois.append(None)
    out = []
    anchor_poi = resolved_pois[0]
    for i, (ex, poi) in enumerate(zip(examples, resolved_pois)):
        if poi is None:
            out.append(ex)
            continue
        if i == 0:
            dist = 0.0
        else:
            if anchor_poi is None:
                raise AnchorUnresolved()
            dist = haversine_m(anchor_poi.point, poi.point)
        out.append(replace(ex, category=poi.category, anchor_distance_m=dist))
    return tuple(out)


def resolve_query(store: PoiStore, raw: ExemplarQuery) -> ExemplarQuery:
    """Resolve a query's named examples; see :func:`resolve_examples`."""
    return replace(raw, examples=resolve_examples(store, raw.examples))


def _rank_key(scored: tuple[float, tuple[Poi, ...]]):
    score_m, assignment = scored
    return (score_m, tuple(p.id for p in assignment))


def _finalize(scored: list[tuple[float, tuple[Poi, ...]]], k: int) -> list[MatchResult]:
    scored.sort(key=_rank_key)
    return [
        MatchResult(assignment=a, score_m=s, similarity=similarity_from_score(s))
        for s, a in scored[:k]
    ]


def match_exemplar(store: PoiStore, query: ExemplarQuery, config: Optional[MatchConfig] = None) -> list[MatchResult]:
    """Rank location sets matching the query inside its area.

    Anchors are drawn from category-matched POIs in the area; candidates for
    each later slot come from a ring around the anchor at the requested
    distance (tolerance ``eps_m``), truncated to the ``cap`` best per slot by
    ring deviation; all injective combinations are scored.
    """
    _require_resolved(query)
    config = config or MatchConfig()
    m = len(query.examples)
    area = query.area
    in_area = within(store, area)
    anchors = sorted(
        (p for p in in_area if p.category == query.examples[0].category),
        key=lambda p: p.id,
    )
    if m == 1:
        return _finalize([(0.0, (p,)) for p in anchors], query.k)

    area_ids = {p.id for p in in_area}
    scored: list[tuple[float, tuple[Poi, ...]]] = []
    for anchor in anchors:
        slot_candidates: list[list[Poi]] = []
        for i in range(1, m):
            ex = query.examples[i]
            ring = [
                p
                for p in ring_query(store, anchor.point, ex.anchor_distance_m, query.eps_m, ex.category)
                if p.id in area_ids and p.id != anchor.id
            ]
            if config.cap is not None:
                ring.sort(
                    key=lambda p, d=ex.anchor_distance_m: (
                        abs(haversine_m(anchor.point, p.point) - d),
                        p.id,
                    )
                )
                ring = ring[: config.cap]
            slot_candidates.append(ring)
        if any(not c for c in slot_candidates):
            continue
        for combo in itertools.product(*slot_candidates):
            ids = {p.id for p in combo}
            if len(ids) != m - 1 or anchor.id in ids:
                continue
            assignment = (anchor, *combo)
            scored.append((score(query, assignment), assignment))
    return _finalize(scored, query.k)


def brute_force_match(store: PoiStore, query: ExemplarQuery) -> list[MatchResult]:
    """Exhaustive oracle: every injective category-respecting assignment in the area.

    Intended for small instances; refuses when the candidate product exceeds
    ``BRUTE_FORCE_LIMIT``.
    """
    _require_resolved(query)
    m = len(query.examples)
    in_area = within(store, query.area)
    per_slot = [
        sorted((p for p in in_area if p.category == ex.category), key=lambda p: p.id)
        for ex in query.examples
    ]
    product = 1
    for cands in per_slot:
        product *= len(cands)
        if product > BRUTE_FORCE_LIMIT:
            raise InstanceTooLarge(f"candidate product exceeds {BRUTE_FORCE_LIMIT}")
    scored: list[tuple[float, tuple[Poi, ...]]] = []
    eps = query.eps_m
    for combo in itertools.product(*per_slot):
        ids = {p.id for p in combo}
        if len(ids) != m:
            continue
        anchor = combo[0].point
        ok = True
        for i in range(1, m):
            if abs(haversine_m(anchor, combo[i].point) - query.examples[i].anchor_distance_m) > eps:
                ok = False
                break
        if ok:
            scored.append((score(query, combo), combo))
    return _finalize(scored, query.k)


def cache_key(query: ExemplarQuery) -> str:
    """Canonical cache key; nearby numeric inputs land on the same key.

    Anchor distances round to 10 m, the area center to 4 decimal degrees and
    the radius to 100 m; k and eps are kept verbatim.
    """
    parts = {
        "examples": [
            [ex.category.lower(), round(ex.anchor_distance_m / 10.0) * 10]
            for ex in query.examples
        ],
        "area": [
            round(query.area.center.lat, 4),
            round(query.area.center.lon, 4),
            round(query.area.radius_m / 100.0) * 100,
        ],
        "k": query.k,
        "eps_m": query.eps_m,
    }
    return json.dumps(parts, separators=(",", ":"))


class QueryCache:
    """LRU cache of ranked results keyed by canonical query, generation-aware.

    A reload of the dataset (new store generation) invalidates everything.
    Concurrent misses for one key compute once (single flight).
    """

    def __init__(self, capacity: int = 256):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._entries: OrderedDict[str, list[MatchResult]] = OrderedDict()
        self._generation: Optional[int] = None
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Lock] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def _sync_generation(self, generation: int):
        if self._generation != generation:
            self._entries.clear()
            self._inflight.clear()
            self._generation = generation

    def lookup(self, key: str, generation: int) -> Optional[list[MatchResult]]:
        with self._lock:
            self._sync_generation(generation)
            if key not in self._entries:
                return None
            self._entries.move_to_end(key)
            return self._entries[key]

    def store(self, key: str, generation: int, results: list[MatchResult]):
        with self._lock:
            self._sync_generation(generation)
            self._entries[key] = results
            self._entries.move_to_end(key)
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)

    def _key_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._inflight.setdefault(key, threading.Lock())


def cached_search(
    cache: QueryCache,
    store: PoiStore,
    query: ExemplarQuery,
    config: Optional[MatchConfig] = None,
    match_fn: Callable[..., list[MatchResult]] = match_exemplar,
) -> tuple[list[MatchResult], bool]:
    """Run a match through the cache; returns (results, hit)."""
    key = cache_key(query)
    found = cache.lookup(key, store.generation)
    if found is not None:
        return found, True
    with cache._key_lock(key):
        found = cache.lookup(key, store.generation)
        if found is not None:
            return found, True
        results = match_fn(store, query, config)
        cache.store(key, store.generation, results)
    return results, False


# --- wire form -------------------------------------------------------------
#
# {"examples":[{"kind":...,"name":...,"category":...,"anchor_distance_m":...}],
#  "area":{"center":{"lat":...,"lon":...},"radius_m":...},"k":...,"eps_m":...}


def example_to_wire(ex: ExampleSpec) -> dict:
    return {
        "kind": ex.kind,
        "name": ex.name,
        "category": ex.category,
        "anchor_distance_m": ex.anchor_distance_m,
    }


def circle_to_wire(area: Circle) -> dict:
    return {
        "center": {"lat": area.center.lat, "lon": area.center.lon},
        "radius_m": area.radius_m,
    }


def query_to_wire(query: ExemplarQuery) -> dict:
    return {
        "examples": [example_to_wire(ex) for ex in query.examples],
        "area": circle_to_wire(query.area),
        "k": query.k,
        "eps_m": query.eps_m,
    }


def example_from_wire(obj: dict) -> ExampleSpec:
    if not isinstance(obj, dict):
        raise MatchError(f"example must be an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind not in ("named", "category_only"):
        raise MatchError(f"example kind must be named or category_only, got {kind!r}")
    try:
        return ExampleSpec(
            kind=kind,
            name=obj.get("name"),
            category=str(obj.get("category") or "").strip().lower(),
            anchor_distance_m=float(obj.get("anchor_distance_m", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise MatchError(f"bad example: {exc}") from None


def circle_from_wire(obj: dict) -> Circle:
    if not isinstance(obj, dict):
        raise MatchError("area must be an object")
    center = obj.get("center")
    if not isinstance(center, dict):
        raise MatchError("area.center must be an object with lat/lon")
    try:
        return Circle(
            center=GeoPoint(float(center["lat"]), float(center["lon"])),
            radius_m=float(obj["radius_m"]),
        )
    except KeyError as exc:
        raise MatchError(f"area missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise MatchError(f"bad area: {exc}") from None


def query_from_wire(obj: dict) -> ExemplarQuery:
    if not isinstance(obj, dict):
        raise MatchError("query must be an object")
    raw_examples = obj.get("examples")
    if not isinstance(raw_examples, list) or not raw_examples:
        raise MatchError("query.examples must be a non-empty list")
    examples = [example_from_wire(e) for e in raw_examples]
    if "area" not in obj:
        raise MatchError("query.area is required")
    try:
        return ExemplarQuery(
            examples=tuple(examples),
            area=circle_from_wire(obj["area"]),
            k=int(obj.get("k", DEFAULT_K)),
            eps_m=float(obj.get("eps_m", DEFAULT_EPS_M)),
        )
    except (TypeError, ValueError) as exc:
        raise MatchError(f"bad query: {exc}") from None


def validate_wire_query(obj: dict, partial: bool = False) -> list[str]:
    """Schema check for the wire form; returns a list of problems (empty = valid).

    ``partial`` permits a missing/null area or an area given as {"name": str},
    which is how drafts and synthesized training queries carry an unresolved
    region.
    """
    problems: list[str] = []
    if not isinstance(obj, dict):
        return ["query must be an object"]
    examples = obj.get("examples")
    if not isinstance(examples, list) or not examples:
        problems.append("examples must be a non-empty list")
    else:
        for i, ex in enumerate(examples):
            try:
                spec = example_from_wire(ex)
            except MatchError as exc:
                problems.append(f"examples[{i}]: {exc}")
                continue
            if i == 0 and spec.anchor_distance_m != 0:
                problems.append("examples[0] must have anchor_distance_m = 0")
            if spec.kind == "category_only" and not spec.category:
                problems.append(f"examples[{i}]: category required")
    area = obj.get("area")
    if area is None:
        if not partial:
            problems.append("area is required")
    elif isinstance(area, dict) and set(area.keys()) == {"name"}:
        if not partial:
            problems.append("area must be a circle, not a name")
        elif not isinstance(area["name"], str) or not area["name"].strip():
            problems.append("area.name must be a non-empty string")
    else:
        try:
            circle_from_wire(area)
        except MatchError as exc:
            problems.append(str(exc))
    if "k" in obj and (not isinstance(obj["k"], int) or obj["k"] < 1):
        problems.append("k must be a positive integer")
    if "eps_m" in obj:
        try:
            if float(obj["eps_m"]) <= 0:
                problems.append("eps_m must be positive")
        except (TypeError, ValueError):
            problems.append("eps_m must be a number")
    return problems


def result_to_wire(result: MatchResult) -> dict:
    return {
        "assignment": [
            {
                "id": p.id,
                "name": p.name,
                "category": p.category,
                "lat": p.point.lat,
                "lon": p.point.lon,
            }
            for p in result.assignment
        ],
        "score_m": result.score_m,
        "similarity": result.similarity,
    }
