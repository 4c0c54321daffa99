"""Spatial exemplar search: find sets of places that sit together like a given
pattern of examples, built conversationally or queried directly."""

__version__ = "0.1.0"

from .geo import Circle, GeoPoint, Poi, PoiStore, haversine_m, load_pois
from .match import (
    ExampleSpec,
    ExemplarQuery,
    MatchConfig,
    MatchResult,
    QueryCache,
    brute_force_match,
    cached_search,
    match_exemplar,
    resolve_query,
)

__all__ = [
    "Circle",
    "GeoPoint",
    "Poi",
    "PoiStore",
    "haversine_m",
    "load_pois",
    "ExampleSpec",
    "ExemplarQuery",
    "MatchConfig",
    "MatchResult",
    "QueryCache",
    "brute_force_match",
    "cached_search",
    "match_exemplar",
    "resolve_query",
    "__version__",
]
