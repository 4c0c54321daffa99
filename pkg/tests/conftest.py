import math
from importlib.resources import files

import pytest

from seqsearch import match as matchmod
from seqsearch.dialogue import Orchestrator
from seqsearch.geo import load_pois
from seqsearch.server import Gazetteer

DATA = files("seqsearch").joinpath("data")


def reference_great_circle(lat1, lon1, lat2, lon2):
    """Independent spherical distance (atan2 form, not the haversine identity)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    num = math.sqrt(
        (math.cos(p2) * math.sin(dl)) ** 2
        + (math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)) ** 2
    )
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return 6_371_000.0 * math.atan2(num, den)


@pytest.fixture(scope="session")
def desk_store():
    return load_pois(str(DATA.joinpath("pois.csv")))


@pytest.fixture(scope="session")
def gazetteer():
    return Gazetteer.from_csv(str(DATA.joinpath("gazetteer.csv")))


def build_orchestrator(store, gazetteer=None, backends=None, searcher=None, **kwargs):
    """Orchestrator wired to a store the way the server wires it."""

    def resolver(examples):
        specs = [
            matchmod.ExampleSpec(
                kind=ex.kind,
                name=ex.name,
                category=ex.category if ex.kind == "category_only" else (ex.category or ""),
                anchor_distance_m=0.0,
            )
            for ex in examples
        ]
        resolved = matchmod.resolve_examples(store, specs)
        return [
            (spec.category, spec.anchor_distance_m) if ex.kind == "named" else (ex.category, ex.anchor_distance_m)
            for ex, spec in zip(examples, resolved)
        ]

    if searcher is None:
        def searcher(query):
            return matchmod.match_exemplar(store, query)

    kwargs.setdefault("clock", lambda: 0.0)
    return Orchestrator(
        backends=backends,
        resolver=resolver,
        geocoder=gazetteer.geocode_detail if gazetteer else None,
        searcher=searcher,
        **kwargs,
    )


DEMO_TURNS = [
    "I want to search for places like 1. Suntec City and 2. Anytime Fitness City Hall. "
    "The distance in meters of each place from the first place is 416 meters.",
    "I want to add a hotel",
    "Any hotel within 200 meters",
    "In downtown Sydney",
]

DEMO_PATH = [
    "collect_examples",
    "confirm_examples",
    "collect_examples",
    "confirm_examples",
    "collect_area",
    "confirm_query",
    "execute_search",
    "present_results",
]
