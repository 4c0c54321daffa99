"""Acceptance gate: one test per primary criterion, each printing a PASS/FAIL
line (run with ``pytest tests/test_acceptance.py -v -s``)."""

import json
import math
import random
import time
from contextlib import contextmanager

import pytest
from fastapi.testclient import TestClient
from scipy.stats import chisquare

from bleu_reference import reference_self_bleu
from conftest import DEMO_PATH, DEMO_TURNS, build_orchestrator, reference_great_circle
from genutil import random_query, random_store
from seqsearch.backends import BackendRegistry, ScriptedBackend
from seqsearch.geo import GeoPoint, haversine_m, load_pois
from seqsearch.match import (
    MatchConfig,
    QueryCache,
    brute_force_match,
    cached_search,
    match_exemplar,
    query_from_wire,
    resolve_query,
)
from seqsearch.server import ServerConfig, create_app
from seqsearch.stategraph import load_graph
from seqsearch.synth import generate_dataset, random_walk, self_bleu, validate_sample
from conftest import DATA


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS")


def test_matcher_oracle_equivalence():
    with criterion("matcher/oracle equivalence"):
        started = time.monotonic()
        rng = random.Random(20_2408)
        categories = ["cafe", "gym", "hotel", "mall", "park", "station"]
        for i in range(200):
            store = random_store(rng, rng.randint(8, 60), categories)
            query = random_query(rng, categories, m=(i % 3) + 1)
            fast = match_exemplar(store, query, MatchConfig(cap=None))
            oracle = brute_force_match(store, query)
            assert len(fast) == len(oracle), f"instance {i}: size mismatch"
            for a, b in zip(fast, oracle):
                assert [p.id for p in a.assignment] == [p.id for p in b.assignment], f"instance {i}"
                assert abs(a.score_m - b.score_m) <= 1e-9, f"instance {i}"
        elapsed = time.monotonic() - started
        assert elapsed <= 60.0, f"took {elapsed:.1f}s"


def test_demo_scenario_reproduction(desk_store, gazetteer):
    with criterion("demo-scenario reproduction"):
        started = time.monotonic()
        orch = build_orchestrator(desk_store, gazetteer)
        session = orch.new_session("demo")
        for turn in DEMO_TURNS:
            orch.advance(session, turn)

        assert session.path == DEMO_PATH

        wire = orch.draft_wire(session)
        examples = wire["examples"]
        assert [(e["kind"], e["name"]) for e in examples] == [
            ("named", "Suntec City"),
            ("named", "Anytime Fitness City Hall"),
            ("category_only", None),
        ]
        assert [e["category"] for e in examples] == ["mall", "gym", "hotel"]
        assert examples[1]["anchor_distance_m"] == pytest.approx(461.0, abs=2.0)
        assert examples[2]["anchor_distance_m"] == 200.0

        assert session.last_results, "search returned no results"
        query = resolve_query(desk_store, query_from_wire(wire))
        oracle = brute_force_match(desk_store, query)
        assert [[p.id for p in r.assignment] for r in session.last_results] == [
            [p.id for p in r.assignment] for r in oracle
        ]
        elapsed = time.monotonic() - started
        assert elapsed <= 5.0, f"took {elapsed:.1f}s"


def test_distance_correctness():
    with criterion("distance correctness"):
        p = GeoPoint(-33.8688, 151.2093)
        assert haversine_m(p, p) == 0.0
        assert haversine_m(GeoPoint(0, 0), GeoPoint(0, 180)) == math.pi * 6_371_000.0
        rng = random.Random(8)
        for _ in range(100):
            a = GeoPoint(rng.uniform(-89, 89), rng.uniform(-180, 180))
            b = GeoPoint(rng.uniform(-89, 89), rng.uniform(-180, 180))
            expected = reference_great_circle(a.lat, a.lon, b.lat, b.lon)
            assert haversine_m(a, b) == pytest.approx(expected, rel=1e-3, abs=1e-6)


SYNTH_SCRIPT = {
    "greet": [
        "Hello! I can help you find a set of places that sit together the way you want.",
        "Hi! Ready to hunt for a combination of places?",
    ],
    "ask_examples": [
        "Please give me some example places, by name or by category.",
        "Which places should the results resemble?",
    ],
    "spatial_examples": [
        "I want to look for places like a gym and a station.",
        "Find me spots like a cafe and a park.",
        "I want to search for places like 1. Suntec City and 2. Anytime Fitness City Hall.",
    ],
    "spatial_examples#query": [
        '["gym", "station"]',
        '["cafe", "park"]',
        '{"examples": [{"kind": "named", "name": "Suntec City", "category": "", "anchor_distance_m": 0},'
        ' {"kind": "named", "name": "Anytime Fitness City Hall", "category": "", "anchor_distance_m": 0}]}',
    ],
    "select_examples": [
        "You have picked those examples. Do you want to continue and acknowledge the selection?",
        "Noted. Shall we keep this selection?",
    ],
    "add_example": ["I want to add a hotel", "Can you also add a pharmacy?"],
    "add_example#query": ['["hotel"]', '["pharmacy"]'],
    "set_distances": [
        "The distance in meters of each place from the first place is 416 meters.",
        "The distances from the first place are 250 and 700 meters.",
    ],
    "set_distances#query": ['{"distances": [416]}', '{"distances": [250, 700]}'],
    "confirm_examples": ["Your examples are locked in. Next I need a search area."],
    "ask_area": [
        "Now I need you to provide a general search area to look within, like a neighborhood, city, region, or even a specific landmark.",
    ],
    "give_area": ["In downtown Sydney", "Near Marina Bay"],
    "give_area#query": ['{"area": {"name": "downtown Sydney"}}', '{"area": {"name": "Marina Bay"}}'],
    "confirm_area": ["Your search area is valid. I'm at hard work to find the best match!"],
    "clarify": ["Sorry, could you rephrase that?"],
    "error_recovery": ["Apologies, I hit a snag. Could you repeat that?"],
    "farewell": ["Happy exploring! Come back when you want another search."],
}


def test_synthesis_validity_at_full_scale(tmp_path):
    with criterion("synthesis validity at full scale (n=2000)"):
        started = time.monotonic()
        graph = load_graph(str(DATA.joinpath("synth_graph.json")))
        out = tmp_path / "synth2000.jsonl"
        report = generate_dataset(graph, ScriptedBackend(SYNTH_SCRIPT), n=2000, seed=99, out_path=out)
        lines = out.read_text().splitlines()
        assert len(lines) == 2000
        assert report["written"] == 2000
        for line in lines:
            obj = json.loads(line)
            assert validate_sample(obj, graph) == [], validate_sample(obj, graph)
            assert obj["path"][-1] == "stop"
        again = tmp_path / "synth2000b.jsonl"
        generate_dataset(graph, ScriptedBackend(SYNTH_SCRIPT), n=2000, seed=99, out_path=again)
        assert again.read_bytes() == out.read_bytes()
        elapsed = time.monotonic() - started
        assert elapsed <= 120.0, f"took {elapsed:.1f}s"


def test_walk_statistics_chi_square():
    with criterion("walk statistics (chi-square)"):
        graph = load_graph(
            {
                "start": "s",
                "states": [
                    {"name": "s", "transitions": [{"to": "a", "weight": 3}, {"to": "b", "weight": 1}]},
                    {"name": "a", "transitions": [{"to": "stop", "weight": 1}]},
                    {"name": "b", "transitions": [{"to": "stop", "weight": 1}]},
                    {"name": "stop", "transitions": []},
                ],
            }
        )
        n = 10_000
        counts = {"a": 0, "b": 0}
        for seed in range(n):
            counts[random_walk(graph, seed)[1]] += 1
        result = chisquare([counts["a"], counts["b"]], f_exp=[n * 0.75, n * 0.25])
        assert result.pvalue >= 0.01, f"chi-square rejected: p={result.pvalue}"


def test_self_bleu_sanity():
    with criterion("self-BLEU sanity"):
        identical = [["I want a gym and a station nearby"]] * 6
        assert self_bleu(identical) == 1.0
        rng = random.Random(17)
        vocab = "look for a gym station hotel mall cafe park near the city with great views".split()
        mixed = []
        for _ in range(10):
            mixed.append(
                [
                    " ".join(rng.choice(vocab) for _ in range(rng.randint(5, 14)))
                    for _ in range(rng.randint(1, 3))
                ]
            )
        ours = self_bleu(mixed)
        reference = reference_self_bleu(mixed)
        assert abs(ours - reference) <= 1e-6
        assert 0.0 < ours < 1.0


def test_cache_behavior(desk_store):
    with criterion("cache behavior"):
        cache = QueryCache()
        calls = {"n": 0}

        def counting_match(store, query, config=None):
            calls["n"] += 1
            return match_exemplar(store, query, config)

        wire = {
            "examples": [
                {"kind": "category_only", "name": None, "category": "mall", "anchor_distance_m": 0},
                {"kind": "category_only", "name": None, "category": "hotel", "anchor_distance_m": 200},
            ],
            "area": {"center": {"lat": 1.2931, "lon": 103.8558}, "radius_m": 2000.0},
            "k": 5,
            "eps_m": 400.0,
        }
        query = query_from_wire(wire)
        first, hit1 = cached_search(cache, desk_store, query, match_fn=counting_match)
        second, hit2 = cached_search(cache, desk_store, query, match_fn=counting_match)
        assert (hit1, hit2) == (False, True)
        assert calls["n"] == 1, "cache hit must not invoke the matcher"
        assert second == first

        # LRU eviction with capacity 2
        small = QueryCache(capacity=2)
        variants = []
        for d in (100.0, 600.0, 1200.0):
            v = dict(wire)
            v["examples"] = [dict(wire["examples"][0]), {**wire["examples"][1], "anchor_distance_m": d}]
            variants.append(query_from_wire(v))
        cached_search(small, desk_store, variants[0])
        cached_search(small, desk_store, variants[1])
        cached_search(small, desk_store, variants[2])
        _, hit = cached_search(small, desk_store, variants[0])
        assert hit is False, "least-recently-used entry must be evicted"

        # dataset reload bumps the generation and invalidates
        cache2 = QueryCache()
        cached_search(cache2, desk_store, query)
        reloaded = load_pois(str(DATA.joinpath("pois.csv")))
        _, hit = cached_search(cache2, reloaded, query)
        assert hit is False, "reload must invalidate the cache"


class _FuzzBackend:
    def __init__(self, seed):
        self.rng = random.Random(seed)
        self.pieces = [
            "hello there", "ok", "<SIG:", "SIG>", "<SIG:stay>", "<SIG:stop>",
            "<SIG:proceed:collect_area>", "<SIG:back:collect_examples>",
            "<SIG:proceed:unknown_state>", "<SIG:stay:bogus>", "<SIG:proceed:>",
            "", "\n", "multi\nline\ntext",
        ]

    def complete(self, messages, constraints=None, session_id=None):
        n = self.rng.randint(0, 4)
        return " ".join(self.rng.choice(self.pieces) for _ in range(n))


def test_protocol_robustness_fuzz(desk_store, gazetteer):
    with criterion("protocol robustness fuzz (10k replies)"):
        backend = _FuzzBackend(4242)
        orch = build_orchestrator(desk_store, gazetteer, backends=BackendRegistry.single(backend))
        rng = random.Random(11)
        texts = [
            "hello", "places like a gym and a station", "In downtown Sydney",
            "yes", "stop", "add a hotel", "lat 1.29 lon 103.85 radius 500",
        ]
        session = orch.new_session("fuzz")
        replies = 0
        while replies < 10_000:
            if session.state == "stop":
                session = orch.new_session("fuzz")
            reply, session = orch.advance(session, rng.choice(texts))
            replies += 1
            assert session.state in orch.graph.states
            assert "<SIG:" not in reply


def test_api_contract():
    with criterion("API contract"):
        app = create_app(ServerConfig.bundled())
        with TestClient(app, raise_server_exceptions=False) as client:
            # full demo transcript end to end, every step 2xx
            session_id = client.post("/api/sessions").json()["session_id"]
            last = None
            for turn in DEMO_TURNS:
                resp = client.post(f"/api/sessions/{session_id}/messages", json={"text": turn})
                assert 200 <= resp.status_code < 300, resp.text
                last = resp.json()
            assert last["state"] == "present_results"
            assert last["results"]

            # malformed bodies: structured 4xx, never a crash
            bad_bodies = [b"{not json", b"[]", b'{"weird": true}', b"null"]
            for raw in bad_bodies:
                resp = client.post(
                    f"/api/sessions/{session_id}/messages",
                    content=raw,
                    headers={"Content-Type": "application/json"},
                )
                assert 400 <= resp.status_code < 500, raw
                assert "error" in resp.json()
            resp = client.post("/api/search", content=b"12", headers={"Content-Type": "application/json"})
            assert 400 <= resp.status_code < 500
            assert "error" in resp.json()

            # interleaved sessions stay isolated
            a = client.post("/api/sessions").json()["session_id"]
            b = client.post("/api/sessions").json()["session_id"]
            client.post(f"/api/sessions/{a}/messages", json={"text": "places like a gym and a station"})
            client.post(f"/api/sessions/{b}/messages", json={"text": "places like a hotel and a cafe"})
            client.post(f"/api/sessions/{a}/messages", json={"text": "The distances are 300 meters"})
            draft_a = client.get(f"/api/sessions/{a}").json()["draft"]
            draft_b = client.get(f"/api/sessions/{b}").json()["draft"]
            assert [e["category"] for e in draft_a["examples"]] == ["gym", "station"]
            assert draft_a["examples"][1]["anchor_distance_m"] == 300.0
            assert [e["category"] for e in draft_b["examples"]] == ["hotel", "cafe"]
            assert draft_b["examples"][1]["anchor_distance_m"] is None
