"""HTTP service: sessions, direct search, geocoding and POI browsing.

One process hosts the dataset, the match cache, the gazetteer and the chat
orchestrator. Sessions live in memory with idle-TTL eviction; concurrent
messages to one session are rejected with 409 so each session stays
single-writer. Every error body has the shape
``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import csv
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import match as matchmod
from .backends import BackendRegistry, BudgetExhausted
from .dialogue import DraftExample, Orchestrator, Session, SessionStopped
from .geo import Circle, GeoPoint, PoiStore, load_pois
from .match import (
    AmbiguousPlace,
    ExampleSpec,
    MatchConfig,
    MatchError,
    QueryCache,
    UnknownPlace,
    cached_search,
    resolve_examples,
    resolve_query,
    result_to_wire,
)
from .stategraph import StateGraph, load_graph


class UnknownArea(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"no area named {self.name!r} in the gazetteer"


# qualifiers that shrink a matched area to its core
_NARROWING_QUALIFIERS = {"downtown"}


class Gazetteer:
    """Local name -> circle lookup standing in for a geocoding service."""

    def __init__(self, entries: dict[str, Circle]):
        self.entries = {self._norm(name): circle for name, circle in entries.items()}

    @staticmethod
    def _norm(name: str) -> str:
        return " ".join(name.strip().lower().split())

    @classmethod
    def from_csv(cls, path: str | Path) -> "Gazetteer":
        entries: dict[str, Circle] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.DictReader(fh), start=2):
                name = cls._norm(row.get("name") or "")
                if not name:
                    raise ValueError(f"{path}:line {i}: empty gazetteer name")
                if name in entries:
                    raise ValueError(f"{path}:line {i}: duplicate gazetteer name {name!r}")
                entries[name] = Circle(
                    GeoPoint(float(row["lat"]), float(row["lon"])), float(row["radius_m"])
                )
        return cls(entries)

    def geocode_detail(self, name: str) -> tuple[Circle, str, str]:
        """Resolve a region name to (circle, matched entry, note).

        Exact match first, then the longest suffix of the words; a leading
        "downtown" qualifier halves the matched radius, other dropped
        qualifiers are ignored with a note.
        """
        if not name.strip():
            raise UnknownArea(name)
        norm = self._norm(name)
        if norm in self.entries:
            return self.entries[norm], norm, ""
        words = norm.split()
        for i in range(1, len(words)):
            suffix = " ".join(words[i:])
            if suffix not in self.entries:
                continue
            circle = self.entries[suffix]
            notes = []
            for qualifier in words[:i]:
                if qualifier in _NARROWING_QUALIFIERS:
                    circle = Circle(circle.center, circle.radius_m / 2.0)
                else:
                    notes.append(qualifier)
            note = f"(ignored qualifier: {', '.join(notes)})" if notes else ""
            return circle, suffix, note
        raise UnknownArea(name)

    def geocode(self, name: str) -> Circle:
        return self.geocode_detail(name)[0]


@dataclass
class ServerConfig:
    dataset_path: str
    gazetteer_path: str
    graph_path: str
    listen: str = "127.0.0.1:8008"
    backends: dict = field(default_factory=lambda: {"backends": {"rule": {"kind": "rule"}}, "default": "rule"})
    cache_capacity: int = 256
    default_k: int = 10
    default_eps_m: float = 500.0
    session_ttl_s: float = 3600.0

    def __post_init__(self):
        for label, path in (
            ("dataset", self.dataset_path),
            ("gazetteer", self.gazetteer_path),
            ("graph", self.graph_path),
        ):
            if not Path(path).is_file():
                raise ValueError(f"{label} path not readable: {path}")
        host, _, port = self.listen.partition(":")
        if not host or not port.isdigit():
            raise ValueError(f"listen must be host:port, got {self.listen!r}")
        if self.cache_capacity < 1 or self.default_k < 1 or self.default_eps_m <= 0:
            raise ValueError("cache_capacity, default_k and default_eps_m must be positive")

    @property
    def host(self) -> str:
        return self.listen.partition(":")[0]

    @property
    def port(self) -> int:
        return int(self.listen.partition(":")[2])

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {
            "dataset_path", "gazetteer_path", "graph_path", "listen", "backends",
            "cache_capacity", "default_k", "default_eps_m", "session_ttl_s",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def bundled(cls, listen: str = "127.0.0.1:8008") -> "ServerConfig":
        data = files("seqsearch").joinpath("data")
        return cls(
            dataset_path=str(data.joinpath("pois.csv")),
            gazetteer_path=str(data.joinpath("gazetteer.csv")),
            graph_path=str(data.joinpath("runtime_graph.json")),
            listen=listen,
        )


@dataclass
class _SessionEntry:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.time)


class MessageBody(BaseModel):
    text: str


class GeocodeBody(BaseModel):
    name: str


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def create_app(config: Optional[ServerConfig] = None) -> FastAPI:
    config = config or ServerConfig.bundled()
    store: PoiStore = load_pois(config.dataset_path)
    gazetteer = Gazetteer.from_csv(config.gazetteer_path)
    graph: StateGraph = load_graph(config.graph_path)
    registry = BackendRegistry.from_config(config.backends)
    cache = QueryCache(capacity=config.cache_capacity)
    match_config = MatchConfig()

    def resolver(examples: list[DraftExample]) -> list[tuple[str, Optional[float]]]:
        specs = [
            ExampleSpec(
                kind=ex.kind,
                name=ex.name,
                category=ex.category if ex.kind == "category_only" else (ex.category or ""),
                anchor_distance_m=0.0,
            )
            for ex in examples
        ]
        resolved = resolve_examples(store, specs)
        out = []
        for ex, spec in zip(examples, resolved):
            if ex.kind == "named":
                out.append((spec.category, spec.anchor_distance_m))
            else:
                out.append((ex.category, ex.anchor_distance_m))
        return out

    def searcher(query):
        results, _ = cached_search(cache, store, query, match_config)
        return results

    orchestrator = Orchestrator(
        graph=graph,
        backends=registry,
        resolver=resolver,
        geocoder=gazetteer.geocode_detail,
        searcher=searcher,
        k=config.default_k,
        eps_m=config.default_eps_m,
    )

    sessions: dict[str, _SessionEntry] = {}
    sessions_lock = threading.Lock()

    def _sweep_sessions():
        now = time.time()
        stale = [sid for sid, e in sessions.items() if now - e.last_access > config.session_ttl_s]
        for sid in stale:
            sessions.pop(sid, None)

    app = FastAPI(title="seqsearch", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, "VALIDATION", str(exc.errors()[:3]))

    @app.exception_handler(json.JSONDecodeError)
    async def _json_handler(request: Request, exc: json.JSONDecodeError):
        return _error(400, "BAD_JSON", f"request body is not valid JSON: {exc}")

    @app.exception_handler(Exception)
    async def _fallback_handler(request: Request, exc: Exception):
        return _error(500, "INTERNAL", str(exc))

    @app.post("/api/sessions")
    def create_session():
        with sessions_lock:
            _sweep_sessions()
            session = orchestrator.new_session(uuid.uuid4().hex)
            sessions[session.id] = _SessionEntry(session)
        return {"session_id": session.id, "state": session.state, "greeting": session.greeting}

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        with sessions_lock:
            entry = sessions.get(session_id)
        if entry is None:
            return _error(404, "UNKNOWN_SESSION", f"no session {session_id!r}")
        if not entry.lock.acquire(blocking=False):
            return _error(409, "SESSION_BUSY", "a message for this session is already in flight")
        try:
            entry.last_access = time.time()
            try:
                reply, session = orchestrator.advance(entry.session, body.text)
            except SessionStopped:
                return _error(409, "SESSION_STOPPED", "this session is finished")
            except BudgetExhausted as exc:
                return _error(429, "BUDGET_EXHAUSTED", str(exc))
            payload = {
                "reply": reply,
                "state": session.state,
                "draft": orchestrator.draft_wire(session),
            }
            if session.last_results is not None and session.results_at == session.turns:
                payload["results"] = orchestrator.results_wire(session)
            return payload
        finally:
            entry.lock.release()

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        with sessions_lock:
            entry = sessions.get(session_id)
        if entry is None:
            return _error(404, "UNKNOWN_SESSION", f"no session {session_id!r}")
        entry.last_access = time.time()
        session = entry.session
        return {
            "session_id": session.id,
            "state": session.state,
            "history": [
                {"role": t.role, "text": t.text, "ts": t.ts} for t in session.history
            ],
            "draft": orchestrator.draft_wire(session),
            "results": orchestrator.results_wire(session),
        }

    @app.post("/api/search")
    async def search(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return _error(400, "BAD_JSON", f"request body is not valid JSON: {exc}")
        if not isinstance(body, dict):
            return _error(400, "VALIDATION", "query must be a JSON object")
        area = body.get("area")
        if isinstance(area, dict) and set(area.keys()) == {"name"}:
            try:
                circle, _, _ = gazetteer.geocode_detail(str(area["name"]))
            except UnknownArea as exc:
                return _error(404, "UNKNOWN_AREA", str(exc))
            body = {**body, "area": matchmod.circle_to_wire(circle)}
        try:
            query = matchmod.query_from_wire(body)
            query = resolve_query(store, query)
        except UnknownPlace as exc:
            return _error(400, "UNKNOWN_PLACE", str(exc))
        except AmbiguousPlace as exc:
            return _error(400, "AMBIGUOUS_PLACE", str(exc))
        except MatchError as exc:
            return _error(400, "MALFORMED_QUERY", str(exc))
        results, hit = cached_search(cache, store, query, match_config)
        return {"results": [result_to_wire(r) for r in results], "cache_hit": hit}

    @app.get("/api/pois")
    def pois(lat: float, lon: float, radius_m: float, category: Optional[str] = None):
        try:
            area = Circle(GeoPoint(lat, lon), radius_m)
        except ValueError as exc:
            return _error(400, "VALIDATION", str(exc))
        found = store.near(area.center, area.radius_m)
        if category:
            wanted = category.strip().lower()
            found = [p for p in found if p.category == wanted]
        found.sort(key=lambda p: p.id)
        return {
            "pois": [
                {"id": p.id, "name": p.name, "category": p.category, "lat": p.point.lat, "lon": p.point.lon}
                for p in found
            ]
        }

    @app.post("/api/geocode")
    def geocode(body: GeocodeBody):
        try:
            circle, matched, note = gazetteer.geocode_detail(body.name)
        except UnknownArea as exc:
            return _error(404, "UNKNOWN_AREA", str(exc))
        payload = {**matchmod.circle_to_wire(circle), "matched": matched}
        if note:
            payload["note"] = note
        return payload

    return app


def serve(config: ServerConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
