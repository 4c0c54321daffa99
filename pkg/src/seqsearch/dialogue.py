"""Chat orchestration over a runtime state graph.

Each turn is dispatched to the current state's handler, which updates the
draft query from the user text and summarizes what happened as a facts
event. The state's backend then produces the assistant reply, which must end
in exactly one signal token (``<SIG:proceed:NAME>``, ``<SIG:back:NAME>``,
``<SIG:stay>`` or ``<SIG:stop>``). The engine strips the token, applies the
transition and, when the reply was a silent handoff or the entered state is
marked auto, lets the next state continue processing the same turn.

Malformed or illegal backend output never kills a session: the engine moves
to ``error_recovery`` and asks the user to rephrase.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from dataclasses import dataclass, field
from importlib.resources import files
from typing import Callable, Optional

from . import nlu
from .backends import Backend, BackendRegistry, ChatMessage
from .geo import Circle
from .match import (
    AmbiguousPlace,
    AnchorUnresolved,
    DEFAULT_EPS_M,
    DEFAULT_K,
    ExampleSpec,
    ExemplarQuery,
    MatchResult,
    UnknownPlace,
    circle_to_wire,
    result_to_wire,
)
from .stategraph import StateDef, StateGraph, load_graph, validate_for_runtime

MAX_CHAIN_STEPS = 12

_SIGNAL_RE = re.compile(
    r"<SIG:(proceed|back|stay|stop)(?::([A-Za-z_][A-Za-z0-9_]*))?>\s*$"
)
_CLARIFY_TEXT = "Sorry, I didn't catch that. Could you say it again?"


class DialogueError(Exception):
    pass


class MissingSignal(DialogueError):
    pass


class IllegalTransition(DialogueError):
    def __init__(self, from_state: str, to_state: str):
        super().__init__(f"transition {from_state!r} -> {to_state!r} is not allowed")
        self.from_state = from_state
        self.to_state = to_state


class InvalidRewind(DialogueError):
    pass


class SessionStopped(DialogueError):
    pass


@dataclass(frozen=True)
class SignalToken:
    kind: str  # proceed | back | stay | stop
    target: Optional[str] = None


def parse_signal(reply: str, current: StateDef) -> tuple[str, SignalToken]:
    """Split a backend reply into visible text and its trailing signal token."""
    m = _SIGNAL_RE.search(reply)
    if not m:
        raise MissingSignal("reply does not end with a signal token")
    kind, target = m.group(1), m.group(2)
    if kind in ("stay", "stop"):
        if target is not None:
            raise MissingSignal(f"{kind} token must not carry a target")
        token = SignalToken(kind)
    else:
        if not target:
            raise MissingSignal(f"{kind} token requires a target state")
        if target not in current.targets:
            raise IllegalTransition(current.name, target)
        token = SignalToken(kind, target)
    return reply[: m.start()].rstrip(), token


@dataclass
class DraftExample:
    kind: str  # named | category_only
    name: Optional[str] = None
    category: str = ""
    anchor_distance_m: Optional[float] = None

    @property
    def label(self) -> str:
        if self.kind == "named":
            return self.name or "?"
        return f"any {self.category}"

    def to_wire(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "category": self.category,
            "anchor_distance_m": self.anchor_distance_m,
        }


@dataclass
class Draft:
    examples: list[DraftExample] = field(default_factory=list)
    area: Optional[Circle] = None
    area_name: Optional[str] = None

    def to_wire(self, k: int = DEFAULT_K, eps_m: float = DEFAULT_EPS_M) -> dict:
        if self.area is not None:
            area = circle_to_wire(self.area)
        elif self.area_name:
            area = {"name": self.area_name}
        else:
            area = None
        return {
            "examples": [ex.to_wire() for ex in self.examples],
            "area": area,
            "k": k,
            "eps_m": eps_m,
        }


@dataclass
class TurnRecord:
    role: str
    text: str
    ts: float


@dataclass
class Session:
    id: str
    state: str
    history: list[TurnRecord] = field(default_factory=list)
    draft: Draft = field(default_factory=Draft)
    last_results: Optional[list[MatchResult]] = None
    path: list[str] = field(default_factory=list)
    first_visit: dict[str, int] = field(default_factory=dict)
    visit_seq: int = 0
    turns: int = 0
    results_at: Optional[int] = None

    @property
    def greeting(self) -> str:
        return self.history[0].text if self.history else ""


class Orchestrator:
    """Runs sessions against a runtime graph, a backend registry and hooks.

    Hooks keep this module decoupled from the dataset and server:

    - ``resolver(examples)`` resolves named drafts against the dataset and
      returns per-slot ``(category, anchor_distance_m)``; raises the match
      module's resolution errors.
    - ``geocoder(name)`` returns ``(Circle, matched_name, note)`` or raises.
    - ``searcher(query)`` runs a resolved :class:`ExemplarQuery` and returns
      ranked results.
    """

    def __init__(
        self,
        graph: Optional[StateGraph] = None,
        backends: Optional[BackendRegistry] = None,
        resolver: Optional[Callable[[list[DraftExample]], list[tuple[str, float]]]] = None,
        geocoder: Optional[Callable[[str], tuple[Circle, str, str]]] = None,
        searcher: Optional[Callable[[ExemplarQuery], list[MatchResult]]] = None,
        k: int = DEFAULT_K,
        eps_m: float = DEFAULT_EPS_M,
        clock: Callable[[], float] = time.time,
        max_chain: int = MAX_CHAIN_STEPS,
    ):
        self.graph = graph or default_runtime_graph()
        validate_for_runtime(self.graph)
        if backends is None:
            from .backends import RuleBackend

            backends = BackendRegistry.single(RuleBackend(), "rule")
        self.backends = backends
        self.resolver = resolver
        self.geocoder = geocoder
        self.searcher = searcher
        self.k = k
        self.eps_m = eps_m
        self.clock = clock
        self.max_chain = max_chain

    # --- session lifecycle ---------------------------------------------------

    def new_session(self, session_id: Optional[str] = None) -> Session:
        start = self.graph.start
        session = Session(id=session_id or uuid.uuid4().hex, state=start)
        session.first_visit[start] = session.visit_seq
        greeting = self.graph[start].prompt or "Hi! Tell me the places you're looking for."
        session.history.append(TurnRecord("assistant", greeting, self.clock()))
        return session

    def _enter(self, session: Session, state: str):
        session.visit_seq += 1
        session.state = state
        session.path.append(state)
        session.first_visit.setdefault(state, session.visit_seq)

    # --- advance ---------------------------------------------------------------

    def advance(self, session: Session, user_text: str) -> tuple[str, Session]:
        """Process one user turn; returns the visible assistant reply."""
        if session.state == "stop":
            raise SessionStopped(f"session {session.id} is finished")
        session.turns += 1
        session.history.append(TurnRecord("user", user_text, self.clock()))
        parts: list[str] = []
        for _ in range(self.max_chain):
            state = self.graph[session.state]
            event, facts = self._handle(state, session, user_text)
            facts = {"event": event, **facts}
            reply = self.backends.for_state(state.name).complete(
                self._messages(session, state, facts), session_id=session.id
            )
            try:
                visible, token = parse_signal(reply, state)
                if "<SIG:" in visible:
                    raise MissingSignal("visible text still contains a signal token")
            except (MissingSignal, IllegalTransition):
                self._enter(session, "error_recovery")
                parts.append(_CLARIFY_TEXT)
                break
            if visible:
                parts.append(visible)
            if token.kind == "stay":
                break
            if token.kind == "stop":
                self._enter(session, "stop")
                break
            self._enter(session, token.target)
            if token.target == "stop":
                break
            if visible and not self.graph[token.target].auto:
                break
        else:
            self._enter(session, "error_recovery")
            parts.append(_CLARIFY_TEXT)
        assistant_text = " ".join(parts) if parts else _CLARIFY_TEXT
        session.history.append(TurnRecord("assistant", assistant_text, self.clock()))
        return assistant_text, session

    def _messages(self, session: Session, state: StateDef, facts: dict) -> list[ChatMessage]:
        hint = (
            "[seqsearch]\n"
            "mode: chat\n"
            f"state: {state.name}\n"
            f"allowed: {','.join(sorted(state.targets))}\n"
            f"facts: {json.dumps(facts, separators=(',', ':'))}"
        )
        messages = [ChatMessage("system", hint)]
        for turn in session.history:
            messages.append(ChatMessage(turn.role, turn.text))
        return messages

    # --- rewind -----------------------------------------------------------------

    _FIELD_COLLECTORS = {
        "examples": "collect_examples",
        "area": "collect_area",
        "results": "execute_search",
    }

    def rewind(self, session: Session, target: str) -> Session:
        """Return to an earlier state, clearing draft fields collected from it on."""
        if target not in self.graph:
            raise InvalidRewind(f"unknown state {target!r}")
        if target not in session.first_visit:
            raise InvalidRewind(f"state {target!r} was never visited in this session")
        cutoff = session.first_visit[target]

        def collected_after(field_name: str) -> bool:
            seq = session.first_visit.get(self._FIELD_COLLECTORS[field_name])
            return seq is not None and seq >= cutoff

        if collected_after("examples"):
            session.draft.examples = []
        if collected_after("area"):
            session.draft.area = None
            session.draft.area_name = None
        if collected_after("results"):
            session.last_results = None
            session.results_at = None
        session.state = target
        return session

    # --- handlers ----------------------------------------------------------------

    def _handle(self, state: StateDef, session: Session, text: str) -> tuple[str, dict]:
        handler = getattr(self, f"_on_{state.handler}", None)
        if handler is None:
            return "clarify", {}
        return handler(session, text)

    def _on_greet(self, session: Session, text: str):
        return "handoff", {}

    def _on_collect_examples(self, session: Session, text: str):
        edits = nlu.extract_examples(text)
        if not edits:
            return "need_examples", {}
        appended = self._apply_edits(session.draft, edits)
        problem = self._refresh_resolution(session.draft)
        if problem is not None:
            return problem
        if (
            len(appended) == 1
            and len(edits) == 1
            and appended[0].kind == "category_only"
            and appended[0].anchor_distance_m is None
            and any(ex is appended[0] for ex in session.draft.examples[1:])
        ):
            return "need_distance", {"category": appended[0].category}
        return "examples_updated", self._example_facts(session.draft)

    def _on_confirm_examples(self, session: Session, text: str):
        edits = nlu.extract_examples(text)
        if edits:
            if (
                len(edits) == 1
                and isinstance(edits[0], nlu.AppendExample)
                and edits[0].kind == "category_only"
                and edits[0].anchor_distance_m is None
            ):
                return "modify_requested", {"category": edits[0].label}
            return "edits_inline", {}
        if nlu.extract_area(text) is not None:
            return "area_given", {}
        if nlu.is_acknowledgement(text):
            return "acked", {}
        if nlu.is_stop_request(text):
            return "stop_requested", {}
        return "unclear", {}

    def _on_collect_area(self, session: Session, text: str):
        area = nlu.extract_area(text)
        if area is None:
            return "need_area", {}
        labels = [ex.label for ex in session.draft.examples]
        if isinstance(area, Circle):
            session.draft.area = area
            session.draft.area_name = None
            matched = f"the circle at ({area.center.lat:.4f}, {area.center.lon:.4f})"
            return "area_set", {"matched": matched, "note": "", "labels": labels}
        if self.geocoder is None:
            return "area_unknown", {"name": area}
        try:
            circle, matched, note = self.geocoder(area)
        except Exception:
            return "area_unknown", {"name": area}
        session.draft.area = circle
        session.draft.area_name = matched
        return "area_set", {"matched": matched, "note": note, "labels": labels}

    def _on_confirm_query(self, session: Session, text: str):
        draft = session.draft
        if not draft.examples:
            return "missing_examples", {"name": "no examples collected"}
        problem = self._refresh_resolution(draft)
        if problem is not None:
            return problem
        missing = [
            ex.label
            for i, ex in enumerate(draft.examples)
            if i >= 1 and ex.kind == "category_only" and ex.anchor_distance_m is None
        ]
        if missing:
            return "missing_distance", {"labels": missing}
        if draft.area is None:
            return "missing_area", {}
        return "query_ready", {}

    def _on_execute_search(self, session: Session, text: str):
        try:
            query = self.build_query(session.draft)
            results = self.searcher(query) if self.searcher else []
        except Exception as exc:
            return "search_failed", {"reason": str(exc)}
        session.last_results = results
        session.results_at = session.turns
        return "search_done", {"count": len(results)}

    def _on_present_results(self, session: Session, text: str):
        edits = nlu.extract_examples(text)
        if edits:
            return "refine_examples", {}
        if nlu.extract_area(text) is not None:
            return "refine_area", {}
        if nlu.is_stop_request(text):
            return "stop_requested", {}
        return "help", {}

    def _on_error_recovery(self, session: Session, text: str):
        if nlu.extract_examples(text):
            return "recovered_examples", {}
        if nlu.extract_area(text) is not None:
            return "recovered_area", {}
        return "clarify", {}

    def _on_stop(self, session: Session, text: str):
        return "clarify", {}

    # --- draft plumbing -------------------------------------------------------------

    def _apply_edits(self, draft: Draft, edits: list[nlu.Edit]) -> list[DraftExample]:
        appended: list[DraftExample] = []
        for edit in edits:
            if isinstance(edit, nlu.AppendExample):
                last = draft.examples[-1] if draft.examples else None
                if (
                    edit.anchor_distance_m is not None
                    and last is not None
                    and last.kind == "category_only"
                    and last.category == edit.label
                    and last.anchor_distance_m is None
                ):
                    # completes a pending "add a <category>" with its distance
                    last.anchor_distance_m = edit.anchor_distance_m
                    continue
                ex = DraftExample(
                    kind=edit.kind,
                    name=edit.label if edit.kind == "named" else None,
                    category=edit.label if edit.kind == "category_only" else "",
                    anchor_distance_m=edit.anchor_distance_m,
                )
                if not draft.examples:
                    ex.anchor_distance_m = 0.0
                draft.examples.append(ex)
                appended.append(ex)
            elif isinstance(edit, nlu.SetDistances):
                for offset, meters in enumerate(edit.distances_m):
                    idx = offset + 1
                    if idx < len(draft.examples):
                        draft.examples[idx].anchor_distance_m = meters
        return appended

    def _refresh_resolution(self, draft: Draft) -> Optional[tuple[str, dict]]:
        """Resolve named examples; on failure drop the offender and report it."""
        if self.resolver is None or not any(ex.kind == "named" for ex in draft.examples):
            return None
        try:
            resolved = self.resolver(draft.examples)
        except UnknownPlace as exc:
            draft.examples = [
                ex for ex in draft.examples if not (ex.kind == "named" and ex.name == exc.name)
            ]
            return "unknown_place", {"name": exc.name}
        except AmbiguousPlace as exc:
            draft.examples = [
                ex for ex in draft.examples if not (ex.kind == "named" and ex.name == exc.name)
            ]
            return "ambiguous_place", {"name": exc.name, "count": len(exc.candidates)}
        except AnchorUnresolved:
            return (
                "unknown_place",
                {"name": "the first example must be a named place when later ones are named"},
            )
        for ex, (category, distance) in zip(draft.examples, resolved):
            if ex.kind == "named":
                ex.category = category
                ex.anchor_distance_m = distance
        return None

    def _example_facts(self, draft: Draft) -> dict:
        labels = [ex.label for ex in draft.examples]
        distances = [
            {"label": ex.label, "meters": ex.anchor_distance_m}
            for i, ex in enumerate(draft.examples)
            if i >= 1 and ex.anchor_distance_m is not None
        ]
        return {
            "labels": labels,
            "anchor": labels[0] if labels else "",
            "distances": distances,
        }

    def build_query(self, draft: Draft) -> ExemplarQuery:
        """Materialize the draft into a resolved query (area must be set)."""
        if draft.area is None:
            raise DialogueError("draft has no area")
        examples = []
        for i, ex in enumerate(draft.examples):
            examples.append(
                ExampleSpec(
                    kind=ex.kind,
                    name=ex.name,
                    category=ex.category,
                    anchor_distance_m=0.0 if i == 0 else float(ex.anchor_distance_m or 0.0),
                )
            )
        return ExemplarQuery(examples=tuple(examples), area=draft.area, k=self.k, eps_m=self.eps_m)

    # --- serialization -----------------------------------------------------------------

    def draft_wire(self, session: Session) -> dict:
        return session.draft.to_wire(self.k, self.eps_m)

    def results_wire(self, session: Session) -> Optional[list[dict]]:
        if session.last_results is None:
            return None
        return [result_to_wire(r) for r in session.last_results]


def default_runtime_graph() -> StateGraph:
    return load_graph(json.loads(files("seqsearch").joinpath("data/runtime_graph.json").read_text()))
