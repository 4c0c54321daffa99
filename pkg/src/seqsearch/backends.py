"""Chat-completion backends behind one interface.

Three kinds ship here: ``rule`` (deterministic, offline, template replies
driven by the extraction grammar and the state hints the orchestrator embeds
in the system message), ``scripted`` (replays fixture replies for tests and
offline synthesis) and ``remote`` (an OpenAI-compatible HTTP endpoint).

Orchestrators prepend one system message carrying machine-readable hints:

    [seqsearch]
    mode: chat|synth|eval
    state: <state name>
    ...
    facts: {...one-line json...}

Rule replies in chat mode always end with exactly one signal token such as
``<SIG:proceed:confirm_examples>``.
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
from dataclasses import dataclass
from typing import Optional, Protocol

import requests as _requests


class BackendError(RuntimeError):
    pass


class BudgetExhausted(BackendError):
    def __init__(self, budget: int):
        super().__init__(f"request budget of {budget} exhausted for this session")
        self.budget = budget


class ScriptExhausted(BackendError):
    pass


class RemoteError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"remote backend error {status}: {body[:200]}")
        self.status = status
        self.body = body[:500]


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"role must be system/user/assistant, got {self.role!r}")


@dataclass(frozen=True)
class Constraints:
    max_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "rule"
    endpoint: Optional[str] = None
    model_name: Optional[str] = None
    timeout_s: float = 30.0
    max_retries: int = 2
    budget: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("rule", "scripted", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model_name):
            raise ValueError("remote backend requires endpoint and model_name")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be >= 1 when present")


class Backend(Protocol):
    def complete(
        self,
        messages: list[ChatMessage],
        constraints: Optional[Constraints] = None,
        session_id: Optional[str] = None,
    ) -> str: ...


def parse_hints(messages: list[ChatMessage]) -> dict:
    """Read the orchestrator hint block from the first system message."""
    hints: dict = {}
    for msg in messages:
        if msg.role != "system" or "[seqsearch]" not in msg.content:
            continue
        body = msg.content.split("[seqsearch]", 1)[1]
        prompt_match = re.search(r"^prompt:\s?(.*)$", body, re.MULTILINE | re.DOTALL)
        if prompt_match:
            hints["prompt"] = prompt_match.group(1)
            body = body[: prompt_match.start()]
        for line in body.splitlines():
            if ":" not in line:
                continue
            key, _, value = line.partition(":")
            key = key.strip()
            value = value.strip()
            if key == "facts":
                try:
                    hints["facts"] = json.loads(value)
                except json.JSONDecodeError:
                    hints["facts"] = {}
            elif key:
                hints[key] = value
        break
    return hints


def last_user_text(messages: list[ChatMessage]) -> str:
    for msg in reversed(messages):
        if msg.role == "user":
            return msg.content
    return ""


class _UsageMixin:
    def _init_usage(self, config: BackendConfig):
        self.config = config
        self._usage_lock = threading.Lock()
        self._requests = 0
        self._estimated_tokens = 0
        self._session_counts: dict[Optional[str], int] = {}

    def _charge_budget(self, session_id: Optional[str]):
        if self.config.budget is None:
            return
        with self._usage_lock:
            used = self._session_counts.get(session_id, 0)
            if used >= self.config.budget:
                raise BudgetExhausted(self.config.budget)
            self._session_counts[session_id] = used + 1

    def _record(self, reply: str, reported_tokens: Optional[int] = None):
        with self._usage_lock:
            self._requests += 1
            if reported_tokens is not None:
                self._estimated_tokens += reported_tokens
            else:
                self._estimated_tokens += math.ceil(len(reply) / 4)

    @property
    def usage(self) -> dict:
        with self._usage_lock:
            return {"requests": self._requests, "estimated_tokens": self._estimated_tokens}


def count_usage(backend) -> dict:
    """Monotone request/token counters for any backend built here."""
    return dict(backend.usage)


# --- rule backend -----------------------------------------------------------

_CLARIFY = "Could you tell me more about the places you're looking for?"

def _fmt_picks(labels: list[str]) -> str:
    return ", ".join(f"{i + 1}. {label}" for i, label in enumerate(labels))


def _fmt_distances(anchor: str, dists: list[dict]) -> str:
    parts = [f"{round(d['meters'])} meters to {d['label']}" for d in dists]
    if not parts:
        return ""
    if len(parts) == 1:
        listing = parts[0]
    else:
        listing = ", ".join(parts[:-1]) + f", and {parts[-1]}"
    return f" From {anchor}, the distances are {listing}."


class RuleBackend(_UsageMixin):
    """Deterministic offline backend: templates over orchestrator facts.

    In chat mode the reply is chosen from the current state and the event the
    dialogue handlers computed; in synth mode it serves paired text/query
    templates for the bundled synthesis graph.
    """

    def __init__(self, config: Optional[BackendConfig] = None):
        self._init_usage(config or BackendConfig(kind="rule"))

    def complete(self, messages, constraints=None, session_id=None) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        self._charge_budget(session_id)
        hints = parse_hints(messages)
        mode = hints.get("mode", "chat")
        if mode == "synth":
            reply = self._synth_reply(hints)
        elif mode == "eval":
            reply = "<SIG:stay>"
        else:
            reply = self._chat_reply(hints)
        self._record(reply)
        return reply

    # chat templates ---------------------------------------------------------

    def _chat_reply(self, hints: dict) -> str:
        state = hints.get("state", "")
        facts = hints.get("facts") or {}
        event = facts.get("event", "")
        handler = getattr(self, f"_chat_{state}", None)
        if handler is not None:
            reply = handler(event, facts)
            if reply is not None:
                return reply
        if event == "stop_requested":
            return "Happy exploring! Come back when you want another search. <SIG:stop>"
        return f"{_CLARIFY} <SIG:stay>"

    def _chat_greet(self, event, facts):
        return "<SIG:proceed:collect_examples>"

    def _chat_collect_examples(self, event, facts):
        if event == "examples_updated":
            picks = _fmt_picks(facts.get("labels", []))
            dists = _fmt_distances(facts.get("anchor", ""), facts.get("distances", []))
            return (
                f"You have picked {picks}.{dists} "
                f"Do you want to continue and acknowledge the selection? "
                f"<SIG:proceed:confirm_examples>"
            )
        if event == "need_distance":
            return (
                f"Please provide the name of the {facts.get('category', 'place')} you'd like "
                f"to add, along with its distance in meters from the first place. <SIG:stay>"
            )
        if event == "unknown_place":
            return (
                f"I couldn't find {facts.get('name', 'that place')} on the map. "
                f"Could you double-check the name? <SIG:stay>"
            )
        if event == "ambiguous_place":
            return (
                f"I found {facts.get('count', 'several')} places named {facts.get('name', '?')}. "
                f"Could you be more specific? <SIG:stay>"
            )
        if event == "need_examples":
            return (
                "Tell me the example places to search for. You can list them like "
                "'places like 1. Suntec City and 2. Raffles Hotel' or 'a gym and a station'. <SIG:stay>"
            )
        return None

    def _chat_confirm_examples(self, event, facts):
        if event == "modify_requested":
            return (
                f"Please provide the name of the {facts.get('category', 'place')} you'd like "
                f"to add, along with its distance in meters from the first place. "
                f"<SIG:back:collect_examples>"
            )
        if event == "edits_inline":
            return "<SIG:back:collect_examples>"
        if event == "acked":
            return (
                "Now I need you to provide a general search area to look within, like a "
                "neighborhood, city, region, or even a specific landmark. <SIG:proceed:collect_area>"
            )
        if event == "area_given":
            return "<SIG:proceed:collect_area>"
        if event == "unclear":
            return (
                "Say yes to acknowledge the selection, or tell me places to add or change. <SIG:stay>"
            )
        return None

    def _chat_collect_area(self, event, facts):
        if event == "area_set":
            labels = ", ".join(facts.get("labels", []))
            note = facts.get("note", "")
            sep = f" {note}" if note else ""
            return (
                f"Your search area is valid, which is {facts.get('matched', 'the given area')}.{sep} "
                f"The examples chosen are {labels}. I'm at hard work to find the best match! "
                f"<SIG:proceed:confirm_query>"
            )
        if event == "area_unknown":
            return (
                f"I couldn't find the area {facts.get('name', '?')}. Please name a neighborhood, "
                f"city, region, or landmark. <SIG:stay>"
            )
        if event == "need_area":
            return (
                "Please provide a general search area to look within, like a neighborhood, "
                "city, region, or even a specific landmark. <SIG:stay>"
            )
        return None

    def _chat_confirm_query(self, event, facts):
        if event == "query_ready":
            return "<SIG:proceed:execute_search>"
        if event == "missing_area":
            return (
                "I still need a search area. Name a neighborhood, city, region, or landmark. "
                "<SIG:back:collect_area>"
            )
        if event == "missing_distance":
            labels = ", ".join(facts.get("labels", []))
            return (
                f"I still need the distance in meters from the first place for {labels}. "
                f"<SIG:back:collect_examples>"
            )
        if event in ("unknown_place", "ambiguous_place", "missing_examples"):
            return (
                f"I couldn't finalize the examples ({facts.get('name', 'missing details')}). "
                f"Let's fix the example list. <SIG:back:collect_examples>"
            )
        return None

    def _chat_execute_search(self, event, facts):
        if event == "search_done":
            count = facts.get("count", 0)
            if count:
                return (
                    f"I found {count} matching location sets, ranked by similarity. "
                    f"Take a look! <SIG:proceed:present_results>"
                )
            return (
                "I couldn't find any matching location sets in that area. Try widening the "
                "area or changing the examples. <SIG:proceed:present_results>"
            )
        if event == "search_failed":
            return (
                f"The search hit a problem: {facts.get('reason', 'unknown')}. "
                f"Let's adjust the search area. <SIG:back:collect_area>"
            )
        return None

    def _chat_present_results(self, event, facts):
        if event == "refine_examples":
            return "<SIG:back:collect_examples>"
        if event == "refine_area":
            return "<SIG:back:collect_area>"
        if event == "stop_requested":
            return "Happy exploring! Come back when you want another search. <SIG:stop>"
        if event == "help":
            return (
                "You can add more examples, change the search area, or say stop to finish. "
                "<SIG:stay>"
            )
        return None

    _chat_refine = _chat_present_results

    def _chat_error_recovery(self, event, facts):
        if event == "recovered_examples":
            return "<SIG:proceed:collect_examples>"
        if event == "recovered_area":
            return "<SIG:proceed:collect_area>"
        if event == "clarify":
            return "Sorry, I lost track for a moment. Could you rephrase that? <SIG:stay>"
        return None

    # synth templates ----------------------------------------------------------

    _SYNTH_TEXT: dict[str, list] = {
        "greet": [
            "Hello! I can help you search for a set of places that sit together the way you want.",
            "Hi there! Tell me about the group of locations you're trying to find.",
            "Welcome back! Ready to look for a combination of places?",
        ],
        "ask_examples": [
            "Please give me some example places, either by name or by category.",
            "Which places should the results resemble? You can name them or give categories.",
            "List the example locations you want the results to look like.",
        ],
        "spatial_examples": [
            ("I want to look for places like a gym and a station.", ["gym", "station"]),
            (
                "I want to search for places like 1. Suntec City and 2. Anytime Fitness City Hall.",
                {
                    "examples": [
                        {"kind": "named", "name": "Suntec City", "category": "", "anchor_distance_m": 0},
                        {"kind": "named", "name": "Anytime Fitness City Hall", "category": "", "anchor_distance_m": 0},
                    ]
                },
            ),
            ("Find me spots like a cafe and a park.", ["cafe", "park"]),
            ("I'm looking for places like a hotel and a mall.", ["hotel", "mall"]),
            ("Show me somewhere like a museum and a library.", ["museum", "library"]),
        ],
        "select_examples": [
            "You have picked those examples. Do you want to continue and acknowledge the selection?",
            "Got it, those are your examples. Shall we continue?",
            "Noted. Do you want to keep this selection?",
        ],
        "add_example": [
            ("I want to add a hotel", ["hotel"]),
            ("Can you also add a pharmacy?", ["pharmacy"]),
            ("Please add a cafe to the list", ["cafe"]),
        ],
        "set_distances": [
            (
                "The distance in meters of each place from the first place is 416 meters.",
                {"distances": [416]},
            ),
            (
                "The distances from the first place are 250 and 700 meters.",
                {"distances": [250, 700]},
            ),
            (
                "The distance of each place from the first place is 120 meters.",
                {"distances": [120]},
            ),
        ],
        "confirm_examples": [
            "Your examples are locked in. Next I need a search area.",
            "Great, the example set is confirmed. Where should I look?",
        ],
        "ask_area": [
            "Now I need you to provide a general search area to look within, like a neighborhood, city, region, or even a specific landmark.",
            "Which area should I search? A neighborhood, city, or landmark works.",
        ],
        "give_area": [
            ("In downtown Sydney", {"area": {"name": "downtown Sydney"}}),
            ("Near Marina Bay", {"area": {"name": "Marina Bay"}}),
            ("Around the City Hall", {"area": {"name": "City Hall"}}),
        ],
        "confirm_area": [
            "Your search area is valid. I'm at hard work to find the best match!",
            "That area works. Searching for the best matching sets now!",
        ],
        "clarify": [
            "Sorry, could you rephrase that?",
            "I didn't quite catch that. Could you say it differently?",
        ],
        "error_recovery": [
            "Something went wrong on my side. Let's try that step again.",
            "Apologies, I hit a snag. Could you repeat your last request?",
        ],
        "farewell": [
            "Happy exploring! Come back when you want another search.",
            "Glad to help. Enjoy the trip!",
        ],
    }

    def _synth_reply(self, hints: dict) -> str:
        state = hints.get("state", "")
        task = hints.get("task", "text")
        try:
            variant = int(hints.get("variant", 0))
        except ValueError:
            variant = 0
        pool = self._SYNTH_TEXT.get(state)
        if not pool:
            role = hints.get("role", "assistant")
            if task == "query_fragment":
                return "{}"
            return f"({role} continues the {state or 'conversation'} step.)"
        entry = pool[variant % len(pool)]
        if isinstance(entry, tuple):
            text, fragment = entry
        else:
            text, fragment = entry, None
        if task == "query_fragment":
            return json.dumps(fragment) if fragment is not None else "{}"
        return text


# --- scripted backend --------------------------------------------------------


class ScriptedBackend(_UsageMixin):
    """Replays fixture replies.

    A list script is a strict FIFO queue (exhaustion raises). A dict script
    maps a key to a reply pool; the key is the hinted state name (suffixed
    with ``#query`` for query-fragment requests) falling back to ``"*"``, and
    the hinted ``variant`` selects from the pool, so replies are a pure
    function of the request.
    """

    def __init__(self, script, config: Optional[BackendConfig] = None):
        self._init_usage(config or BackendConfig(kind="scripted"))
        if isinstance(script, dict):
            self._keyed = {k: list(v) if isinstance(v, (list, tuple)) else [v] for k, v in script.items()}
            self._queue = None
        else:
            self._keyed = None
            self._queue = list(script)
        self._queue_lock = threading.Lock()

    def complete(self, messages, constraints=None, session_id=None) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        self._charge_budget(session_id)
        if self._queue is not None:
            with self._queue_lock:
                if not self._queue:
                    raise ScriptExhausted("scripted backend has no replies left")
                reply = self._queue.pop(0)
        else:
            hints = parse_hints(messages)
            key = hints.get("state", "*")
            if hints.get("task") == "query_fragment":
                key = f"{key}#query"
            pool = self._keyed.get(key) or self._keyed.get("*")
            if not pool:
                raise ScriptExhausted(f"scripted backend has no replies for key {key!r}")
            try:
                variant = int(hints.get("variant", 0))
            except ValueError:
                variant = 0
            reply = pool[variant % len(pool)]
        self._record(reply)
        return reply

    @property
    def remaining(self) -> Optional[int]:
        return None if self._queue is None else len(self._queue)


# --- remote backend ----------------------------------------------------------

API_KEY_ENV = "SEQ_GPT_API_KEY"


class RemoteBackend(_UsageMixin):
    """OpenAI-compatible chat completions over HTTP."""

    def __init__(self, config: BackendConfig, session: Optional[_requests.Session] = None):
        if config.kind != "remote":
            raise ValueError("RemoteBackend requires a remote config")
        self._init_usage(config)
        self._http = session or _requests.Session()

    def complete(self, messages, constraints=None, session_id=None) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        self._charge_budget(session_id)
        constraints = constraints or Constraints()
        body = {
            "model": self.config.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "max_tokens": constraints.max_tokens,
            "temperature": constraints.temperature,
            "stop": list(constraints.stop_sequences),
        }
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        last_exc: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self._http.post(url, json=body, headers=headers, timeout=self.config.timeout_s)
            except _requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = RemoteError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                raise RemoteError(resp.status_code, resp.text)
            try:
                doc = resp.json()
                content = doc["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise RemoteError(resp.status_code, f"malformed response body: {resp.text[:200]}")
            usage = doc.get("usage") or {}
            reported = usage.get("total_tokens")
            self._record(content, reported_tokens=reported if isinstance(reported, int) else None)
            return content
        if isinstance(last_exc, RemoteError):
            raise last_exc
        raise RemoteError(0, f"transport failure after {self.config.max_retries + 1} attempts: {last_exc}")


# --- registry ----------------------------------------------------------------


class BackendRegistry:
    """Maps dialogue states to backends; unmapped states use the default."""

    def __init__(self, backends: dict[str, Backend], default: str, state_map: Optional[dict[str, str]] = None):
        if default not in backends:
            raise ValueError(f"default backend {default!r} not registered")
        self.backends = dict(backends)
        self.default = default
        self.state_map = dict(state_map or {})
        for state, backend_id in self.state_map.items():
            if backend_id not in self.backends:
                raise ValueError(f"state {state!r} maps to unknown backend {backend_id!r}")

    def for_state(self, state: str) -> Backend:
        return self.backends[self.state_map.get(state, self.default)]

    def get(self, backend_id: str) -> Backend:
        return self.backends[backend_id]

    @classmethod
    def single(cls, backend: Backend, name: str = "default") -> "BackendRegistry":
        return cls({name: backend}, default=name)

    @classmethod
    def from_config(cls, doc: dict) -> "BackendRegistry":
        backends: dict[str, Backend] = {}
        for backend_id, raw in (doc.get("backends") or {"rule": {"kind": "rule"}}).items():
            backends[backend_id] = build_backend(raw)
        default = doc.get("default") or next(iter(backends))
        return cls(backends, default=default, state_map=doc.get("states"))


def build_backend(raw: dict) -> Backend:
    kind = raw.get("kind", "rule")
    config = BackendConfig(
        kind=kind,
        endpoint=raw.get("endpoint"),
        model_name=raw.get("model_name"),
        timeout_s=float(raw.get("timeout_s", 30.0)),
        max_retries=int(raw.get("max_retries", 2)),
        budget=raw.get("budget"),
    )
    if kind == "rule":
        return RuleBackend(config)
    if kind == "scripted":
        script = raw.get("script")
        if script is None and raw.get("script_path"):
            with open(raw["script_path"], encoding="utf-8") as fh:
                script = json.load(fh)
        if script is None:
            raise ValueError("scripted backend requires 'script' or 'script_path'")
        return ScriptedBackend(script, config)
    return RemoteBackend(config)
