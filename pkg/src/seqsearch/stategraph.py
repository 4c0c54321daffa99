"""Shared state-transition graph config used by both the chat runtime and the
dialogue synthesizer.

Format: ``{"states":[{"name":str,"role":"system|user|assistant","prompt":str,
"produces_query":bool,"transitions":[{"to":str,"weight":num}]}],"start":str}``.
The runtime additionally honors an optional per-state ``"auto": true`` flag
marking states it may pass through without waiting for user input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

ROLES = ("system", "user", "assistant")
STOP_STATE = "stop"


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class StateDef:
    name: str
    role: str = "assistant"
    prompt: str = ""
    produces_query: bool = False
    transitions: tuple[tuple[str, float], ...] = ()
    auto: bool = False
    handler: str = ""

    @property
    def targets(self) -> set[str]:
        return {to for to, _ in self.transitions}


@dataclass(frozen=True)
class StateGraph:
    states: dict[str, StateDef]
    start: str

    def __getitem__(self, name: str) -> StateDef:
        return self.states[name]

    def __contains__(self, name: str) -> bool:
        return name in self.states


def load_graph(source: dict | str | Path) -> StateGraph:
    """Parse and validate a graph from a config dict or JSON file."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, dict) or not isinstance(doc.get("states"), list):
        raise GraphError("graph config must be an object with a 'states' list")
    states: dict[str, StateDef] = {}
    for i, raw in enumerate(doc["states"]):
        name = raw.get("name")
        if not name or not isinstance(name, str):
            raise GraphError(f"states[{i}]: missing name")
        if name in states:
            raise GraphError(f"duplicate state {name!r}")
        role = raw.get("role", "assistant")
        if role not in ROLES:
            raise GraphError(f"state {name!r}: role must be one of {ROLES}, got {role!r}")
        transitions = []
        for j, t in enumerate(raw.get("transitions", [])):
            to = t.get("to")
            if not to:
                raise GraphError(f"state {name!r}: transitions[{j}] missing 'to'")
            weight = float(t.get("weight", 1.0))
            if weight < 0:
                raise GraphError(f"state {name!r}: negative weight to {to!r}")
            transitions.append((to, weight))
        states[name] = StateDef(
            name=name,
            role=role,
            prompt=str(raw.get("prompt", "")),
            produces_query=bool(raw.get("produces_query", False)),
            transitions=tuple(transitions),
            auto=bool(raw.get("auto", False)),
            handler=str(raw.get("handler", "")) or name,
        )
    start = doc.get("start")
    if start not in states:
        raise GraphError(f"start state {start!r} not defined")
    for state in states.values():
        for to, _ in state.transitions:
            if to not in states:
                raise GraphError(f"state {state.name!r} transitions to undefined {to!r}")
    if STOP_STATE not in states:
        raise GraphError("graph must define a 'stop' state")
    return StateGraph(states=states, start=start)


def validate_for_walks(graph: StateGraph) -> None:
    """Checks required before sampling walks: positive exits and stop reachable."""
    for state in graph.states.values():
        if state.name == STOP_STATE:
            continue
        if not any(w > 0 for _, w in state.transitions):
            raise GraphError(f"state {state.name!r} has no positive outgoing weight")
    unreachable = [
        name for name in graph.states
        if name != STOP_STATE and not shortest_path_to_stop(graph, name)
    ]
    if unreachable:
        raise GraphError(f"stop not reachable from: {sorted(unreachable)}")


def validate_for_runtime(graph: StateGraph) -> None:
    """Checks required before chat use: the recovery and stop states exist."""
    if "error_recovery" not in graph:
        raise GraphError("runtime graph must define an 'error_recovery' state")


def shortest_path_to_stop(graph: StateGraph, name: str) -> list[str]:
    """States after ``name`` on a shortest edge path to stop; [] if unreachable."""
    if name == STOP_STATE:
        return []
    prev: dict[str, str] = {}
    frontier = [name]
    seen = {name}
    while frontier:
        nxt = []
        for cur in frontier:
            for to, _ in graph[cur].transitions:
                if to in seen:
                    continue
                prev[to] = cur
                if to == STOP_STATE:
                    path = [STOP_STATE]
                    while path[-1] != name:
                        path.append(prev[path[-1]])
                    path.pop()
                    return list(reversed(path))
                seen.add(to)
                nxt.append(to)
        frontier = nxt
    return []
