"""Synthetic dialogue generation by constrained random walks over a state graph.

A walk samples successor states proportionally to edge weights until it hits
``stop`` (forced there via the shortest exit if it runs too long). Each
visited state asks the generator backend for dialogue text in that state's
role; states flagged ``produces_query`` additionally request a structured
query fragment, which is merged into the sample's query. Samples whose
fragments stay malformed after retries are discarded, never repaired.

Also holds the dataset evaluation metrics: self-BLEU over user utterances and
next-state prediction accuracy.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Iterable, Optional

from .backends import Backend, BackendError, ChatMessage
from .match import DEFAULT_EPS_M, DEFAULT_K, validate_wire_query
from .stategraph import STOP_STATE, StateGraph, shortest_path_to_stop, validate_for_walks

FRAGMENT_ATTEMPTS = 3
DEFAULT_MAX_WALK_LEN = 40

_EVAL_SIGNAL_RE = re.compile(r"<SIG:(proceed|back|stay|stop)(?::([A-Za-z_][A-Za-z0-9_]*))?>\s*$")


class SampleDiscarded(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class WalkSample:
    path: tuple[str, ...]
    dialogue: tuple[tuple[str, str], ...]
    query: Optional[dict]
    seed: int

    def to_json_obj(self, sample_id: int) -> dict:
        return {
            "id": sample_id,
            "seed": self.seed,
            "path": list(self.path),
            "dialogue": [{"role": role, "content": content} for role, content in self.dialogue],
            "query": self.query,
        }


class _KeepMissing(dict):
    def __missing__(self, key):
        return "{" + key + "}"


def _walk_with_rng(graph: StateGraph, rng: Random, max_len: int) -> list[str]:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    path = [graph.start]
    while path[-1] != STOP_STATE and len(path) < max_len:
        edges = [(to, w) for to, w in graph[path[-1]].transitions if w > 0]
        targets = [to for to, _ in edges]
        weights = [w for _, w in edges]
        path.append(rng.choices(targets, weights=weights)[0])
    if path[-1] != STOP_STATE:
        path.extend(shortest_path_to_stop(graph, path[-1]))
    return path


def random_walk(graph: StateGraph, seed: int, max_len: int = DEFAULT_MAX_WALK_LEN) -> list[str]:
    """Weighted random walk from start to stop; deterministic for a given seed."""
    return _walk_with_rng(graph, Random(seed), max_len)


def render_prompt(template: str, context: dict) -> str:
    return template.format_map(_KeepMissing(context))


def parse_fragment(raw: str):
    """Parse one generated query fragment; raises ValueError when unusable.

    Accepted shapes: a JSON list of category strings, or an object with any of
    the keys ``examples`` (list of example objects), ``area``, ``distances``
    (anchor distances for slots 2..n), ``k``, ``eps_m``.
    """
    frag = json.loads(raw)
    if isinstance(frag, list):
        if not all(isinstance(c, str) and c.strip() for c in frag):
            raise ValueError("category list fragment must hold non-empty strings")
        return frag
    if isinstance(frag, dict):
        allowed = {"examples", "area", "distances", "k", "eps_m"}
        unknown = set(frag) - allowed
        if unknown:
            raise ValueError(f"fragment has unknown keys {sorted(unknown)}")
        if "examples" in frag and not isinstance(frag["examples"], list):
            raise ValueError("fragment examples must be a list")
        if "distances" in frag:
            ds = frag["distances"]
            if not isinstance(ds, list) or not all(isinstance(d, (int, float)) and d >= 0 for d in ds):
                raise ValueError("fragment distances must be non-negative numbers")
        return frag
    raise ValueError(f"fragment must be a list or object, got {type(frag).__name__}")


def merge_fragment(query: Optional[dict], frag) -> dict:
    q = query if query is not None else {"examples": [], "area": None}
    if isinstance(frag, list):
        for category in frag:
            q["examples"].append(
                {
                    "kind": "category_only",
                    "name": None,
                    "category": category.strip().lower(),
                    "anchor_distance_m": 0.0,
                }
            )
        return q
    if "examples" in frag:
        for ex in frag["examples"]:
            item = dict(ex)
            item.setdefault("name", None)
            item.setdefault("category", "")
            item.setdefault("anchor_distance_m", 0.0)
            q["examples"].append(item)
    if "distances" in frag:
        for offset, meters in enumerate(frag["distances"]):
            idx = offset + 1
            if idx < len(q["examples"]):
                q["examples"][idx]["anchor_distance_m"] = float(meters)
    if "area" in frag:
        q["area"] = frag["area"]
    for key in ("k", "eps_m"):
        if key in frag:
            q[key] = frag[key]
    return q


def generate_sample(
    graph: StateGraph,
    backend: Backend,
    seed: int,
    max_len: int = DEFAULT_MAX_WALK_LEN,
) -> WalkSample:
    """Generate one dialogue/query pair along a seeded walk.

    Raises :class:`SampleDiscarded` when the backend cannot produce a valid
    query fragment in :data:`FRAGMENT_ATTEMPTS` tries or the merged query
    fails schema validation.
    """
    rng = Random(seed)
    path = _walk_with_rng(graph, rng, max_len)
    context = {"NUM": rng.randint(1, 4)}
    dialogue: list[tuple[str, str]] = []
    query: Optional[dict] = None
    for position, name in enumerate(path[:-1]):
        state = graph[name]
        variant = rng.randrange(1_000_000)
        prompt = render_prompt(state.prompt, {**context, "STATE": name, "TURN": position})
        base_hint = (
            "[seqsearch]\n"
            "mode: synth\n"
            f"state: {name}\n"
            f"role: {state.role}\n"
            f"variant: {variant}\n"
        )
        messages = [ChatMessage("system", base_hint + "task: text\n" + f"prompt: {prompt}")]
        messages += [ChatMessage(role, content) for role, content in dialogue]
        try:
            text = backend.complete(messages)
        except BackendError as exc:
            raise SampleDiscarded(f"backend failed at state {name}: {exc}") from exc
        dialogue.append((state.role, text))
        if not state.produces_query:
            continue
        frag_messages = [
            ChatMessage(
                "system",
                base_hint + "task: query_fragment\n" + f"prompt: {prompt}",
            )
        ] + [ChatMessage(role, content) for role, content in dialogue]
        fragment = None
        errors = []
        for _ in range(FRAGMENT_ATTEMPTS):
            try:
                raw = backend.complete(frag_messages)
            except BackendError as exc:
                raise SampleDiscarded(f"backend failed at state {name}: {exc}") from exc
            try:
                fragment = parse_fragment(raw)
                break
            except ValueError as exc:
                errors.append(str(exc))
        if fragment is None:
            raise SampleDiscarded(
                f"state {name} produced no valid query fragment in "
                f"{FRAGMENT_ATTEMPTS} attempts: {errors[-1]}"
            )
        query = merge_fragment(query, fragment)
    if query is not None:
        query.setdefault("area", None)
        query.setdefault("k", DEFAULT_K)
        query.setdefault("eps_m", DEFAULT_EPS_M)
        problems = validate_wire_query(query, partial=True)
        if problems:
            raise SampleDiscarded(f"merged query failed validation: {problems[0]}")
    return WalkSample(path=tuple(path), dialogue=tuple(dialogue), query=query, seed=seed)


def generate_dataset(
    graph: StateGraph,
    backend: Backend,
    n: int,
    seed: int,
    out_path: str | Path,
    max_len: int = DEFAULT_MAX_WALK_LEN,
) -> dict:
    """Write ``n`` valid samples as JSONL; returns the generation report.

    Sample i uses seed ``seed + attempt`` so every line is independently
    regenerable from its recorded seed; discarded attempts are counted and
    skipped.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    validate_for_walks(graph)
    out_path = Path(out_path)
    written = 0
    discarded = 0
    attempt = 0
    visits: Counter[str] = Counter()
    with open(out_path, "w", encoding="utf-8") as fh:
        while written < n:
            sample_seed = seed + attempt
            attempt += 1
            try:
                sample = generate_sample(graph, backend, sample_seed, max_len=max_len)
            except SampleDiscarded:
                discarded += 1
                continue
            visits.update(sample.path)
            fh.write(json.dumps(sample.to_json_obj(written), separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            written += 1
    return {
        "requested": n,
        "written": written,
        "discarded": discarded,
        "master_seed": seed,
        "visits": dict(sorted(visits.items())),
    }


def load_dataset(path: str | Path) -> list[dict]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(json.loads(line))
    return samples


def validate_sample(obj: dict, graph: Optional[StateGraph] = None) -> list[str]:
    """Schema problems for one dataset line; empty list means valid."""
    problems = []
    if not isinstance(obj, dict):
        return ["sample must be an object"]
    for key in ("id", "seed", "path", "dialogue", "query"):
        if key not in obj:
            problems.append(f"missing key {key!r}")
    path = obj.get("path")
    if not isinstance(path, list) or not path or not all(isinstance(s, str) for s in path):
        problems.append("path must be a non-empty list of state names")
        path = None
    elif path[-1] != STOP_STATE:
        problems.append(f"path must end at {STOP_STATE!r}")
    dialogue = obj.get("dialogue")
    if not isinstance(dialogue, list) or not all(
        isinstance(t, dict) and isinstance(t.get("role"), str) and isinstance(t.get("content"), str)
        for t in dialogue
    ):
        problems.append("dialogue must be a list of {role, content} turns")
        dialogue = None
    if graph is not None and path is not None:
        for a, b in zip(path, path[1:]):
            if a not in graph or b not in graph[a].targets:
                problems.append(f"path edge {a!r} -> {b!r} is not in the graph")
                break
        if dialogue is not None:
            if len(dialogue) != len(path) - 1:
                problems.append("dialogue must have one turn per non-stop state")
            else:
                for turn, name in zip(dialogue, path[:-1]):
                    if name in graph and turn["role"] != graph[name].role:
                        problems.append(f"turn role {turn['role']!r} mismatches state {name!r}")
                        break
        produces = any(name in graph and graph[name].produces_query for name in path)
        if produces and obj.get("query") is None:
            problems.append("query must be present when a query-producing state was visited")
        if not produces and obj.get("query") is not None:
            problems.append("query must be null when no query-producing state was visited")
    if obj.get("query") is not None:
        problems.extend(validate_wire_query(obj["query"], partial=True))
    return problems


def export_training(samples: Iterable[dict], out_path: str | Path) -> int:
    """Write samples in the chat-messages training format; returns line count.

    Each line is ``{"messages": [...]}`` where the dialogue turns are followed
    by one assistant message whose content is the JSON-encoded query.
    """
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for sample in samples:
            messages = [
                {"role": turn["role"], "content": turn["content"]}
                for turn in sample.get("dialogue", [])
            ]
            messages.append(
                {
                    "role": "assistant",
                    "content": json.dumps(sample.get("query"), separators=(",", ":"), ensure_ascii=False),
                }
            )
            fh.write(json.dumps({"messages": messages}, separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


# --- metrics -------------------------------------------------------------------


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_single(hypothesis: list[str], references: list[list[str]], max_n: int) -> float:
    """BLEU of one token sequence against multiple references.

    Uniform weights over 1..max_n-grams; +1 smoothing on the numerator and
    denominator of every order above 1; brevity penalty against the reference
    length closest to the hypothesis (ties to the shorter).
    """
    hyp_len = len(hypothesis)
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        hyp_counts = _ngram_counts(hypothesis, n)
        total = sum(hyp_counts.values())
        clipped = 0
        for gram, count in hyp_counts.items():
            best = max((_ngram_counts(ref, n)[gram] for ref in references), default=0)
            clipped += min(count, best)
        if n == 1:
            if total == 0 or clipped == 0:
                return 0.0
            precision = clipped / total
        else:
            precision = (clipped + 1.0) / (total + 1.0)
        log_sum += math.log(precision) / max_n
    ref_len = min((len(r) for r in references), key=lambda L: (abs(L - hyp_len), L))
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return brevity * math.exp(log_sum)


def self_bleu(dialogues: list[list[str]], max_n: int = 4) -> float:
    """Mean BLEU of each dialogue's user utterances against all the others.

    ``dialogues`` holds one list of user utterances per dialogue; utterances
    are joined and whitespace-tokenized. Lower means more diverse.
    """
    if len(dialogues) < 2:
        raise ValueError("self_bleu needs at least 2 dialogues")
    token_lists = [" ".join(utterances).split() for utterances in dialogues]
    scores = []
    for i, hyp in enumerate(token_lists):
        refs = [toks for j, toks in enumerate(token_lists) if j != i]
        scores.append(_bleu_single(hyp, refs, max_n))
    return sum(scores) / len(scores)


def user_utterances(sample: dict) -> list[str]:
    return [t["content"] for t in sample.get("dialogue", []) if t.get("role") == "user"]


def eval_state_accuracy(samples: list[dict], backend: Backend) -> float:
    """Fraction of next-state transitions the backend predicts correctly.

    Replays each dialogue turn with a state hint and reads the predicted
    state off the backend's trailing signal token; backend failures and
    missing tokens count as incorrect.
    """
    correct = 0
    total = 0
    for sample in samples:
        path = sample.get("path") or []
        dialogue = sample.get("dialogue") or []
        for i in range(len(path) - 1):
            total += 1
            hint = (
                "[seqsearch]\n"
                "mode: eval\n"
                f"state: {path[i]}\n"
                f"sample: {sample.get('id')}\n"
                f"turn: {i}\n"
            )
            messages = [ChatMessage("system", hint)]
            for turn in dialogue[: i + 1]:
                messages.append(ChatMessage(turn["role"], turn["content"]))
            try:
                reply = backend.complete(messages)
            except BackendError:
                continue
            m = _EVAL_SIGNAL_RE.search(reply)
            if not m:
                continue
            kind, target = m.group(1), m.group(2)
            if kind == "stop":
                predicted = STOP_STATE
            elif kind == "stay":
                predicted = path[i]
            else:
                predicted = target
            if predicted == path[i + 1]:
                correct += 1
    if total == 0:
        raise ValueError("dataset contains no transitions to evaluate")
    return correct / total
