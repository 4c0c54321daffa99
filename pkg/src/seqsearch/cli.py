"""Operator command line: serve, offline search, dataset tooling, synthesis, eval.

All subcommands are non-interactive; stdout carries data (JSON lines or a
single JSON document), diagnostics go to stderr. Operational failures exit 1
after printing one ``error: ...`` line; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .backends import Backend, BackendConfig, RemoteBackend, RuleBackend, ScriptedBackend
from .geo import load_pois
from .match import (
    MatchConfig,
    QueryCache,
    brute_force_match,
    cached_search,
    match_exemplar,
    query_from_wire,
    resolve_query,
    result_to_wire,
)
from .server import Gazetteer, ServerConfig, UnknownArea
from .stategraph import load_graph, validate_for_walks
from .synth import (
    eval_state_accuracy,
    export_training,
    generate_dataset,
    load_dataset,
    self_bleu,
    user_utterances,
    validate_sample,
)


class CliError(Exception):
    pass


def _build_backend(spec: str, endpoint: str | None, model: str | None) -> Backend:
    if spec == "rule":
        return RuleBackend()
    if spec.startswith("scripted:"):
        path = spec.split(":", 1)[1]
        if not Path(path).is_file():
            raise CliError(f"scripted backend file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return ScriptedBackend(json.load(fh))
    if spec == "remote":
        if not (endpoint and model):
            raise CliError("remote backend requires --endpoint and --model")
        return RemoteBackend(BackendConfig(kind="remote", endpoint=endpoint, model_name=model))
    raise CliError(f"unknown backend {spec!r} (use rule, scripted:PATH or remote)")


def _load_wire_query(args) -> dict:
    if args.query_json:
        raw = args.query_json
    elif args.query:
        raw = Path(args.query).read_text(encoding="utf-8")
    else:
        raise CliError("search needs --query PATH or --query-json STR")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(f"query is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise CliError("query must be a JSON object")
    return obj


def _resolve_area(obj: dict, gazetteer_path: str | None) -> dict:
    area = obj.get("area")
    if isinstance(area, dict) and set(area.keys()) == {"name"}:
        from importlib.resources import files

        path = gazetteer_path or str(files("seqsearch").joinpath("data/gazetteer.csv"))
        gazetteer = Gazetteer.from_csv(path)
        try:
            circle = gazetteer.geocode(str(area["name"]))
        except UnknownArea as exc:
            raise CliError(str(exc))
        obj = {
            **obj,
            "area": {"center": {"lat": circle.center.lat, "lon": circle.center.lon}, "radius_m": circle.radius_m},
        }
    return obj


def cmd_serve(args) -> int:
    from .server import serve

    if args.config:
        config = ServerConfig.from_file(args.config)
    else:
        config = ServerConfig.bundled(listen=args.listen)
    print(f"serving on {config.listen}", file=sys.stderr)
    serve(config)
    return 0


def cmd_search(args) -> int:
    store = load_pois(args.dataset)
    obj = _resolve_area(_load_wire_query(args), args.gazetteer)
    query = resolve_query(store, query_from_wire(obj))
    if args.oracle:
        results = brute_force_match(store, query)
    else:
        cap = None if args.cap == 0 else args.cap
        results = match_exemplar(store, query, MatchConfig(cap=cap))
    for result in results:
        print(json.dumps(result_to_wire(result), separators=(",", ":")))
    return 0


def cmd_ingest_check(args) -> int:
    store = load_pois(args.dataset)
    print(json.dumps({"records": len(store), "categories": store.categories()}, separators=(",", ":")))
    return 0


def cmd_synth(args) -> int:
    graph = load_graph(args.graph)
    validate_for_walks(graph)
    backend = _build_backend(args.backend, args.endpoint, args.model)
    report = generate_dataset(graph, backend, n=args.n, seed=args.seed, out_path=args.out)
    bad = 0
    for sample in load_dataset(args.out):
        if validate_sample(sample, graph):
            bad += 1
    if bad:
        raise CliError(f"{bad} generated samples failed validation")
    if args.train_out:
        report["train_lines"] = export_training(load_dataset(args.out), args.train_out)
    print(json.dumps(report, separators=(",", ":")))
    return 0


def cmd_eval(args) -> int:
    samples = load_dataset(args.dataset)
    if args.metric == "self-bleu":
        dialogues = [user_utterances(s) for s in samples]
        dialogues = [d for d in dialogues if d]
        if len(dialogues) < 2:
            raise CliError("self-bleu needs at least 2 dialogues with user turns")
        print(self_bleu(dialogues))
    else:
        backend = _build_backend(args.backend, args.endpoint, args.model)
        print(eval_state_accuracy(samples, backend))
    return 0


def cmd_bench(args) -> int:
    store = load_pois(args.dataset)
    cache = QueryCache()
    queries = []
    with open(args.queries, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                queries.append(json.loads(line))
    if not queries:
        raise CliError("no queries in file")
    for index, obj in enumerate(queries):
        obj = _resolve_area(obj, args.gazetteer)
        query = resolve_query(store, query_from_wire(obj))
        timings = []
        hits = 0
        for _ in range(args.repeat):
            started = time.perf_counter()
            _, hit = cached_search(cache, store, query)
            timings.append((time.perf_counter() - started) * 1000.0)
            hits += int(hit)
        print(
            json.dumps(
                {
                    "query_index": index,
                    "runs": args.repeat,
                    "best_ms": round(min(timings), 3),
                    "mean_ms": round(sum(timings) / len(timings), 3),
                    "hits": hits,
                    "hit_ratio": hits / args.repeat,
                },
                separators=(",", ":"),
            )
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="server config JSON (defaults to the bundled dataset)")
    p.add_argument("--listen", default="127.0.0.1:8008", help="host:port when no config is given")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("search", help="run one query offline and print ranked results")
    p.add_argument("--dataset", required=True)
    p.add_argument("--query", help="path to a wire-form query JSON file")
    p.add_argument("--query-json", help="wire-form query as an inline JSON string")
    p.add_argument("--oracle", action="store_true", help="use the exhaustive reference matcher")
    p.add_argument("--cap", type=int, default=8, help="per-slot candidate cap; 0 = unlimited")
    p.add_argument("--gazetteer", help="gazetteer CSV for named areas (default: bundled)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("ingest-check", help="validate a dataset and print stats")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("synth", help="generate a synthetic dialogue dataset")
    p.add_argument("--graph", required=True, help="state graph config JSON")
    p.add_argument("--backend", default="rule", help="rule | scripted:PATH | remote")
    p.add_argument("--endpoint", help="remote backend base URL")
    p.add_argument("--model", help="remote backend model name")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--train-out", help="also export the chat-messages training format")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="dataset metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--metric", required=True, choices=["self-bleu", "state-acc"])
    p.add_argument("--backend", default="rule", help="rule | scripted:PATH | remote")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="latency and cache behavior over a query file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True, help="JSONL of wire-form queries")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--gazetteer")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
