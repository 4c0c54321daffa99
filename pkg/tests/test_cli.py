import json
from importlib.resources import files

import pytest

from seqsearch.cli import main

DATA = files("seqsearch").joinpath("data")
DATASET = str(DATA.joinpath("pois.csv"))
GRAPH = str(DATA.joinpath("synth_graph.json"))

QUERY = {
    "examples": [
        {"kind": "category_only", "name": None, "category": "mall", "anchor_distance_m": 0},
        {"kind": "category_only", "name": None, "category": "hotel", "anchor_distance_m": 200},
    ],
    "area": {"center": {"lat": 1.2931, "lon": 103.8558}, "radius_m": 2000.0},
    "k": 5,
    "eps_m": 400.0,
}


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_ingest_check(capsys):
    code, out, _ = run(capsys, "ingest-check", "--dataset", DATASET)
    assert code == 0
    doc = json.loads(out)
    assert doc["records"] == 220
    assert doc["categories"]["hotel"] >= 5


def test_ingest_check_missing_file(capsys):
    code, out, err = run(capsys, "ingest-check", "--dataset", "/nope/missing.csv")
    assert code == 1
    assert err.startswith("error:")
    assert out == ""


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["ingest-check", "--dataset", DATASET, "--bogus"])
    assert exc.value.code == 2


def test_search_uncapped_matches_oracle_byte_for_byte(capsys):
    code, fast_out, _ = run(
        capsys, "search", "--dataset", DATASET, "--query-json", json.dumps(QUERY), "--cap", "0"
    )
    assert code == 0
    code, oracle_out, _ = run(
        capsys, "search", "--dataset", DATASET, "--query-json", json.dumps(QUERY), "--oracle"
    )
    assert code == 0
    assert fast_out == oracle_out
    assert len(fast_out.splitlines()) == 5


def test_search_named_area_uses_bundled_gazetteer(capsys):
    query = dict(QUERY)
    query["area"] = {"name": "downtown Sydney"}
    code, out, _ = run(capsys, "search", "--dataset", DATASET, "--query-json", json.dumps(query))
    assert code == 0
    assert out.splitlines()


def test_synth_deterministic(tmp_path, capsys):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    code, report1, _ = run(
        capsys, "synth", "--graph", GRAPH, "--backend", "rule", "--n", "5", "--seed", "7",
        "--out", str(out1),
    )
    assert code == 0
    code, report2, _ = run(
        capsys, "synth", "--graph", GRAPH, "--backend", "rule", "--n", "5", "--seed", "7",
        "--out", str(out2),
    )
    assert code == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert json.loads(report1)["written"] == 5
    assert report1 == report2


def test_synth_train_export(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    train = tmp_path / "t.jsonl"
    code, report, _ = run(
        capsys, "synth", "--graph", GRAPH, "--backend", "rule", "--n", "3", "--seed", "1",
        "--out", str(out), "--train-out", str(train),
    )
    assert code == 0
    assert json.loads(report)["train_lines"] == 3
    assert len(train.read_text().splitlines()) == 3


def test_eval_self_bleu_identical_is_one(tmp_path, capsys):
    path = tmp_path / "same.jsonl"
    sample = {
        "id": 0,
        "seed": 0,
        "path": ["a", "stop"],
        "dialogue": [{"role": "user", "content": "find a gym and a station"}],
        "query": None,
    }
    with open(path, "w") as fh:
        for i in range(4):
            fh.write(json.dumps({**sample, "id": i}) + "\n")
    code, out, _ = run(capsys, "eval", "--dataset", str(path), "--metric", "self-bleu")
    assert code == 0
    assert out.strip() == "1.0"


def test_eval_state_accuracy_runs(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    run(capsys, "synth", "--graph", GRAPH, "--backend", "rule", "--n", "4", "--seed", "3", "--out", str(out))
    code, value, _ = run(capsys, "eval", "--dataset", str(out), "--metric", "state-acc")
    assert code == 0
    assert 0.0 <= float(value) <= 1.0


def test_bench_reports_latency_and_hits(tmp_path, capsys):
    queries = tmp_path / "q.jsonl"
    queries.write_text(json.dumps(QUERY) + "\n")
    code, out, _ = run(
        capsys, "bench", "--dataset", DATASET, "--queries", str(queries), "--repeat", "3"
    )
    assert code == 0
    row = json.loads(out.splitlines()[0])
    assert row["runs"] == 3
    assert row["hits"] == 2
    assert row["hit_ratio"] == pytest.approx(2 / 3)
