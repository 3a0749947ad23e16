import json
import urllib.error
import urllib.request

import pytest

from labelloop import Engine, LoopService, RawStore, import_items
from labelloop.cli import main as cli_main
from labelloop.server import serve_in_thread

from conftest import make_records

MONTHS = {"type": "dictionary", "name": "months", "entries": ["january", "february", "snow"]}


def http(method, url, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    if data:
        req.add_header("Content-Type", "application/json")
    with urllib.request.urlopen(req) as resp:
        raw = resp.read().decode()
        kind = resp.headers.get("Content-Type", "")
        return resp.status, json.loads(raw) if "json" in kind else raw


@pytest.fixture(scope="module")
def api(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("srv")
    import_items(make_records(60), tmp / "data", "d", bucket_capacity=8)
    engine = Engine(RawStore.open(tmp / "data", "d"), shard_count=3)
    service = LoopService(engine, tmp / "sessions", scoring="sync")
    server, base = serve_in_thread(service, port=0)
    yield base
    server.shutdown()


def test_full_loop_over_http(api):
    status, body = http("GET", f"{api}/search?q=january+snow&k=5")
    assert status == 200 and len(body["results"]) == 5

    status, body = http(
        "POST",
        f"{api}/sessions",
        {"features": [MONTHS], "retrain_threshold": 8, "split_ratio": 1.0},
    )
    assert status == 201
    sid = body["session_id"]

    labels = [
        {"row_id": r, "label": "positive" if r % 3 == 0 else "negative"} for r in range(8)
    ]
    status, body = http("POST", f"{api}/sessions/{sid}/labels", {"labels": labels})
    assert status == 200 and body["retrained"] is True and body["model_version"] == 1

    status, body = http("GET", f"{api}/sessions/{sid}/status")
    assert body["model_version"] == 1
    assert body["freshness"] == {"1": 60}

    status, body = http(
        "POST", f"{api}/sessions/{sid}/sample", {"strategy": "uniform_unlabeled", "count": 4}
    )
    assert status == 200 and len(body["items"]) == 4
    assert all(i["pre_label"] in ("positive", "negative") for i in body["items"])

    status, body = http("GET", f"{api}/sessions/{sid}/metrics")
    assert len(body["history"]) == 1

    status, body = http("GET", f"{api}/sessions/{sid}/review?filter=all&sort=row_id")
    assert [i["row_id"] for i in body["items"]] == list(range(8))

    status, body = http(
        "POST",
        f"{api}/sessions/{sid}/features",
        {"action": "add", "feature": {"type": "dictionary", "name": "cats", "entries": ["cat"]}},
    )
    assert body["retrained"] is True and body["model_version"] == 2

    status, text = http("GET", f"{api}/sessions/{sid}/export/1")
    doc = json.loads(text)
    assert doc["model_version"] == 1

    status, body = http("GET", f"{api}/items/3?session={sid}")
    assert body["title"] == "doc 3"
    assert "months" in body["dictionary_hits"]
    assert any(key.startswith("months@") for key in body["features"])
    assert 0.0 <= body["score"] <= 1.0

    status, body = http("GET", f"{api}/sessions/{sid}/histogram?bins=10")
    assert sum(body["counts"]) == 60

    status, body = http("GET", f"{api}/engine/stats")
    assert body["rows"] == 60


def test_error_statuses(api):
    with pytest.raises(urllib.error.HTTPError) as err:
        http("GET", f"{api}/sessions/nope/status")
    assert err.value.code == 404
    with pytest.raises(urllib.error.HTTPError) as err:
        http("POST", f"{api}/sessions", {"features": [], "split_ratio": "x"})
    assert err.value.code == 400
    with pytest.raises(urllib.error.HTTPError) as err:
        http("GET", f"{api}/nonsense")
    assert err.value.code == 404


def test_cors_preflight(api):
    req = urllib.request.Request(f"{api}/search", method="OPTIONS")
    with urllib.request.urlopen(req) as resp:
        assert resp.status == 204
        assert resp.headers["Access-Control-Allow-Origin"] == "*"


def test_cli_import_and_stats(tmp_path, capsys):
    src = tmp_path / "records.jsonl"
    with open(src, "w") as fh:
        for rec in make_records(25):
            fh.write(json.dumps(rec) + "\n")
        fh.write("not json\n")
    rc = cli_main(
        [
            "import",
            "--input", str(src),
            "--dataset", "cli-d",
            "--bucket-capacity", "10",
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "imported 25 rows into 3 buckets (1 skipped)" in out

    rc = cli_main(
        ["engine", "stats", "--data", str(tmp_path / "out"), "--dataset", "cli-d", "--shards", "2"]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "25 rows" in out and "shard 0" in out


def test_cli_simulate_smoke(tmp_path, capsys):
    config = {
        "strategy": "active",
        "seed": 5,
        "label_budget": 60,
        "batch_size": 10,
        "stop_at_target": True,
        "corpus": {"n_docs": 1500, "noise_vocab": 400},
    }
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(config))
    out_path = tmp_path / "report.json"
    rc = cli_main(
        ["simulate", "--config", str(cfg_path), "--out", str(out_path), "--workdir", str(tmp_path / "w")]
    )
    assert rc == 0
    report = json.loads(out_path.read_text())
    assert report["strategy"] == "active"
    assert report["labels_used"] <= 60
    assert len(report["rounds"]) >= 1
