import io
import json

import pytest
from fastapi.testclient import TestClient

from alrkit.egra import allocate
from alrkit.service import ServiceConfig, canonical_number, canonicalize, create_app, dispatch, serve_stdio

from conftest import rollout


@pytest.fixture
def client():
    return TestClient(create_app(ServiceConfig(max_batch_size=4)))


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200 and r.json()["status"] == "ok"


def test_score_perfect(client):
    body = {"items": [{"response": rollout([2, 3], "Paris"), "answers": ["Paris"], "evidence_pages": [2, 3]}]}
    r = client.post("/v1/score", json=body)
    assert r.status_code == 200
    assert r.json()["results"][0] == {"format": 1, "evidence": 1.0, "answer": 1.0, "total": 1.0}


def test_group_advantages(client):
    good, bad = rollout([1], "yes"), rollout([1], "zzzzzzzz")
    body = {"groups": [{"responses": [good, bad, bad, good], "answers": ["yes"], "evidence_pages": [1],
                        "question_id": "q7"}]}
    g = client.post("/v1/group", json=body).json()["groups"][0]
    assert g["question_id"] == "q7" and g["kept"] is True
    assert g["advantages"] == pytest.approx([1, -1, -1, 1], abs=1e-6)


def test_group_dropped_when_flat(client):
    body = {"groups": [{"responses": ["junk", "junk"], "answers": ["a"]}]}
    g = client.post("/v1/group", json=body).json()["groups"][0]
    assert g["kept"] is False and g["advantages"] == [0.0, 0.0]


def test_allocate_matches_library(client):
    r = client.post("/v1/allocate", json={"num_pages": 11, "evidence_pages": [1], "seed": 5})
    assert r.status_code == 200
    assert r.json() == canonicalize(allocate(11, {1}, seed=5).to_dict())


@pytest.mark.parametrize("path,body", [
    ("/v1/score", {"items": [{"response": 3, "answers": ["a"]}]}),
    ("/v1/score", {"items": [{"response": "x", "answers": []}]}),
    ("/v1/score", {"items": [{"response": "x", "answers": ["a"], "evidence_pages": [0]}]}),
    ("/v1/score", {"items": [], "extra": 1}),
    ("/v1/group", {"groups": [{"responses": ["only one"], "answers": ["a"]}]}),
    ("/v1/allocate", {"num_pages": 3, "evidence_pages": [4]}),
    ("/v1/allocate", {"num_pages": 3, "config": {"nope": 1}}),
])
def test_bad_requests_are_400(client, path, body):
    assert client.post(path, json=body).status_code == 400


def test_malformed_json_is_400(client):
    r = client.post("/v1/score", content=b"{not json", headers={"content-type": "application/json"})
    assert r.status_code == 400


def test_oversized_batch_is_413(client):
    items = [{"response": "x", "answers": ["a"]}] * 5
    assert client.post("/v1/score", json={"items": items}).status_code == 413
    groups = [{"responses": ["x", "y", "z"], "answers": ["a"]}] * 2
    assert client.post("/v1/group", json={"groups": groups}).status_code == 413


def test_internal_errors_are_500(monkeypatch):
    import alrkit.service as service

    monkeypatch.setitem(service.ROUTES, "/v1/score", lambda body, cfg: 1 / 0)
    status, payload = dispatch("/v1/score", {}, ServiceConfig())
    assert status == 500 and "ZeroDivisionError" in payload["error"]


def test_unknown_path():
    assert dispatch("/v2/nothing", {}, ServiceConfig())[0] == 404


def test_timeout_is_504(monkeypatch):
    import time
    import alrkit.service as service

    monkeypatch.setitem(service.ROUTES, "/v1/score", lambda body, cfg: time.sleep(0.5) or {})
    client = TestClient(create_app(ServiceConfig(request_timeout=0.05)))
    assert client.post("/v1/score", json={}).status_code == 504


def test_canonical_numbers():
    assert canonical_number(1 / 3) == 0.333333333
    assert canonical_number(7) == 7
    assert canonicalize({"a": [0.1 + 0.2, (2.0,)]}) == {"a": [0.3, [2.0]]}


def test_stdio_protocol():
    lines = [
        json.dumps({"path": "/healthz"}),
        "",
        json.dumps({"path": "/v1/score", "body": {"items": [{"response": "x", "answers": ["a"]}]}}),
        "not json",
    ]
    out = io.StringIO()
    serve_stdio(ServiceConfig(), io.StringIO("\n".join(lines) + "\n"), out)
    replies = [json.loads(l) for l in out.getvalue().splitlines()]
    assert [r["status"] for r in replies] == [200, 200, 400]
    assert replies[1]["body"]["results"][0]["total"] == 0.0
