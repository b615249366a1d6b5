"""HTTP API behavior: status codes, error shape, snapshot consistency."""

import json

import pytest
from fastapi.testclient import TestClient

from microqual.service import ServiceConfig, create_app

from .conftest import (
    DEMO_LABELS_CSV,
    build_demo_kb,
    interchange_line,
    store_demo_baselines,
)


@pytest.fixture()
def client():
    kb = build_demo_kb()
    store_demo_baselines(kb)
    app = create_app(ServiceConfig(persist=False), kb=kb)
    return TestClient(app)


@pytest.fixture()
def empty_client():
    app = create_app(ServiceConfig(persist=False))
    return TestClient(app)


class TestHealth:
    def test_shape(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert set(body) == {"status", "version", "kb_snapshot_id"}

    def test_snapshot_id_changes_after_write(self, empty_client):
        before = empty_client.get("/health").json()["kb_snapshot_id"]
        r = empty_client.post(
            "/embeddings",
            content=interchange_line("e1", "clip", "vision", [1.0, 0.0], "image"),
            headers={"content-type": "application/x-ndjson"},
        )
        assert r.status_code == 200
        after = empty_client.get("/health").json()["kb_snapshot_id"]
        assert after != before


class TestEmbeddingEndpoints:
    def test_ingest_and_fetch(self, empty_client):
        line = interchange_line("e1", "clip", "vision", [0.6, 0.8], "image",
                                meta={"sample_id": "s1"})
        r = empty_client.post(
            "/embeddings", content=line, headers={"content-type": "application/x-ndjson"}
        )
        assert r.status_code == 200
        assert r.json() == {"ingested": 1, "warnings": []}
        got = empty_client.get("/embeddings/e1")
        assert got.status_code == 200
        assert got.json()["id"] == "e1"
        assert got.json()["vector"] == [0.6, 0.8]

    def test_duplicate_id_conflict(self, empty_client):
        line = interchange_line("e1", "clip", "vision", [1.0, 0.0], "image")
        headers = {"content-type": "application/x-ndjson"}
        assert empty_client.post("/embeddings", content=line, headers=headers).status_code == 200
        r = empty_client.post("/embeddings", content=line, headers=headers)
        assert r.status_code == 409
        assert r.json()["code"] == "conflict"

    def test_validation_failure_unprocessable(self, empty_client):
        bad = json.dumps({"id": "x", "model": "m", "space": "vision", "dim": 3, "vector": [1.0]})
        r = empty_client.post(
            "/embeddings", content=bad, headers={"content-type": "application/x-ndjson"}
        )
        assert r.status_code == 422
        assert r.json()["code"] == "unprocessable"

    def test_unknown_embedding_404(self, empty_client):
        r = empty_client.get("/embeddings/ghost")
        assert r.status_code == 404
        assert r.json()["code"] == "not_found"

    def test_wrong_content_type_rejected(self, empty_client):
        r = empty_client.post(
            "/embeddings", content="{}", headers={"content-type": "application/json"}
        )
        assert r.status_code == 400

    def test_atomicity_on_mid_batch_failure(self, empty_client):
        good = interchange_line("g1", "clip", "vision", [1.0, 0.0], "image")
        dup = interchange_line("g1", "clip", "vision", [0.0, 1.0], "image")
        r = empty_client.post(
            "/embeddings",
            content=good + "\n" + dup,
            headers={"content-type": "application/x-ndjson"},
        )
        assert r.status_code == 409
        assert empty_client.get("/embeddings/g1").status_code == 404


class TestLabelAndCriteriaEndpoints:
    def test_post_labels(self, empty_client):
        r = empty_client.post(
            "/labels", content=DEMO_LABELS_CSV, headers={"content-type": "text/csv"}
        )
        assert r.status_code == 200
        assert r.json()["loaded"] == 12

    def test_bad_label_value_unprocessable(self, empty_client):
        r = empty_client.post(
            "/labels",
            content="sample,dilution\ns1,maybe\n",
            headers={"content-type": "text/csv"},
        )
        assert r.status_code == 422

    def test_put_and_get_criterion(self, empty_client):
        doc = {
            "name": "Dilution",
            "positive_text": "ideal bead above the fusion line",
            "negative_text": "bead intrudes below the fusion line",
        }
        r = empty_client.put("/criteria/EA1", json=doc)
        assert r.status_code == 200
        got = empty_client.get("/criteria/EA1").json()
        assert got["positive_text"] == doc["positive_text"]
        assert got["criterion_id"] == "EA1"

    def test_get_unknown_criterion_404(self, empty_client):
        assert empty_client.get("/criteria/EA9").status_code == 404

    def test_put_criterion_with_unknown_sample_unprocessable(self, empty_client):
        doc = {
            "name": "x",
            "positive_text": "p",
            "negative_text": "n",
            "positive_image_ids": ["ghost"],
        }
        assert empty_client.put("/criteria/EA1", json=doc).status_code == 422


class TestQualify:
    def test_label_consistent_with_sign_rule(self, client):
        r = client.post("/qualify", json={"sample_id": "Sample 5", "criterion_id": "EA1"})
        assert r.status_code == 200
        body = r.json()
        assert body["label"] == ("positive" if body["combined"] >= 0.0 else "negative")
        assert body["config"]["strategy"] == "zscore_sum"
        assert body["config"]["population_batch_id"]
        assert body["prompts"]["positive"]
        assert body["nearest_positive"]["sample_id"] in ("Sample 1", "Sample 2")

    def test_weighted_unit_equals_zscore_sum(self, client):
        a = client.post("/qualify", json={"sample_id": "Sample 6", "criterion_id": "EA2"}).json()
        b = client.post(
            "/qualify",
            json={
                "sample_id": "Sample 6",
                "criterion_id": "EA2",
                "strategy": "weighted",
                "weights": [1.0, 1.0],
            },
        ).json()
        assert a["combined"] == pytest.approx(b["combined"], abs=1e-12)
        assert a["label"] == b["label"]

    def test_threshold_relabels(self, client):
        base = client.post("/qualify", json={"sample_id": "Sample 5", "criterion_id": "EA1"}).json()
        high = client.post(
            "/qualify",
            json={"sample_id": "Sample 5", "criterion_id": "EA1",
                  "threshold": base["combined"] + 0.2},
        ).json()
        assert high["label"] == "negative"
        exact = client.post(
            "/qualify",
            json={"sample_id": "Sample 5", "criterion_id": "EA1",
                  "threshold": base["combined"]},
        ).json()
        assert exact["label"] == "positive"

    def test_unknown_sample_404(self, client):
        r = client.post("/qualify", json={"sample_id": "ghost", "criterion_id": "EA1"})
        assert r.status_code == 404

    def test_missing_baseline_unprocessable(self):
        kb = build_demo_kb()  # no baselines stored
        app = create_app(ServiceConfig(persist=False), kb=kb)
        c = TestClient(app)
        r = c.post("/qualify", json={"sample_id": "Sample 5", "criterion_id": "EA1"})
        assert r.status_code == 422
        assert "baseline" in r.json()["message"]


class TestQualifyTree:
    def test_trace_shape(self, client):
        r = client.post("/qualify/tree", json={"sample_id": "Sample 5"})
        assert r.status_code == 200
        body = r.json()
        assert body["final"] in ("accept", "reject")
        assert body["config_hash"]
        assert [s["criterion_id"] for s in body["steps"]][0] == "EA3"

    def test_identical_requests_identical_bodies(self, client):
        payload = {"sample_id": "Sample 7"}
        a = client.post("/qualify/tree", json=payload)
        b = client.post("/qualify/tree", json=payload)
        assert a.json() == b.json()

    def test_custom_order_echoed_in_hash(self, client):
        default = client.post("/qualify/tree", json={"sample_id": "Sample 5"}).json()
        custom = client.post(
            "/qualify/tree",
            json={"sample_id": "Sample 5", "order": ["EA1", "EA3"], "gate_criteria": ["EA3"]},
        ).json()
        assert custom["config_hash"] != default["config_hash"]

    def test_unresolvable_criterion_unprocessable(self, client):
        r = client.post(
            "/qualify/tree", json={"sample_id": "Sample 5", "order": ["EA1", "EA9"]}
        )
        assert r.status_code == 422


class TestSamples:
    def test_precomputed_embeddings_register_sample(self, empty_client):
        records = [
            {"id": "clip.vision.s9", "model": "clip", "space": "vision", "dim": 2,
             "vector": [1.0, 0.0], "source": "image", "meta": {}},
            {"id": "flava.vision.s9", "model": "flava", "space": "vision", "dim": 3,
             "vector": [0.0, 1.0, 0.0], "source": "image", "meta": {}},
        ]
        r = empty_client.post(
            "/samples",
            json={"sample_id": "s9", "image_ref": "images/s9.png", "embeddings": records},
        )
        assert r.status_code == 200
        body = r.json()
        assert body["ingested"] == 2
        assert body["embeddings"]["clip/vision"] == "clip.vision.s9"
        assert empty_client.get("/embeddings/flava.vision.s9").status_code == 200

    def test_no_embeddings_and_no_adapter_unprocessable(self, empty_client):
        r = empty_client.post("/samples", json={"sample_id": "s9", "image_ref": "x.png"})
        assert r.status_code == 422

    def test_adapter_proxy_path(self, monkeypatch):
        from microqual import service as service_module

        captured = []

        def fake_fetch(url, payload):
            captured.append((url, payload))
            model = payload["model"]
            dim = 2 if model == "clip" else 3
            vec = [1.0, 0.0] if model == "clip" else [0.0, 1.0, 0.0]
            item = payload["items"][0]
            record = {
                "id": f"{model}.vision.{item['id']}",
                "model": model,
                "space": "vision",
                "dim": dim,
                "vector": vec,
                "source": "image",
                "meta": {"sample_id": item["id"], "image_ref": item["image_ref"],
                         "checkpoint": "stub", "pooling": "stub"},
            }
            return json.dumps(record) + "\n"

        monkeypatch.setattr(service_module, "fetch_adapter_lines", fake_fetch)
        app = create_app(
            ServiceConfig(persist=False, adapter_url="http://adapter.local"),
            kb=build_demo_kb(),
        )
        c = TestClient(app)
        r = c.post("/samples", json={"sample_id": "s77", "image_ref": "images/s77.png"})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["ingested"] == 2
        assert {u for u, _ in captured} == {"http://adapter.local"}
        assert body["embeddings"]["clip/vision"] == "clip.vision.s77"
        assert body["embeddings"]["flava/vision"] == "flava.vision.s77"


class TestRetrieve:
    def test_topk_shape_descending(self, client):
        r = client.post("/retrieve", json={"criteria": ["EA1"], "k": 5})
        assert r.status_code == 200
        ranked = r.json()["ranked"]
        assert len(ranked) == 5
        sims = [x["similarity"] for x in ranked]
        assert sims == sorted(sims, reverse=True)

    def test_cumulative_single_equals_individual(self, client):
        a = client.post("/retrieve", json={"criteria": ["EA1"], "k": 3, "cumulative": True})
        b = client.post("/retrieve", json={"criteria": ["EA1"], "k": 3, "cumulative": False})
        assert a.json()["ranked"] == b.json()["ranked"]

    def test_matches_library_ranking(self, client):
        from microqual import cumulative_text_embedding, rank_by_text

        kb = build_demo_kb()
        snapshot = kb.snapshot()
        query = cumulative_text_embedding(snapshot, ["EA1"], "plain", "clip")
        expected = rank_by_text(query, snapshot.vision_corpus("clip"), k=4)
        r = client.post("/retrieve", json={"criteria": ["EA1"], "k": 4, "model": "clip"})
        got = [(x["sample_id"], x["similarity"]) for x in r.json()["ranked"]]
        for (sid_a, sim_a), (sid_b, sim_b) in zip(got, expected.ranked):
            assert sid_a == sid_b
            assert sim_a == pytest.approx(sim_b, abs=1e-12)

    def test_missing_prompt_404(self, client):
        r = client.post("/retrieve", json={"criteria": ["EA9"], "k": 3})
        assert r.status_code == 404

    def test_error_shape_single_code(self, client):
        r = client.post("/retrieve", json={"criteria": [], "k": 3})
        body = r.json()
        assert r.status_code == 400
        assert body["code"] == "bad_request"
        assert "message" in body
