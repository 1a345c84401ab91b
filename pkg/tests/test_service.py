"""Interactive labeling service tests over the HTTP surface."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from al_lab.data import OracleToken, gen_blobs
from al_lab.engine import ALConfig, run_seed
from al_lab.service import create_app

DATASET_SPEC = {
    "generate": {
        "class_count": 3,
        "per_class": 50,
        "n_features": 2,
        "spread": 0.4,
        "overlap": 0.5,
        "seed": 21,
    }
}


def run_config(cycles=2, seed=5):
    return {
        "dataset": DATASET_SPEC,
        "initial_fraction": 0.10,
        "budget_per_cycle_fraction": 0.05,
        "cycles": cycles,
        "strategy": "dispersion",
        "seeds": [seed],
        "oracle_mode": "interactive",
        "learner": {"epochs": 5, "batch_size": 16},
    }


def wait_for_status(client, run_id, wanted, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = client.get(f"/runs/{run_id}/status").json()
        if doc["status"] in wanted:
            return doc
        time.sleep(0.02)
    raise AssertionError(f"run {run_id} never reached {wanted}; last: {doc}")


def ground_truth_labels(items):
    ds = gen_blobs(**DATASET_SPEC["generate"])
    token = OracleToken()
    ids = [item["sample_id"] for item in items]
    labels = ds.hidden_labels(ids, token)
    return {str(i): int(l) for i, l in zip(ids, labels)}


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=tmp_path / "data")
    with TestClient(app) as c:
        yield c
    app.state.manager.close()


class TestEndpoints:
    def test_unknown_run_404(self, client):
        for path in ("pending", "status", "metrics", "history"):
            assert client.get(f"/runs/nope/{path}").status_code == 404
        assert client.post("/runs/nope/labels", json={"labels": {}}).status_code == 404

    def test_bad_config_422(self, client):
        doc = run_config()
        doc["strategy"] = "bogus"
        resp = client.post("/runs", json=doc)
        assert resp.status_code == 422
        assert "strategy" in resp.json()["detail"]

    def test_create_and_get_pending_batch(self, client):
        resp = client.post("/runs", json=run_config())
        assert resp.status_code == 201
        run_id = resp.json()["run_id"]
        wait_for_status(client, run_id, {"waiting_for_labels"})
        batch = client.get(f"/runs/{run_id}/pending").json()
        assert batch["status"] == "pending"
        assert batch["cycle"] == 0
        assert len(batch["items"]) == 6  # 5% of 120-train pool = 6
        for item in batch["items"]:
            assert set(item) >= {"sample_id", "features", "projection",
                                 "predicted_class", "dispersion_score"}
            assert 0.0 <= item["dispersion_score"] <= 1.0

    def test_status_document_fields(self, client):
        run_id = client.post("/runs", json=run_config()).json()["run_id"]
        doc = wait_for_status(client, run_id, {"waiting_for_labels"})
        assert doc["class_count"] == 3
        assert doc["pool_size"] == 120
        assert doc["budget_per_cycle"] == 6
        assert doc["strategy"] == "dispersion"


class TestSubmission:
    def test_partial_submission_rejected_state_unchanged(self, client):
        run_id = client.post("/runs", json=run_config()).json()["run_id"]
        wait_for_status(client, run_id, {"waiting_for_labels"})
        batch = client.get(f"/runs/{run_id}/pending").json()
        labels = ground_truth_labels(batch["items"])
        partial = dict(list(labels.items())[:-1])
        resp = client.post(f"/runs/{run_id}/labels", json={"labels": partial})
        assert resp.status_code == 422
        assert "missing" in resp.json()["detail"]
        after = client.get(f"/runs/{run_id}/pending").json()
        assert after["status"] == "pending"
        assert after["cycle"] == 0

    def test_mismatched_ids_rejected(self, client):
        run_id = client.post("/runs", json=run_config()).json()["run_id"]
        wait_for_status(client, run_id, {"waiting_for_labels"})
        batch = client.get(f"/runs/{run_id}/pending").json()
        labels = ground_truth_labels(batch["items"])
        labels["999999"] = 0
        resp = client.post(f"/runs/{run_id}/labels", json={"labels": labels})
        assert resp.status_code == 422
        assert "unexpected" in resp.json()["detail"]

    def test_out_of_range_class_rejected(self, client):
        run_id = client.post("/runs", json=run_config()).json()["run_id"]
        wait_for_status(client, run_id, {"waiting_for_labels"})
        batch = client.get(f"/runs/{run_id}/pending").json()
        labels = ground_truth_labels(batch["items"])
        labels[next(iter(labels))] = 17
        resp = client.post(f"/runs/{run_id}/labels", json={"labels": labels})
        assert resp.status_code == 422
        assert "range" in resp.json()["detail"]

    def test_full_session_and_idempotent_resubmission(self, client):
        run_id = client.post("/runs", json=run_config(cycles=2)).json()["run_id"]
        submitted = {}
        for cycle in range(2):
            wait_for_status(client, run_id, {"waiting_for_labels"})
            batch = client.get(f"/runs/{run_id}/pending").json()
            assert batch["cycle"] == cycle
            labels = ground_truth_labels(batch["items"])
            resp = client.post(f"/runs/{run_id}/labels", json={"labels": labels})
            assert resp.json()["status"] == "accepted"
            submitted[cycle] = labels
        doc = wait_for_status(client, run_id, {"finished"})
        # labeled_count = initial + 2 * b
        assert doc["labeled_count"] == 12 + 2 * 6
        # resubmitting the final completed batch is acknowledged, not replayed
        resp = client.post(f"/runs/{run_id}/labels", json={"labels": submitted[1]})
        assert resp.status_code == 200
        assert resp.json()["status"] == "duplicate"
        metrics = client.get(f"/runs/{run_id}/metrics").json()
        assert len(metrics["reports"]) == 3  # 2 cycles + terminal
        history = client.get(f"/runs/{run_id}/history").json()
        assert history["csv"].startswith("sample_id,epoch,predicted_class")
        assert history["dispersion"]


class TestEquivalenceAndResume:
    def test_interactive_matches_simulated(self, client):
        seed = 9
        run_id = client.post("/runs", json=run_config(cycles=2, seed=seed)).json()["run_id"]
        for _ in range(2):
            wait_for_status(client, run_id, {"waiting_for_labels"})
            batch = client.get(f"/runs/{run_id}/pending").json()
            labels = ground_truth_labels(batch["items"])
            client.post(f"/runs/{run_id}/labels", json={"labels": labels})
        wait_for_status(client, run_id, {"finished"})
        interactive = client.get(f"/runs/{run_id}/metrics").json()["reports"]

        ds = gen_blobs(**DATASET_SPEC["generate"])
        cfg = ALConfig(cycles=2, strategy="dispersion", seeds=[seed],
                       learner={"epochs": 5, "batch_size": 16},
                       oracle_mode="interactive")
        simulated = run_seed(ds, cfg, seed)
        assert len(interactive) == len(simulated)
        for web, sim in zip(interactive, simulated):
            assert web["cycle"] == sim.cycle
            assert web["labeled_count"] == sim.labeled_count
            assert web["test_accuracy"] == sim.test_accuracy
            assert web["queried"] == list(sim.queried)

    def test_restart_resumes_pending_batch(self, tmp_path):
        data_dir = tmp_path / "data"
        app1 = create_app(data_dir=data_dir)
        with TestClient(app1) as c1:
            run_id = c1.post("/runs", json=run_config(cycles=2, seed=3)).json()["run_id"]
            wait_for_status(c1, run_id, {"waiting_for_labels"})
            batch_before = c1.get(f"/runs/{run_id}/pending").json()
            c1.post(f"/runs/{run_id}/labels",
                    json={"labels": ground_truth_labels(batch_before["items"])})
            wait_for_status(c1, run_id, {"waiting_for_labels"})
            batch_cycle1 = c1.get(f"/runs/{run_id}/pending").json()
            assert batch_cycle1["cycle"] == 1
        app1.state.manager.close()  # simulated crash: threads die, disk state stays

        app2 = create_app(data_dir=data_dir)
        with TestClient(app2) as c2:
            wait_for_status(c2, run_id, {"waiting_for_labels"})
            batch_after = c2.get(f"/runs/{run_id}/pending").json()
            assert batch_after["cycle"] == 1
            assert [i["sample_id"] for i in batch_after["items"]] == [
                i["sample_id"] for i in batch_cycle1["items"]
            ]
            c2.post(f"/runs/{run_id}/labels",
                    json={"labels": ground_truth_labels(batch_after["items"])})
            doc = wait_for_status(c2, run_id, {"finished"})
            assert doc["labeled_count"] == 12 + 2 * 6
            reports = c2.get(f"/runs/{run_id}/metrics").json()["reports"]
            assert [r["cycle"] for r in reports] == [0, 1, 2]
        app2.state.manager.close()

    def test_resumed_run_matches_uninterrupted(self, tmp_path):
        seed = 13
        # uninterrupted reference
        ds = gen_blobs(**DATASET_SPEC["generate"])
        cfg = ALConfig(cycles=2, strategy="dispersion", seeds=[seed],
                       learner={"epochs": 5, "batch_size": 16})
        reference = run_seed(ds, cfg, seed)

        data_dir = tmp_path / "data"
        app1 = create_app(data_dir=data_dir)
        with TestClient(app1) as c1:
            run_id = c1.post("/runs", json=run_config(cycles=2, seed=seed)).json()["run_id"]
            wait_for_status(c1, run_id, {"waiting_for_labels"})
        app1.state.manager.close()  # crash before any labels

        app2 = create_app(data_dir=data_dir)
        with TestClient(app2) as c2:
            for _ in range(2):
                wait_for_status(c2, run_id, {"waiting_for_labels"})
                batch = c2.get(f"/runs/{run_id}/pending").json()
                c2.post(f"/runs/{run_id}/labels",
                        json={"labels": ground_truth_labels(batch["items"])})
            wait_for_status(c2, run_id, {"finished"})
            reports = c2.get(f"/runs/{run_id}/metrics").json()["reports"]
        app2.state.manager.close()
        assert len(reports) == len(reference)
        for web, sim in zip(reports, reference):
            assert web["test_accuracy"] == sim.test_accuracy
            assert web["queried"] == list(sim.queried)

    def test_oracle_timeout_aborts_resumably(self, tmp_path):
        app = create_app(data_dir=tmp_path / "data", oracle_timeout=0.2)
        with TestClient(app) as c:
            run_id = c.post("/runs", json=run_config(cycles=1)).json()["run_id"]
            doc = wait_for_status(c, run_id, {"aborted"}, timeout=30.0)
            assert "persisted" in (doc["error"] or "")
            pending = json.loads(
                (tmp_path / "data" / "runs" / run_id / "pending.json").read_text()
            )
            assert pending["status"] == "pending"
        app.state.manager.close()
