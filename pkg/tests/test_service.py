"""HTTP service contracts: sessions, jobs, masks, vectors, transactionality.

These run against a random-weight tiny model; the service contracts under
test (byte round-trips, identity applications, cancellation, conflict
handling) are weight-agnostic.
"""

import base64
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from maskedit.editing import EditingVector
from maskedit.embedding import Encoder
from maskedit.generator import GeneratorConfig, JointGenerator, sample_latent
from maskedit.imageio import image_to_png_bytes, mask_to_png_bytes
from maskedit.labels import LabelSchema
from maskedit.seghead import SegmentationHead
from maskedit.service import ServiceConfig, create_app
from maskedit.vectors import VectorRecord, save_vector

CFG = GeneratorConfig(latent_dim=16, num_style_layers=4, base_resolution=4,
                      output_resolution=16, channels_per_layer=(16, 16, 8),
                      num_labels=4, rng_seed=3)


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def unb64(text: str) -> bytes:
    return base64.b64decode(text)


@pytest.fixture(scope="module")
def service_env(tmp_path_factory):
    root = tmp_path_factory.mktemp("service")
    generator = JointGenerator(CFG)
    generator.attach_head(SegmentationHead(CFG.feature_dim, (16, 8), CFG.num_labels, seed=5))
    encoder = Encoder(16, 16, 4, seed=7)
    ckpt = root / "model.egw"
    generator.save_checkpoint(ckpt, encoder=encoder)

    vec_dir = root / "vectors"
    rng = np.random.default_rng(0)
    vec = EditingVector(delta=(rng.standard_normal((4, 16)) * 0.2).astype(np.float32),
                        name="test-edit", label_set=frozenset({1}))
    save_vector(VectorRecord(vector=vec, generator_checkpoint_hash=generator.weights_hash()),
                vec_dir)
    stale = EditingVector(delta=np.zeros((4, 16), dtype=np.float32), name="stale",
                          label_set=frozenset({2}))
    save_vector(VectorRecord(vector=stale, generator_checkpoint_hash="0" * 64), vec_dir)

    config = ServiceConfig(checkpoint_path=str(ckpt), vectors_dir=str(vec_dir),
                           sessions_dir=str(root / "sessions"),
                           default_embed_steps=5, default_edit_steps=10)
    return {"config": config, "generator": generator, "root": root}


@pytest.fixture(scope="module")
def client(service_env):
    app = create_app(service_env["config"])
    with TestClient(app) as c:
        yield c


def _sample_png(generator, seed=0) -> bytes:
    w = generator.map_to_w_plus(sample_latent(seed, CFG.latent_dim))
    return image_to_png_bytes(generator.synthesize(w).image)


def _create_session(client, generator, seed=0, steps=0) -> dict:
    png = _sample_png(generator, seed)
    resp = client.post(f"/sessions?embed_steps={steps}", content=png,
                       headers={"Content-Type": "image/png"})
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestHealth:
    def test_healthz_ok_when_loaded(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"
        assert resp.json()["generator_hash"]

    def test_schema_exposed(self, client):
        body = client.get("/schema").json()
        assert body["resolution"] == CFG.output_resolution
        assert len(body["names"]) == CFG.num_labels
        assert len(body["palette"]) == CFG.num_labels

    def test_healthz_503_when_models_missing(self, tmp_path):
        config = ServiceConfig(checkpoint_path=str(tmp_path / "absent.egw"),
                               sessions_dir=str(tmp_path / "s"),
                               vectors_dir=str(tmp_path / "v"))
        with TestClient(create_app(config)) as c:
            resp = c.get("/healthz")
            assert resp.status_code == 503
            assert resp.json()["status"] == "loading"


class TestSessions:
    def test_create_returns_artifacts(self, client, service_env):
        body = _create_session(client, service_env["generator"], seed=1)
        assert body["session_id"]
        assert unb64(body["reconstruction_png"]).startswith(b"\x89PNG")
        assert unb64(body["predicted_mask_png"]).startswith(b"\x89PNG")
        assert body["loss_trace_length"] == 1  # steps=0 embeds encoder-only

    def test_corrupt_png_400(self, client):
        resp = client.post("/sessions", content=b"not a png",
                           headers={"Content-Type": "image/png"})
        assert resp.status_code == 400

    def test_resolution_mismatch_409(self, client):
        png = image_to_png_bytes(np.zeros((8, 8, 3)))
        resp = client.post("/sessions", content=png,
                           headers={"Content-Type": "image/png"})
        assert resp.status_code == 409

    def test_same_bytes_distinct_sessions_same_latent(self, client, service_env):
        png = _sample_png(service_env["generator"], seed=2)
        r1 = client.post("/sessions?embed_steps=3", content=png,
                         headers={"Content-Type": "image/png"}).json()
        r2 = client.post("/sessions?embed_steps=3", content=png,
                         headers={"Content-Type": "image/png"}).json()
        assert r1["session_id"] != r2["session_id"]
        assert r1["latent_hash"] == r2["latent_hash"]

    def test_json_body_with_base64(self, client, service_env):
        png = _sample_png(service_env["generator"], seed=3)
        resp = client.post("/sessions", json={"image_png": b64(png), "embed_steps": 0})
        assert resp.status_code == 201

    def test_idempotency_key_replays_session(self, client, service_env):
        png = _sample_png(service_env["generator"], seed=4)
        headers = {"Content-Type": "image/png", "Idempotency-Key": "same-key-1"}
        r1 = client.post("/sessions?embed_steps=0", content=png, headers=headers).json()
        r2 = client.post("/sessions?embed_steps=0", content=png, headers=headers).json()
        assert r1["session_id"] == r2["session_id"]

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_history_hashes_verifiable(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=20)
        sid = session["session_id"]
        client.post(f"/sessions/{sid}/apply", json={"vector": "test-edit", "scale": 0.7})
        info = client.get(f"/sessions/{sid}").json()
        assert len(info["history"]) >= 2
        # the newest history entry's hash is the current latent's hash
        assert info["history"][-1]["latent_hash"] == info["latent_hash"]
        assert info["history"][0]["operation"] == "embed"
        assert info["history"][-1]["operation"] == "apply"


class TestMaskRoundTrip:
    def test_put_then_get_byte_identical(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=5)
        sid = session["session_id"]
        schema = LabelSchema.generic(CFG.num_labels)
        rng = np.random.default_rng(1)
        mask = rng.integers(0, CFG.num_labels, size=(16, 16))
        payload = mask_to_png_bytes(mask, schema)
        put = client.put(f"/sessions/{sid}/mask", content=payload,
                         headers={"Content-Type": "image/png"})
        assert put.status_code == 200
        got = client.get(f"/sessions/{sid}/mask")
        assert got.status_code == 200
        assert got.content == payload  # byte-for-byte

    def test_default_mask_is_prediction(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=6)
        got = client.get(f"/sessions/{session['session_id']}/mask")
        assert got.content == unb64(session["predicted_mask_png"])

    def test_bad_mask_rejected(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=7)
        resp = client.put(f"/sessions/{session['session_id']}/mask",
                          content=b"garbage", headers={"Content-Type": "image/png"})
        assert resp.status_code == 400


class TestApply:
    def test_scale_zero_returns_reconstruction_bytes(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=8)
        sid = session["session_id"]
        recon = client.get(f"/sessions/{sid}/image").content
        resp = client.post(f"/sessions/{sid}/apply",
                           json={"vector": "test-edit", "scale": 0.0})
        assert resp.status_code == 200
        assert unb64(resp.json()["image_png"]) == recon

    def test_apply_then_inverse_restores_latent(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=9)
        sid = session["session_id"]
        before = client.get(f"/sessions/{sid}").json()["latent_hash"]
        client.post(f"/sessions/{sid}/apply", json={"vector": "test-edit", "scale": 1.0})
        mid = client.get(f"/sessions/{sid}").json()["latent_hash"]
        assert mid != before
        client.post(f"/sessions/{sid}/apply", json={"vector": "test-edit", "scale": -1.0})
        after = client.get(f"/sessions/{sid}").json()["latent_hash"]
        assert after == before

    def test_refine_steps_trace_length(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=10)
        resp = client.post(f"/sessions/{session['session_id']}/apply",
                           json={"vector": "test-edit", "scale": 0.5,
                                 "refine_steps": 30})
        assert resp.status_code == 200
        assert len(resp.json()["loss_trace"]) == 31

    def test_unknown_vector_404(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=11)
        resp = client.post(f"/sessions/{session['session_id']}/apply",
                           json={"vector": "absent", "scale": 1.0})
        assert resp.status_code == 404

    def test_incompatible_vector_409(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=12)
        resp = client.post(f"/sessions/{session['session_id']}/apply",
                           json={"vector": "stale", "scale": 1.0})
        assert resp.status_code == 409


def _predicted_mask_png(client, sid) -> bytes:
    return client.get(f"/sessions/{sid}/mask").content


def _wait_for_job(client, sid, job_id, timeout=30.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        body = client.get(f"/sessions/{sid}/jobs/{job_id}").json()
        if body["status"] != "running":
            return body
        time.sleep(0.05)
    raise TimeoutError("job did not finish")


class TestEditJobs:
    def test_edit_with_predicted_mask_completes(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=13)
        sid = session["session_id"]
        mask_png = _predicted_mask_png(client, sid)
        resp = client.post(f"/sessions/{sid}/edit",
                           json={"q_labels": [0, 1, 2, 3], "mask_png": b64(mask_png),
                                 "steps": 5})
        assert resp.status_code == 202
        job = _wait_for_job(client, sid, resp.json()["job_id"])
        assert job["status"] == "done"
        assert job["result"]["loss_trace_length"] == 6
        assert job["result"]["best_loss"] <= job["result"]["final_loss"] + 1e-9

    def test_empty_region_422(self, tmp_path):
        # a head pinned to always predict label 0 makes the empty-region
        # branch deterministic: q={1} occurs in neither mask
        import torch

        generator = JointGenerator(CFG)
        head = SegmentationHead(CFG.feature_dim, (16, 8), CFG.num_labels, seed=5)
        with torch.no_grad():
            head.w[-1].zero_()
            head.b[-1].zero_()
            head.b[-1][0] = 100.0
        generator.attach_head(head)
        ckpt = tmp_path / "const.egw"
        generator.save_checkpoint(ckpt, encoder=Encoder(16, 16, 4, seed=7))
        config = ServiceConfig(checkpoint_path=str(ckpt),
                               vectors_dir=str(tmp_path / "v"),
                               sessions_dir=str(tmp_path / "s"),
                               default_embed_steps=0)
        with TestClient(create_app(config)) as c:
            session = _create_session(c, generator, seed=14)
            sid = session["session_id"]
            mask_png = _predicted_mask_png(c, sid)
            resp = c.post(f"/sessions/{sid}/edit",
                          json={"q_labels": [1], "mask_png": b64(mask_png)})
            assert resp.status_code == 422
            assert "empty edit region" in resp.json()["detail"]

    def test_cancel_leaves_session_unchanged(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=15)
        sid = session["session_id"]
        before = client.get(f"/sessions/{sid}").json()["latent_hash"]
        mask_png = _predicted_mask_png(client, sid)
        resp = client.post(f"/sessions/{sid}/edit",
                           json={"q_labels": [0, 1, 2, 3], "mask_png": b64(mask_png),
                                 "steps": 3000})
        job_id = resp.json()["job_id"]
        cancel = client.post(f"/sessions/{sid}/jobs/{job_id}/cancel")
        assert cancel.status_code == 200
        job = _wait_for_job(client, sid, job_id)
        assert job["status"] == "cancelled"
        after = client.get(f"/sessions/{sid}").json()["latent_hash"]
        assert after == before

    def test_conflict_while_running(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=16)
        sid = session["session_id"]
        mask_png = _predicted_mask_png(client, sid)
        body = {"q_labels": [0, 1, 2, 3], "mask_png": b64(mask_png), "steps": 3000}
        first = client.post(f"/sessions/{sid}/edit", json=body)
        job_id = first.json()["job_id"]
        try:
            second = client.post(f"/sessions/{sid}/edit", json=body)
            assert second.status_code == 409
            apply_resp = client.post(f"/sessions/{sid}/apply",
                                     json={"vector": "test-edit", "scale": 1.0})
            assert apply_resp.status_code == 409
        finally:
            client.post(f"/sessions/{sid}/jobs/{job_id}/cancel")
            _wait_for_job(client, sid, job_id)

    def test_progress_events_streamed(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=17)
        sid = session["session_id"]
        mask_png = _predicted_mask_png(client, sid)
        resp = client.post(f"/sessions/{sid}/edit",
                           json={"q_labels": [0, 1, 2, 3], "mask_png": b64(mask_png),
                                 "steps": 20})
        job_id = resp.json()["job_id"]
        events = []
        with client.stream("GET", f"/sessions/{sid}/jobs/{job_id}/events") as stream:
            for line in stream.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: "):]))
        assert events[-1]["status"] == "done"
        progress = [e for e in events if "step" in e]
        assert progress, "expected progress frames"
        assert all(e["step"] % 5 == 0 or e["step"] == 20 for e in progress)
        assert {"loss_total", "loss_rgb", "loss_ce", "loss_id"} <= set(progress[0])

    def test_edit_saves_vector_to_library(self, client, service_env):
        session = _create_session(client, service_env["generator"], seed=18)
        sid = session["session_id"]
        mask_png = _predicted_mask_png(client, sid)
        resp = client.post(f"/sessions/{sid}/edit",
                           json={"q_labels": [0, 1, 2, 3], "mask_png": b64(mask_png),
                                 "steps": 3, "save_vector_name": "from-service"})
        job = _wait_for_job(client, sid, resp.json()["job_id"])
        assert job["status"] == "done"
        names = [e["name"] for e in client.get("/vectors").json()["entries"]]
        assert "from-service" in names


class TestVectorsEndpoint:
    def test_incompatible_entries_flagged_not_hidden(self, client):
        body = client.get("/vectors").json()
        by_name = {e["name"]: e for e in body["entries"]}
        assert by_name["test-edit"]["compatible"] is True
        assert by_name["stale"]["compatible"] is False


class TestBenchmarkEndpoint:
    def test_scale_zero_identity_row(self, client):
        resp = client.post("/benchmark",
                           json={"vector": "test-edit", "scales": [0.0, 1.0],
                                 "n_test": 3, "seed": 5})
        assert resp.status_code == 200
        rows = resp.json()["reports"]
        zero_row = next(r for r in rows if r["scale"] == 0.0)
        assert abs(zero_row["fid"]) < 1e-6
        assert zero_row["id_score"] == pytest.approx(1.0, abs=1e-6)
        one_row = next(r for r in rows if r["scale"] == 1.0)
        assert one_row["fid"] > 0

    def test_row_count_is_scales_times_refinements(self, client):
        resp = client.post("/benchmark",
                           json={"vector": "test-edit", "scales": [0.5, 1.0],
                                 "refinement_steps": [0, 2], "n_test": 2, "seed": 6})
        assert len(resp.json()["reports"]) == 4


class TestPersistenceAcrossRestart:
    def test_sessions_resume(self, service_env):
        config = service_env["config"]
        with TestClient(create_app(config)) as c1:
            session = _create_session(c1, service_env["generator"], seed=19)
            sid = session["session_id"]
            latent = c1.get(f"/sessions/{sid}").json()["latent_hash"]
        with TestClient(create_app(config)) as c2:
            resumed = c2.get(f"/sessions/{sid}")
            assert resumed.status_code == 200
            assert resumed.json()["latent_hash"] == latent
            recon = c2.get(f"/sessions/{sid}/image")
            assert recon.status_code == 200
