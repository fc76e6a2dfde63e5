import json
import os
import time
from pathlib import Path

import pytest

import lensfactory as lf

DATA = Path(os.environ.get("LF_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def small_request(seed=2):
    request = json.loads((DATA / "toy_benchmark.json").read_text())["request"]
    request["evolution"].update(seed=seed, budget=40, pool_size=20)
    request["iterations"] = 1
    request["catalog"] = {"path": str(DATA / "catalog_synthetic.csv")}
    return request


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    return lf.Client(tmp_path_factory.mktemp("root"))


@pytest.fixture(scope="module")
def finished_run(client):
    status, record = client.post("/api/runs", small_request())
    assert status == 201
    run_id = record["id"]
    deadline = time.monotonic() + 300
    while record["status"] in ("queued", "running"):
        assert time.monotonic() < deadline
        time.sleep(0.2)
        _, record = client.get(f"/api/runs/{run_id}")
    return record


def test_schema_version():
    assert lf.schema_version == 1


def test_lensmaker_matches_thick_lens_formula():
    r1, r2, t, n = 40.0, -60.0, 4.0, 1.6
    power = (n - 1) * (1 / r1 - 1 / r2 + (n - 1) * t / (n * r1 * r2))
    assert lf.lensmaker_focal_length(r1, r2, t, n) == pytest.approx(1 / power, rel=1e-12)


def test_bundled_catalog_matches_generator(tmp_path):
    path = tmp_path / "catalog.csv"
    path.write_text(lf.synthetic_catalog_csv(7))
    assert path.read_text() == (DATA / "catalog_synthetic.csv").read_text()
    summary = lf.catalog_summary(path)
    assert (summary["elements"], summary["positive"], summary["negative"]) == (885, 770, 115)


def test_small_synthetic_catalog_counts(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text(lf.synthetic_catalog_csv(3, positive=12, negative=5))
    assert lf.catalog_summary(path)["elements"] == 17


def test_missing_catalog_raises():
    with pytest.raises(lf.Error):
        lf.catalog_summary("/nonexistent/catalog.csv")


def test_spec_validation(client):
    status, body = client.post("/api/spec/validate", {"fov": 40, "f_number": 5.6})
    assert status == 200
    assert body["schema_version"] == 1


def test_errors_are_versioned(client):
    status, body = client.get("/api/runs/run-9999")
    assert status == 404
    assert body["error"]["type"] == "not_found"
    status, body = client.post("/api/runs", {"spec": {}})
    assert status == 400
    assert body["schema_version"] == 1


def test_run_lifecycle(client, finished_run):
    assert finished_run["status"] == "done"
    run_id = finished_run["id"]
    status, listing = client.get("/api/runs")
    assert status == 200
    assert run_id in [r["id"] for r in listing["runs"]]
    status, _ = client.post(f"/api/runs/{run_id}/cancel")
    assert status == 409
    status, cands = client.get(f"/api/runs/{run_id}/candidates")
    assert status == 200
    scores = [c["score"] for c in cands["candidates"]]
    assert scores == sorted(scores, reverse=True)
    status, text = client.get(f"/api/runs/{run_id}/candidates/0/psf", format="text")
    assert status == 200 and isinstance(text, str) and text


def test_evaluate_candidate_system(client, finished_run):
    status, detail = client.get(f"/api/runs/{finished_run['id']}/candidates/0")
    assert status == 200
    system = detail["candidate"]["system"]
    result = lf.evaluate_system(system, DATA / "catalog_synthetic.csv", finished_run["request"]["merit"])
    assert result["efl"] == pytest.approx(detail["paraxial"]["efl"], rel=1e-9)
    assert result["report"]["pairs"]
