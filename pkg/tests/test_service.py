import warnings

import pytest

warnings.filterwarnings("ignore", message=".*httpx.*")
from fastapi.testclient import TestClient  # noqa: E402

from tadgame import __version__  # noqa: E402
from tadgame.service import app  # noqa: E402

client = TestClient(app, raise_server_exceptions=False)


def test_health():
    assert client.get("/health").json() == {"status": "ok", "version": __version__}


def test_scenarios():
    names = client.get("/scenarios").json()["scenarios"]
    assert "cs_escape" in names
    cfg = client.get("/scenarios/cs_escape").json()
    assert cfg["target"]["position"] == [25.0, 30.0]
    assert client.get("/scenarios/nope").status_code == 422


def test_simulate_bundled():
    resp = client.post("/simulate", json={"scenario": "cs_escape", "seed": 2, "include_trajectory": True})
    assert resp.status_code == 200
    body = resp.json()
    assert body["outcome"] == "AttackerIntercepted"
    assert body["trajectory_csv"].startswith("t,x_T,")
    assert len(body["trajectory_csv"].splitlines()) == body["steps"] + 2


def test_simulate_inline_config():
    cfg = client.get("/scenarios/cs_escape").json()
    cfg["duration"] = 0.2
    body = client.post("/simulate", json={"config": cfg}).json()
    assert body["outcome"] == "Timeout" and body["steps"] == 4
    assert body["metrics"]["interception_time"] == pytest.approx(0.2)


def test_simulate_toml_errors():
    resp = client.post("/simulate", json={"toml": "name = \n"})
    assert resp.status_code == 422 and resp.json()["error"] == "ParseError"
    resp = client.post("/simulate", json={"scenario": "cs_escape", "toml": "x=1"})
    assert resp.status_code == 422


def test_runtime_error_is_500(monkeypatch):
    import tadgame.service as svc
    from tadgame.errors import SimulationError

    def fail(cfg, seed=None):
        raise SimulationError(7, RuntimeError("diverged"))

    monkeypatch.setattr(svc, "run_simulation", fail)
    resp = client.post("/simulate", json={"scenario": "cs_escape"})
    assert resp.status_code == 500 and "step 7" in resp.json()["detail"]


def test_zones():
    body = client.post("/zones", json={"mode": "cs", "gamma_at": 0.5, "xa": 0.5, "grid": 11,
                                       "include_svg": True}).json()
    assert len(body["labels"]) == 11 and len(body["xs"]) == 11
    assert body["csv"].startswith("x,y,label") and body["svg"].startswith("<svg")
    assert body["escape_area"] > 0


def test_zones_validation():
    assert client.post("/zones", json={"gamma_at": 1.5}).status_code == 422
    assert client.post("/zones", json={"mode": "bogus"}).status_code == 422


def test_sweep_small():
    cfg = client.get("/scenarios/cs_escape").json()
    cfg["duration"] = 0.1
    body = client.post("/sweep", json={"config": cfg, "grid": 2, "seed": 0}).json()
    assert len(body["cells"]) == 4 and body["evaluated"] <= 4


def test_compare():
    cfg = client.get("/scenarios/cs_escape").json()
    cfg["duration"] = 0.2
    body = client.post("/compare", json={"config": cfg, "controllers": ["nmpc", "clos"]}).json()
    assert [r["controller"] for r in body["rows"]] == ["nmpc", "clos"]
    assert client.post("/compare", json={"config": cfg, "controllers": ["nmpc"]}).status_code == 422
