import warnings

import numpy as np
import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from conftest import random_game, small_cost_game
from rsgames import __version__
from rsgames.model import spec_to_dict
from rsgames.service.app import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def spec_doc(seed=0, **kw):
    return spec_to_dict(random_game(seed, **kw))


class TestHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "version": __version__}


class TestCheckEndpoint:
    def test_passing_game(self, client):
        doc = spec_to_dict(small_cost_game(1, n=3))
        resp = client.post("/check", json={"spec": doc})
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["report"]["all_hold"]
        assert body["report"]["R0"] > 1

    def test_failing_assumption(self, client):
        doc = spec_doc(2, cost_scale=5.0)  # big costs break the small-cost bound
        resp = client.post("/check", json={"spec": doc})
        assert resp.status_code == 200
        assert resp.json()["status"] == "assumption_failure"

    def test_invalid_spec_rejected(self, client):
        doc = spec_doc(3)
        doc["q"][0][0][0][0] = 2.0  # row no longer sums to 1
        resp = client.post("/check", json={"spec": doc})
        assert resp.status_code == 400
        assert "sums to" in resp.json()["detail"]

    def test_nonfinite_rejected(self, client):
        import json as _json

        doc = spec_doc(4)
        body = _json.dumps({"spec": doc}).replace(
            _json.dumps(doc["theta"]), "NaN", 1
        )
        resp = client.post(
            "/check", content=body, headers={"Content-Type": "application/json"}
        )
        assert resp.status_code in (400, 422)


class TestSolveEndpoints:
    def test_discounted_roundtrip(self, client):
        doc = spec_doc(5, n=2, alpha=0.4)
        resp = client.post("/solve/discounted", json={"spec": doc, "eps": 1e-6})
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["gaps"]["passed"]
        assert len(body["profile"]["stages"]) == body["horizon"]
        assert len(body["psi1"]) == 2

    def test_discounted_alpha_one_rejected(self, client):
        doc = spec_doc(6)
        doc["alpha"] = 1.0
        resp = client.post("/solve/discounted", json={"spec": doc})
        assert resp.status_code == 400

    def test_ergodic_assumption_gate_and_force(self, client):
        doc = spec_doc(7, n=2, cost_scale=5.0)
        resp = client.post("/solve/ergodic", json={"spec": doc})
        assert resp.json()["status"] == "assumption_failure"
        forced = client.post("/solve/ergodic", json={"spec": doc, "force": True})
        body = forced.json()
        assert body["status"] in ("ok", "search_failure")
        assert body["warnings"]

    def test_ergodic_solution(self, client):
        doc = spec_to_dict(small_cost_game(301, n=2))
        resp = client.post("/solve/ergodic", json={"spec": doc, "tol": 1e-7})
        body = resp.json()
        assert body["status"] == "ok"
        assert body["gaps"]["passed"]
        assert len(body["h1"]) == 2
        assert abs(body["lambda1"]) <= 1.0

    def test_ergodic_search_failure_reported(self, client):
        doc = spec_to_dict(small_cost_game(43, n=2))  # only mixed equilibria
        resp = client.post("/solve/ergodic", json={"spec": doc, "max_rounds": 40})
        body = resp.json()
        assert body["status"] == "search_failure"
        assert "no verifiable equilibrium" in body["failure"]


class TestSimulateVerifyEndpoints:
    def test_simulate_ergodic(self, client):
        doc = spec_to_dict(small_cost_game(301, n=2))
        sol = client.post("/solve/ergodic", json={"spec": doc, "tol": 1e-7}).json()
        resp = client.post(
            "/simulate",
            json={
                "spec": doc,
                "kind": "ergodic",
                "stationary_profile": sol["profile"],
                "batches": 50,
                "horizon": 300,
                "seed": 5,
            },
        )
        body = resp.json()
        assert body["status"] == "ok"
        assert len(body["batch_stats"]) == 50
        est, se = body["player1"]["point"], body["player1"]["stderr"]
        assert abs(est - sol["lambda1"]) <= 4 * se

    def test_simulate_discounted_blocks(self, client):
        doc = spec_doc(8, n=2, alpha=0.3)
        sol = client.post("/solve/discounted", json={"spec": doc, "eps": 1e-4}).json()
        resp = client.post(
            "/simulate",
            json={
                "spec": doc,
                "kind": "discounted",
                "markov_profile": sol["profile"],
                "paths": 400,
                "batches": 8,
                "seed": 6,
            },
        )
        body = resp.json()
        assert body["status"] == "ok"
        assert len(body["batch_stats"]) == 8
        assert sum(row["n"] for row in body["batch_stats"]) == 400

    def test_verify_both_kinds(self, client):
        doc = spec_doc(9, n=2, alpha=0.4)
        sol = client.post("/solve/discounted", json={"spec": doc, "eps": 1e-6}).json()
        ver = client.post(
            "/verify",
            json={"spec": doc, "kind": "discounted", "markov_profile": sol["profile"]},
        ).json()
        assert ver["status"] == "ok"
        assert ver["discounted_gaps"]["passed"]

        edoc = spec_to_dict(small_cost_game(302, n=2))
        esol = client.post("/solve/ergodic", json={"spec": edoc, "tol": 1e-7}).json()
        ver2 = client.post(
            "/verify",
            json={"spec": edoc, "kind": "ergodic", "stationary_profile": esol["profile"]},
        ).json()
        assert ver2["status"] == "ok"

    def test_verify_tampered_profile_fails(self, client):
        edoc = spec_to_dict(small_cost_game(303, n=2))
        esol = client.post("/solve/ergodic", json={"spec": edoc, "tol": 1e-7}).json()
        prof = esol["profile"]
        mu = np.array(prof["mu"])
        worst = np.zeros_like(mu[0])
        worst[int(np.argmin(mu[0]))] = 1.0
        mu[0] = worst
        ver = client.post(
            "/verify",
            json={
                "spec": edoc,
                "kind": "ergodic",
                "stationary_profile": {"mu": mu.tolist(), "nu": prof["nu"]},
            },
        ).json()
        assert ver["status"] == "verification_failure"
        assert ver["ergodic_gaps"]["gap1"] > 0

    def test_missing_profile_rejected(self, client):
        doc = spec_doc(10)
        resp = client.post("/simulate", json={"spec": doc, "kind": "ergodic"})
        assert resp.status_code == 400
