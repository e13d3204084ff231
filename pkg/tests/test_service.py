"""HTTP service endpoints."""

import json

import pytest
from fastapi.testclient import TestClient

from pslvqa.service import create_app

from helpers import FIXTURES


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def two_answer_payload(**config):
    rules = (FIXTURES / "two_answer" / "rules.psl").read_text()
    data = [
        json.loads(line)
        for line in (FIXTURES / "two_answer" / "data.jsonl").read_text().splitlines()
    ]
    payload = {"rules": rules, "data": data}
    if config:
        payload["config"] = config
    return payload


BARN_SIMS = [
    {"p1": "barn", "p2": "horses", "value": 0.6},
    {"p1": "church", "p2": "horses", "value": 0.1},
    {"p1": "barn", "p2": "building", "value": 0.8},
    {"p1": "church", "p2": "building", "value": 0.8},
    {"p1": "barn", "p2": "fence", "value": 0.55},
    {"p1": "is", "p2": "standing near", "value": 0.85},
    {"p1": "building", "p2": "fence", "value": 0.85},
    {"p1": "is", "p2": "behind", "value": 0.5},
    {"p1": "building", "p2": "horses", "value": 0.4},
]


def barn_payload(**extra):
    payload = {
        "answers": {"barn": 0.30, "church": 0.45},
        "image_triplets": [
            {"node1": "horses", "rel": "standing near", "node2": "fence", "confidence": 0.9},
            {"node1": "building", "rel": "behind", "node2": "horses", "confidence": 0.8},
        ],
        "question_triplets": [
            {"node1": "?x", "rel": "is", "node2": "building", "confidence": 0.9},
        ],
        "sims": BARN_SIMS,
    }
    payload.update(extra)
    return payload


class TestHealth:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["version"]


class TestInfer:
    def test_two_answer_problem(self, client):
        r = client.post("/infer", json=two_answer_payload())
        assert r.status_code == 200
        body = r.json()
        assert body["converged"] is True
        assert body["objective"] == pytest.approx(0.6, abs=1e-4)
        assert set(body["values"]) == {"ans(a)", "ans(b)"}
        assert body["values"]["ans(a)"] == pytest.approx(1.0, abs=1e-4)
        assert body["values"]["ans(b)"] == pytest.approx(0.0, abs=1e-4)

    def test_values_are_sorted_by_atom(self, client):
        r = client.post("/infer", json=two_answer_payload())
        keys = list(r.json()["values"])
        assert keys == sorted(keys)

    def test_solver_config_passthrough(self, client):
        r = client.post("/infer", json=two_answer_payload(max_iterations=1))
        assert r.status_code == 200
        assert r.json()["converged"] is False

    def test_rule_syntax_error_maps_to_400(self, client):
        payload = two_answer_payload()
        payload["rules"] = "pred ans/1 open\n1.0: ans(a) <-\n"
        r = client.post("/infer", json=payload)
        assert r.status_code == 400
        assert "line 2" in r.json()["detail"]

    def test_bad_data_record_maps_to_400(self, client):
        payload = two_answer_payload()
        payload["data"][0]["args"] = []
        r = client.post("/infer", json=payload)
        assert r.status_code == 400
        assert "record 1" in r.json()["detail"]

    def test_unsafe_rule_maps_to_400(self, client):
        payload = two_answer_payload()
        payload["rules"] = "pred word/1\npred ans/1 open\n1.0: ans(Z) <- !word(Z)\n"
        r = client.post("/infer", json=payload)
        assert r.status_code == 400
        assert "unsafe" in r.json()["detail"]

    def test_unknown_request_field_is_rejected(self, client):
        payload = two_answer_payload()
        payload["mystery"] = 1
        assert client.post("/infer", json=payload).status_code == 422

    def test_unknown_config_key_is_rejected(self, client):
        r = client.post("/infer", json=two_answer_payload(budget=2.0))
        assert r.status_code == 422


class TestAnswer:
    def test_barn_ranking(self, client):
        r = client.post("/answer", json=barn_payload())
        assert r.status_code == 200
        body = r.json()
        assert body["converged"] is True
        assert [a["phrase"] for a in body["ranking"]] == ["barn", "church"]
        assert body["ranking"][0]["value"] >= 0.1 - 1e-4
        assert body["ranking"][1]["value"] == 0.0
        assert body["ranking"][0]["prior"] == pytest.approx(0.30)
        assert body["evidence"] is None

    def test_evidence_payload(self, client):
        r = client.post("/answer", json=barn_payload(evidence=True))
        assert r.status_code == 200
        ev = r.json()["evidence"]
        assert set(ev) == {"barn", "church"}
        assert [item["rule"] for item in ev["barn"]] == ["w2", "w1", "w6", "w1"]
        assert ev["church"] == []
        first = ev["barn"][0]
        assert first["score"] == pytest.approx(1.0, abs=1e-4)
        assert first["body"] == ["word(barn)=1.000000"]

    def test_config_passthrough_caps_the_budget(self, client):
        r = client.post("/answer", json=barn_payload(config={"s_bound": 0.05}))
        assert r.status_code == 200
        top = r.json()["ranking"][0]
        assert top["phrase"] == "barn"
        assert top["value"] == pytest.approx(0.05, abs=1e-3)

    def test_bad_prior_maps_to_400(self, client):
        payload = barn_payload()
        payload["answers"]["barn"] = 1.5
        r = client.post("/answer", json=payload)
        assert r.status_code == 400
        assert "outside" in r.json()["detail"]

    def test_triplet_confidence_validated_by_schema(self, client):
        payload = barn_payload()
        payload["image_triplets"][0]["confidence"] = 1.5
        assert client.post("/answer", json=payload).status_code == 422

    def test_unknown_field_is_rejected(self, client):
        assert client.post("/answer", json=barn_payload(mystery=1)).status_code == 422


class TestExtract:
    CAPTION = "\n".join(
        [
            "# conf=0.8",
            "1\tthe\tthe\tDT\t2\tdet",
            "2\tmen\tman\tNNS\t3\tnsubj",
            "3\tare\tbe\tVBP\t0\troot",
            "4\ton\ton\tIN\t6\tcase",
            "5\tthe\tthe\tDT\t6\tdet",
            "6\tsidewalk\tsidewalk\tNN\t3\tobl",
        ]
    )

    def test_caption_mode(self, client):
        r = client.post(
            "/extract",
            json={
                "parses": self.CAPTION,
                "vocab": ["on", "near"],
                "sims": [{"p1": "are on the", "p2": "on", "value": 0.85}],
            },
        )
        assert r.status_code == 200
        assert r.json()["triplets"] == [
            {"pred": "has_img", "args": ["men", "on", "sidewalk"], "value": 0.68}
        ]

    def test_question_mode(self, client):
        parses = (FIXTURES / "question" / "parses.conll").read_text()
        r = client.post(
            "/extract",
            json={
                "parses": parses,
                "vocab": ["is", "near", "behind"],
                "mode": "question",
                "sims": [{"p1": "is the", "p2": "is", "value": 0.9}],
            },
        )
        assert r.status_code == 200
        assert r.json()["triplets"] == [
            {"pred": "has_q", "args": ["?x", "is", "building"], "value": 0.9}
        ]

    def test_malformed_parse_maps_to_400(self, client):
        r = client.post(
            "/extract", json={"parses": "1\tbroken", "vocab": ["on"]}
        )
        assert r.status_code == 400
        assert "columns" in r.json()["detail"]

    def test_bad_mode_rejected_by_schema(self, client):
        r = client.post(
            "/extract", json={"parses": self.CAPTION, "vocab": ["on"], "mode": "video"}
        )
        assert r.status_code == 422
