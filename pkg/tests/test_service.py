import pytest
from fastapi.testclient import TestClient

from styledial.service import ModelBundle, create_app


@pytest.fixture(scope="module")
def client(tiny_model, tiny_scorer):
    bundle = ModelBundle(
        model=tiny_model,
        scorer=tiny_scorer,
        sigma=0.1,
        model_id="tiny-test",
        variant="stylefusion",
    )
    return TestClient(create_app(bundle))


@pytest.fixture()
def unloaded_client():
    return TestClient(create_app(None))


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_model_info(client, tiny_model):
    info = client.get("/model-info").json()
    assert info == {
        "model_id": "tiny-test",
        "l": tiny_model.config.latent_dim,
        "vocab_size": tiny_model.config.vocab_size,
        "variant": "stylefusion",
    }


def test_generate_zero_radius_single_candidate(client):
    response = client.post(
        "/generate",
        json={"context": "do you like the game ?", "rho": 0.0, "n_candidates": 5, "seed": 1},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["model_id"] == "tiny-test"
    assert len(body["candidates"]) == 1
    assert isinstance(body["timing_ms"], int)


def test_generate_candidates_sorted_with_score_identity(client):
    body = client.post(
        "/generate",
        json={
            "context": "do you like the game ?",
            "rho": 1.0,
            "lambda": 0.3,
            "n_candidates": 20,
            "seed": 2,
        },
    ).json()
    candidates = body["candidates"]
    scores = [c["score"] for c in candidates]
    assert scores == sorted(scores, reverse=True)
    for c in candidates:
        assert c["score"] == pytest.approx(
            0.7 * c["relevance"] + 0.3 * c["style_prob"], abs=1e-9
        )


def test_generate_lambda_zero_orders_by_relevance(client):
    body = client.post(
        "/generate",
        json={
            "context": "what do you think about the book ?",
            "rho": 1.2,
            "lambda": 0.0,
            "n_candidates": 20,
            "seed": 3,
        },
    ).json()
    relevances = [c["relevance"] for c in body["candidates"]]
    assert relevances == sorted(relevances, reverse=True)


def test_generate_multi_utterance_context(client):
    response = client.post(
        "/generate",
        json={"context": "do you like the game ? <EOU> yes i do", "rho": 0.0, "seed": 0},
    )
    assert response.status_code == 200


def test_generate_towards_mode_uses_direction_sentence(client):
    response = client.post(
        "/generate",
        json={
            "context": "do you like the game ?",
            "rho": 1.0,
            "direction_sentence": "one reckon yon game beeth splendid",
            "n_candidates": 5,
            "seed": 4,
        },
    )
    assert response.status_code == 200
    assert len(response.json()["candidates"]) >= 1


def test_generate_identical_request_identical_body_minus_timing(client):
    request = {
        "context": "tell me about the river .",
        "rho": 0.7,
        "lambda": 0.5,
        "n_candidates": 10,
        "seed": 9,
    }
    a = client.post("/generate", json=request).json()
    b = client.post("/generate", json=request).json()
    a.pop("timing_ms")
    b.pop("timing_ms")
    assert a == b


def test_generate_rejects_negative_rho(client):
    response = client.post(
        "/generate", json={"context": "hello there", "rho": -1.0}
    )
    assert 400 <= response.status_code < 500
    assert response.json()["detail"]


def test_generate_rejects_out_of_range_lambda(client):
    response = client.post(
        "/generate", json={"context": "hello there", "lambda": 2.0}
    )
    assert 400 <= response.status_code < 500


def test_generate_rejects_excessive_candidates(client):
    response = client.post(
        "/generate", json={"context": "hello there", "n_candidates": 501}
    )
    assert 400 <= response.status_code < 500


def test_generate_rejects_empty_context(client):
    response = client.post("/generate", json={"context": "   "})
    assert response.status_code == 400
    assert "reason" in response.json()["detail"]


def test_malformed_json_body_is_handled(client):
    response = client.post(
        "/generate", content=b"{not json", headers={"content-type": "application/json"}
    )
    assert 400 <= response.status_code < 500
    # the service must keep answering afterwards
    assert client.get("/health").status_code == 200


def test_unloaded_model_returns_503(unloaded_client):
    assert unloaded_client.get("/health").status_code == 200
    response = unloaded_client.post("/generate", json={"context": "hello"})
    assert response.status_code == 503
    assert unloaded_client.get("/model-info").status_code == 503
