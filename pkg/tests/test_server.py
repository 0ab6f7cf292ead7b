from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal

import pytest
from fastapi.testclient import TestClient

from rhetann.agreement import compute_report
from rhetann.gateway import (CallPolicy, FailingTransport, Gateway,
                             MockTransport, ModelProfile)
from rhetann.server import ServerConfig, create_app
from rhetann.store import Session, AnnotatorId, Store

from conftest import seed_annotations

PROFILE = ModelProfile("mock-model", Decimal("0"), Decimal("0"))


def make_gateway(taxonomy, transport=None):
    return Gateway(transport or MockTransport(seed=2),
                   profiles={"mock-model": PROFILE}, taxonomy=taxonomy,
                   sleeper=lambda _: None)


@pytest.fixture
def client(store, small_corpus, taxonomy):
    app = create_app(store, small_corpus, taxonomy)
    return TestClient(app)


@pytest.fixture
def assisted(store, small_corpus, taxonomy):
    gateway = make_gateway(taxonomy)
    config = ServerConfig(assist_model="mock-model")
    app = create_app(store, small_corpus, taxonomy, gateway=gateway, config=config)
    return TestClient(app)


def start_session(client, annotator="a1"):
    response = client.post("/sessions", json={"annotator_id": annotator})
    assert response.status_code == 200
    return response.json()["session_id"]


# -- taxonomy + caching --------------------------------------------------------

def test_taxonomy_etag_and_304(client):
    first = client.get("/taxonomy")
    assert first.status_code == 200
    etag = first.headers["etag"]
    body = first.json()
    assert len(body["features"]) == 22
    again = client.get("/taxonomy", headers={"If-None-Match": etag})
    assert again.status_code == 304
    fresh = client.get("/taxonomy", headers={"If-None-Match": '"stale"'})
    assert fresh.status_code == 200 and fresh.headers["etag"] == etag


# -- session traversal -----------------------------------------------------------

def test_traversal_is_sentence_major_feature_minor(client, small_corpus, taxonomy):
    session = start_session(client)
    manual = taxonomy.manual_features()
    first_sentence = list(small_corpus)[0]

    unit = client.get(f"/sessions/{session}/next").json()
    assert unit["status"] == "ok"
    assert unit["sentence"]["id"] == first_sentence.id
    assert unit["feature"]["id"] == manual[0].id
    assert unit["sentence"]["parse"]["label"] == "S"  # tree ships with the unit
    assert unit["existing"] is None

    # submitting the presented unit advances to the next feature
    client.post("/annotations", json={
        "session_id": session, "sentence_id": unit["sentence"]["id"],
        "feature_id": unit["feature"]["id"], "properties": []})
    unit2 = client.get(f"/sessions/{session}/next").json()
    assert unit2["sentence"]["id"] == first_sentence.id
    assert unit2["feature"]["id"] == manual[1].id

    # walking through the rest of the features wraps to sentence two
    for i in range(1, len(manual)):
        u = client.get(f"/sessions/{session}/next").json()
        client.post("/annotations", json={
            "session_id": session, "sentence_id": u["sentence"]["id"],
            "feature_id": u["feature"]["id"], "properties": []})
    wrapped = client.get(f"/sessions/{session}/next").json()
    assert wrapped["sentence"]["id"] == list(small_corpus)[1].id
    assert wrapped["feature"]["id"] == manual[0].id


def test_out_of_order_submit_does_not_advance(client, small_corpus):
    session = start_session(client)
    before = client.get(f"/sessions/{session}/next").json()["cursor"]
    other = list(small_corpus)[5]
    response = client.post("/annotations", json={
        "session_id": session, "sentence_id": other.id,
        "feature_id": "tropes", "properties": []})
    assert response.status_code == 200  # stored fine, just no cursor move
    after = client.get(f"/sessions/{session}/next").json()["cursor"]
    assert after == before


def test_session_reclaim_and_end_of_queue(client, store, small_corpus):
    session = start_session(client, annotator="a2")
    reclaimed = client.post("/sessions", json={
        "annotator_id": "ignored", "session_id": session}).json()
    assert reclaimed["session_id"] == session
    assert reclaimed["annotator_id"] == "a2"

    done = Session(session_id="done-session",
                   annotator=AnnotatorId(id="a2", kind="human"),
                   cursor=(len(list(small_corpus)), 0))
    store.save_session(done)
    assert client.get("/sessions/done-session/next").json()["status"] == \
        "end_of_queue"
    assert client.get("/sessions/nope/next").status_code == 404


def test_next_shows_existing_annotation(client, store, small_corpus, taxonomy):
    session = start_session(client)
    first = list(small_corpus)[0]
    feature = taxonomy.manual_features()[0].id
    props = [taxonomy.manual_features()[0].properties[0].id]
    client.post("/annotations", json={
        "session_id": session, "sentence_id": first.id,
        "feature_id": feature, "properties": props, "node_path": [0]})
    unit = client.get(f"/sessions/{session}/next").json()
    # cursor advanced past it; rewind to look at the same unit again
    store.save_session(Session(session_id=session,
                               annotator=AnnotatorId(id="a1", kind="human"),
                               cursor=(0, 0)))
    unit = client.get(f"/sessions/{session}/next").json()
    assert unit["existing"] == {"properties": props, "node_path": [0]}


# -- validation ---------------------------------------------------------------------

def test_submit_unknown_property_is_422(client, small_corpus):
    session = start_session(client)
    response = client.post("/annotations", json={
        "session_id": session, "sentence_id": list(small_corpus)[0].id,
        "feature_id": "aspect", "properties": ["sparkle"]})
    assert response.status_code == 422
    assert "sparkle" in response.json()["detail"]


def test_submit_unknown_sentence_is_422(client):
    response = client.post("/annotations", json={
        "annotator_id": "a1", "sentence_id": "nope",
        "feature_id": "aspect", "properties": []})
    assert response.status_code == 422


def test_submit_needs_identity(client, small_corpus):
    response = client.post("/annotations", json={
        "sentence_id": list(small_corpus)[0].id,
        "feature_id": "aspect", "properties": []})
    assert response.status_code == 422


# -- assistant -------------------------------------------------------------------------

def test_assist_caches_until_forced(assisted, store, small_corpus):
    sid = list(small_corpus)[0].id
    first = assisted.get("/assist", params={"sentence_id": sid,
                                            "feature_id": "aspect"}).json()
    assert first["advisory"] is True and first["cached"] is False
    assert first["parse_ok"] is True

    second = assisted.get("/assist", params={"sentence_id": sid,
                                             "feature_id": "aspect"}).json()
    assert second["cached"] is True
    assert second["properties"] == first["properties"]
    assert len(store.exchanges()) == 1

    forced = assisted.post("/assist", json={"sentence_id": sid,
                                            "feature_id": "aspect"}).json()
    assert forced["cached"] is False
    assert len(store.exchanges()) == 2


def test_assist_rejects_non_manual_feature(assisted, small_corpus):
    response = assisted.get("/assist", params={
        "sentence_id": list(small_corpus)[0].id,
        "feature_id": "language-of-origin"})
    assert response.status_code == 422


def test_assist_without_gateway_is_503(client, small_corpus):
    response = client.get("/assist", params={
        "sentence_id": list(small_corpus)[0].id, "feature_id": "aspect"})
    assert response.status_code == 503


def test_assist_transport_down_is_503_with_retry_after(store, small_corpus, taxonomy):
    gateway = Gateway(FailingTransport(), profiles={"mock-model": PROFILE},
                      taxonomy=taxonomy, sleeper=lambda _: None)
    app = create_app(store, small_corpus, taxonomy, gateway=gateway,
                     config=ServerConfig(assist_model="mock-model",
                                         assist_policy=CallPolicy(max_retries=0)))
    client = TestClient(app)
    response = client.get("/assist", params={
        "sentence_id": list(small_corpus)[0].id, "feature_id": "aspect"})
    assert response.status_code == 503
    assert response.headers.get("retry-after") == "5"


def test_submit_never_waits_on_slow_assistant(store, small_corpus, taxonomy):
    slow = MockTransport(seed=1, latency=2.0)
    gateway = make_gateway(taxonomy, slow)
    app = create_app(store, small_corpus, taxonomy, gateway=gateway,
                     config=ServerConfig(assistant_capture=True,
                                         assist_model="mock-model"))
    client = TestClient(app)
    session = start_session(client)
    unit = client.get(f"/sessions/{session}/next").json()
    started = time.monotonic()
    response = client.post("/annotations", json={
        "session_id": session, "sentence_id": unit["sentence"]["id"],
        "feature_id": unit["feature"]["id"], "properties": []})
    elapsed = time.monotonic() - started
    assert response.status_code == 200
    assert elapsed < 0.5  # capture runs in the background
    deadline = time.monotonic() + 10
    while not store.exchanges() and time.monotonic() < deadline:
        time.sleep(0.05)
    assert len(store.exchanges()) == 1  # it did land eventually


def test_submit_survives_dead_assistant(store, small_corpus, taxonomy):
    gateway = Gateway(FailingTransport(), profiles={"mock-model": PROFILE},
                      taxonomy=taxonomy, sleeper=lambda _: None)
    app = create_app(store, small_corpus, taxonomy, gateway=gateway,
                     config=ServerConfig(assistant_capture=True,
                                         assist_model="mock-model",
                                         assist_policy=CallPolicy(max_retries=0)))
    client = TestClient(app)
    response = client.post("/annotations", json={
        "annotator_id": "a1",
        "sentence_id": list(small_corpus)[0].id,
        "feature_id": "aspect", "properties": []})
    assert response.status_code == 200  # annotating is isolated from the LLM


# -- persistence + concurrency --------------------------------------------------------

def test_restart_recovers_sessions_and_annotations(tmp_path, small_corpus, taxonomy):
    path = tmp_path / "log.jsonl"
    store1 = Store(path, taxonomy=taxonomy, corpus=small_corpus)
    client1 = TestClient(create_app(store1, small_corpus, taxonomy))
    session = start_session(client1)
    unit = client1.get(f"/sessions/{session}/next").json()
    client1.post("/annotations", json={
        "session_id": session, "sentence_id": unit["sentence"]["id"],
        "feature_id": unit["feature"]["id"], "properties": []})
    cursor_before = client1.get(f"/sessions/{session}/next").json()["cursor"]

    store2 = Store(path, taxonomy=taxonomy, corpus=small_corpus)  # "restart"
    client2 = TestClient(create_app(store2, small_corpus, taxonomy))
    after = client2.get(f"/sessions/{session}/next").json()
    assert after["cursor"] == cursor_before
    assert len(store2.annotations()) == 1


def test_concurrent_submits_all_land(client, store, small_corpus):
    ids = [s.id for s in small_corpus]

    def submit(i):
        response = client.post("/annotations", json={
            "annotator_id": f"bot{i % 5}", "sentence_id": ids[i % len(ids)],
            "feature_id": "aspect", "properties": ["simple"]})
        assert response.status_code == 200
        return response.json()["revision"]

    with ThreadPoolExecutor(max_workers=8) as pool:
        revisions = list(pool.map(submit, range(40)))
    assert len(set(revisions)) == 40  # every write got its own revision
    assert len(store.annotation_history()) == 40


# -- progress + reports ------------------------------------------------------------------

def test_progress_counts(client, store, small_corpus, taxonomy):
    seed_annotations(store, small_corpus, "aspect", {
        list(small_corpus)[0].id: {"a1": {"simple"}, "a2": set()},
        list(small_corpus)[1].id: {"a1": set()},
    })
    body = client.get("/progress").json()
    assert body["n_sentences"] == 12
    assert body["n_manual_features"] == 19
    assert body["total_units"] == 12 * 19
    assert body["per_annotator"] == {"a1": 2, "a2": 1}
    assert body["per_feature"]["aspect"] == {"a1": 2, "a2": 1}


def test_agreement_report_matches_library(client, store, small_corpus):
    ids = [s.id for s in small_corpus]
    seed_annotations(store, small_corpus, "aspect", {
        ids[0]: {"a1": {"simple"}, "a2": {"simple"}},
        ids[1]: {"a1": {"perfect"}, "a2": {"progressive"}},
        ids[2]: {"a1": set(), "a2": set()},
    })
    body = client.get("/reports/agreement",
                      params={"annotators": "a1,a2"}).json()
    assert len(body["agreement"]) == 1
    row = body["agreement"][0]
    expected = compute_report(store, "aspect", ["a1", "a2"])
    assert row["krippendorff"] == pytest.approx(expected.krippendorff)
    assert row["jaccard"] == pytest.approx(expected.jaccard)
    assert row["exact"] == pytest.approx(expected.exact)
    assert row["n_units"] == expected.n_units

    table = client.get("/reports/agreement",
                       params={"annotators": "a1,a2", "format": "table"})
    assert table.headers["content-type"].startswith("text/plain")
    assert table.text.splitlines()[0].startswith("Feature")

    assert client.get("/reports/agreement",
                      params={"annotators": "a1"}).status_code == 422
