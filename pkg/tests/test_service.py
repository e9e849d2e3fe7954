"""HTTP + push channel surface of the session service."""

import pytest
from fastapi.testclient import TestClient

from cogmap.service import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


def new_session(client, task="trip"):
    response = client.post("/sessions", json={"task_id": task})
    assert response.status_code == 200
    return response.json()["session_id"]


class TestSessions:
    def test_create_and_fetch_state(self, client):
        sid = new_session(client)
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["state"]["task_id"] == "trip"
        assert state["seq"] >= 1

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/state").status_code == 404

    def test_turn_commits_and_returns_events(self, client):
        sid = new_session(client)
        out = client.post(f"/sessions/{sid}/turns",
                          json={"text": "I prefer budget hotels"}).json()
        kinds = [e["kind"] for e in out["events"]]
        assert kinds[0] == "utterance" and "patch_committed" in kinds
        assert out["digest"]

    def test_layout_endpoint(self, client):
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns", json={"text": "I prefer budget hotels"})
        layout = client.get(f"/sessions/{sid}/layout").json()
        assert layout["positions"]

    def test_events_since(self, client):
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns", json={"text": "I prefer budget hotels"})
        all_events = client.get(f"/sessions/{sid}/events").json()["events"]
        tail = client.get(f"/sessions/{sid}/events",
                          params={"since": all_events[0]["seq"]}).json()["events"]
        assert len(tail) == len(all_events) - 1

    def test_edit_roundtrip(self, client):
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns", json={"text": "I prefer budget hotels"})
        state = client.get(f"/sessions/{sid}/state").json()["state"]
        cid = sorted(state["cognitive"]["graph"]["concepts"])[0]
        out = client.post(f"/sessions/{sid}/edits", json={
            "kind": "confidence", "target": cid, "value": 0.91})
        assert out.status_code == 200
        state = client.get(f"/sessions/{sid}/state").json()["state"]
        assert state["cognitive"]["graph"]["concepts"][cid]["confidence"] == 0.91

    def test_bad_edit_maps_error_code(self, client):
        sid = new_session(client)
        out = client.post(f"/sessions/{sid}/edits", json={
            "kind": "confidence", "target": "ghost", "value": 0.9})
        assert out.status_code == 404
        assert out.json()["detail"]["code"] == "unknown-target"

    def test_archive_endpoint_replayable(self, client, tmp_path):
        from cogmap.session import parse_archive, replay, state_digest
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns", json={"text": "I prefer budget hotels"})
        text = client.get(f"/sessions/{sid}/archive").text
        archive = parse_archive(text.encode())
        state = replay(archive)
        assert state_digest(state) == archive.final_state_digest


class TestPushChannel:
    def test_snapshot_then_update(self, client):
        sid = new_session(client)
        with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
            hello = ws.receive_json()
            assert hello["state"]["task_id"] == "trip"
            client.post(f"/sessions/{sid}/turns", json={"text": "I prefer budget hotels"})
            update = ws.receive_json()
            assert any(e["kind"] == "patch_committed" for e in update["events"])
            assert update["layout"]["positions"]
            assert update["digest"]

    def test_push_carries_surfaced_patch(self, client):
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns", json={"text": "I prefer hiking trips"})
        client.post(f"/sessions/{sid}/turns", json={"text": "I like quiet cabins"})
        client.post(f"/sessions/{sid}/turns",
                    json={"text": "We must keep the budget under control"})
        state = client.get(f"/sessions/{sid}/state").json()["state"]
        concepts = state["cognitive"]["graph"]["concepts"]
        targets = sorted(concepts)[:3]
        assert len(targets) == 3
        with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
            ws.receive_json()
            out = client.post(f"/sessions/{sid}/edits", json={"edits": [
                {"kind": "status", "target": t, "status": "deprecated"}
                for t in targets]})
            assert out.status_code == 200
            update = ws.receive_json()
            assert update["surfaced_patch"] is not None
            patch_id = update["surfaced_patch"]["patch"]["id"]
        approved = client.post(f"/sessions/{sid}/patches/{patch_id}/approve", json={})
        assert approved.status_code == 200
        state = client.get(f"/sessions/{sid}/state").json()["state"]
        assert all(concepts := state["cognitive"]["graph"]["concepts"])
        assert all(state["cognitive"]["graph"]["concepts"][t]["status"] == "deprecated"
                   for t in targets)


class TestMotifEditsViaEditsEndpoint:
    def test_motif_edit_accepted_as_edit_payload(self, client):
        sid = new_session(client)
        client.post(f"/sessions/{sid}/turns",
                    json={"text": "I usually prefer affordable options, but I'd pay "
                                  "more for verified reviews"})
        state = client.get(f"/sessions/{sid}/state").json()["state"]
        motifs = state["cognitive"]["motifs"]
        assert motifs
        mid = sorted(motifs)[0]
        out = client.post(f"/sessions/{sid}/edits",
                          json={"kind": "motif", "motif": mid, "action": "cancel"})
        assert out.status_code == 200
        state = client.get(f"/sessions/{sid}/state").json()["state"]
        assert state["cognitive"]["motifs"][mid]["status"] == "cancelled"
