from __future__ import annotations

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from storydig.provider import ScriptedProvider, ScriptedResponses
from storydig.service import create_app
from storydig.store import ProjectStore

from helpers import MILK_PREMISE, MILK_SITUATION, NUDGED_BEAT, NUDGE_TEXT, SIMULATED_BEAT


def make_client(tmp_path, script: dict | None = None, provider=None, cap=4):
    store = ProjectStore(tmp_path)
    if provider is None:
        provider = ScriptedProvider(ScriptedResponses.from_dict(script or {}))
    app = create_app(store, provider, provider_cap=cap)
    return TestClient(app), store, provider


def milk_project(client) -> tuple[str, str, str, str]:
    """Create the milk-carton project over HTTP; returns (pid, alice, bob, sid)."""
    response = client.post(
        "/projects",
        json={"premise": MILK_PREMISE, "style_defaults": {"genre": "comedy", "target_length": "brief"}},
    )
    assert response.status_code == 201, response.text
    pid = response.json()["project"]["id"]
    alice = client.post(
        f"/projects/{pid}/characters",
        json={"name": "Alice", "description": "A determined shopper.", "traits": [{"name": "persistence", "value": 75}], "goals": ["get the milk"]},
    ).json()["character_id"]
    bob = client.post(
        f"/projects/{pid}/characters",
        json={"name": "Bob", "description": "A taciturn man.", "traits": [{"name": "taciturnity", "value": 90}], "goals": ["avoid conflict"]},
    ).json()["character_id"]
    sid = client.post(
        f"/projects/{pid}/scenes",
        json={"title": "Checkout", "initial_situation": MILK_SITUATION, "participants": [alice, bob]},
    ).json()["scene_id"]
    return pid, alice, bob, sid


def test_project_crud_and_listing(tmp_path):
    client, store, _ = make_client(tmp_path)
    pid, *_ = milk_project(client)
    listing = client.get("/projects").json()["projects"]
    assert [row["id"] for row in listing] == [pid]
    doc = client.get(f"/projects/{pid}").json()["project"]
    assert doc["premise"]["text"] == MILK_PREMISE
    assert client.delete(f"/projects/{pid}").status_code == 204
    missing = client.get(f"/projects/{pid}")
    assert missing.status_code == 404
    assert missing.json()["error"]["code"] == "NOT_FOUND"


def test_full_generation_flow_over_http(tmp_path):
    client, store, provider = make_client(
        tmp_path,
        {
            "simulate": [SIMULATED_BEAT],
            "nudge": [NUDGED_BEAT],
            "situation_update": ["Alice stands alone holding the carton.", "Bob holds the carton now."],
            "prose": ["First passage.", "Second passage."],
        },
    )
    pid, alice, bob, sid = milk_project(client)

    sim = client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
    assert sim.status_code == 200, sim.text
    assert sim.json()["draft"]["text"] == SIMULATED_BEAT
    accept = client.post(f"/projects/{pid}/scenes/{sid}/beats:accept", json={})
    assert accept.json()["beat_index"] == 0

    nudge = client.post(
        f"/projects/{pid}/scenes/{sid}/beats:nudge", json={"nudge_text": NUDGE_TEXT}
    )
    assert nudge.json()["draft"]["text"] == NUDGED_BEAT
    assert nudge.json()["draft"]["provenance"] == "nudged"
    client.post(f"/projects/{pid}/scenes/{sid}/beats:accept", json={})

    render = client.post(f"/projects/{pid}/scenes/{sid}:render", json={})
    assert render.json()["segments"] == 2
    export = client.get(f"/projects/{pid}/export?scope=scene&format=plain&scene={sid}")
    assert export.text == "First passage.\n\nSecond passage."

    # Persisted state matches what the API returned.
    instr = store.load(pid)
    assert [b.text for b in instr.get_scene(sid).beats] == [SIMULATED_BEAT, NUDGED_BEAT]


def test_temperature_rejected_at_service_layer(tmp_path):
    client, *_ = make_client(tmp_path, {"simulate": ["x", "y"]})
    pid, alice, bob, sid = milk_project(client)
    response = client.post(
        f"/projects/{pid}/scenes/{sid}/beats:simulate",
        json={"params": {"temperature": 2.5}},
    )
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "TEMPERATURE_OUT_OF_RANGE"
    for boundary in (0.1, 2.0):
        ok = client.post(
            f"/projects/{pid}/scenes/{sid}/beats:simulate",
            json={"params": {"temperature": boundary}},
        )
        assert ok.status_code == 200, ok.text
        client.post(f"/projects/{pid}/scenes/{sid}/beats:reject", json={})


def test_error_codes_surface_in_bodies(tmp_path):
    client, *_ = make_client(tmp_path, {"simulate": ["beat one", "beat two"]})
    pid, alice, bob, sid = milk_project(client)
    client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
    second = client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
    assert second.status_code == 409
    assert second.json()["error"]["code"] == "DRAFT_ALREADY_PENDING"
    unknown = client.post(f"/projects/{pid}/scenes/sc-nope/beats:simulate", json={})
    assert unknown.status_code == 404
    assert unknown.json()["error"]["code"] == "UNKNOWN_SCENE"


def test_accept_with_participant_override(tmp_path):
    client, store, _ = make_client(
        tmp_path, {"simulate": ["The carton hits the floor."], "situation_update": ["Silence."]}
    )
    pid, alice, bob, sid = milk_project(client)
    client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
    accept = client.post(
        f"/projects/{pid}/scenes/{sid}/beats:accept", json={"participants": [bob]}
    )
    assert accept.status_code == 200
    instr = store.load(pid)
    assert instr.get_scene(sid).beats[0].participants == {bob}
    assert len(instr.get_character(bob).memories) == 1
    assert instr.get_character(alice).memories == []


def test_beat_edit_recompute_and_scene_patch(tmp_path):
    client, store, _ = make_client(
        tmp_path,
        {
            "simulate": ["b0.", "b1."],
            "situation_update": ["s0", "s1", "r1", "r2"],
        },
    )
    pid, alice, bob, sid = milk_project(client)
    for _ in range(2):
        client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
        client.post(f"/projects/{pid}/scenes/{sid}/beats:accept", json={})
    edited = client.patch(
        f"/projects/{pid}/scenes/{sid}/beats/0", json={"text": "Bob blinks first."}
    )
    assert edited.status_code == 200
    doc = edited.json()["project"]
    assert [s["stale"] for s in doc["scenes"][0]["situations"]] == [False, True, True]
    recompute = client.post(f"/projects/{pid}/scenes/{sid}:recompute", json={})
    assert recompute.json()["recomputed"] == 2
    patched = client.patch(
        f"/projects/{pid}/scenes/{sid}",
        json={"title": "Checkout redux", "override_situation": {"position": 2, "text": "A standoff."}},
    )
    scene_doc = patched.json()["project"]["scenes"][0]
    assert scene_doc["title"] == "Checkout redux"
    assert scene_doc["situations"][2] == {"text": "A standoff.", "stale": False, "derivation": "manual_override"}


def test_recompute_partial_failure_persists_progress(tmp_path):
    client, store, _ = make_client(
        tmp_path,
        {
            "simulate": ["b0.", "b1."],
            "situation_update": ["s0", "s1", "r1", {"error": "TIMEOUT"}],
        },
    )
    pid, alice, bob, sid = milk_project(client)
    for _ in range(2):
        client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
        client.post(f"/projects/{pid}/scenes/{sid}/beats:accept", json={})
    client.patch(f"/projects/{pid}/scenes/{sid}/beats/0", json={"text": "Redone."})
    response = client.post(f"/projects/{pid}/scenes/{sid}:recompute", json={})
    assert response.status_code == 504
    body = response.json()["error"]
    assert body["code"] == "TIMEOUT"
    assert body["details"]["recomputed"] == 1
    instr = store.load(pid)  # partial progress persisted
    assert instr.get_scene(sid).situations[1].text == "r1"
    assert instr.get_scene(sid).situations[2].stale


def test_segment_endpoints(tmp_path):
    client, *_ = make_client(
        tmp_path,
        {
            "simulate": ["b0.", "b1."],
            "situation_update": ["s0", "s1"],
            "prose": ["p0", "p1"],
            "prose_segment": ["p1-redux"],
        },
    )
    pid, alice, bob, sid = milk_project(client)
    for _ in range(2):
        client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})
        client.post(f"/projects/{pid}/scenes/{sid}/beats:accept", json={})
    client.post(f"/projects/{pid}/scenes/{sid}:render", json={})
    regen = client.post(
        f"/projects/{pid}/scenes/{sid}/segments/1:regenerate",
        json={"style": {"intensity": "vivid"}},
    )
    segments = regen.json()["project"]["scenes"][0]["prose"]["segments"]
    assert segments[1]["text"] == "p1-redux"
    assert segments[0]["text"] == "p0"
    edited = client.patch(
        f"/projects/{pid}/scenes/{sid}/segments/0", json={"text": "hand-polished opening"}
    )
    segments = edited.json()["project"]["scenes"][0]["prose"]["segments"]
    assert segments[0] == {
        "beat_index": 0,
        "text": "hand-polished opening",
        "origin": "manually_edited",
        "stale": False,
        "style": None,
    }


def collect_events(client, request_id) -> list[dict]:
    events = []
    with client.stream("GET", f"/generations/{request_id}/events") as response:
        assert response.status_code == 200
        for line in response.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: "):]))
    return events


def test_event_stream_replays_for_late_subscribers(tmp_path):
    client, *_ = make_client(
        tmp_path, {"simulate": [SIMULATED_BEAT], "situation_update": ["after"]}
    )
    pid, alice, bob, sid = milk_project(client)
    rid = "gen-test-replay"
    client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={"request_id": rid})
    events = collect_events(client, rid)
    phases = [e["phase"] for e in events]
    assert phases == ["queued", "prompting", "awaiting_provider", "parsing", "done"]
    assert events[-1]["payload"]["draft"]["text"] == SIMULATED_BEAT
    # Replay is stable for an even later subscriber.
    assert [e["phase"] for e in collect_events(client, rid)] == phases


def test_event_stream_failure_carries_error_code(tmp_path):
    client, *_ = make_client(tmp_path, {"simulate": [{"error": "RATE_LIMITED"}]})
    pid, alice, bob, sid = milk_project(client)
    rid = "gen-test-fail"
    response = client.post(
        f"/projects/{pid}/scenes/{sid}/beats:simulate", json={"request_id": rid}
    )
    assert response.status_code == 429
    events = collect_events(client, rid)
    assert events[-1]["phase"] == "failed"
    assert events[-1]["payload"]["code"] == "RATE_LIMITED"


def test_event_stream_unknown_request(tmp_path):
    client, *_ = make_client(tmp_path)
    response = client.get("/generations/gen-nope/events")
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "UNKNOWN_REQUEST"


class SlowProvider:
    """Scripted responses with a fixed artificial latency."""

    name = "slow"

    def __init__(self, delay: float, script: dict):
        self._delay = delay
        self._script = ScriptedProvider(ScriptedResponses.from_dict(script))

    def complete(self, bundle, cancel=None):
        time.sleep(self._delay)
        return self._script.complete(bundle)


def test_concurrent_accepts_on_one_project_serialize(tmp_path):
    client, store, _ = make_client(
        tmp_path,
        {
            "simulate": ["b-first.", "b-second."],
            "situation_update": ["after-first", "after-second"],
        },
    )
    pid, alice, bob, sid1 = milk_project(client)
    sid2 = client.post(
        f"/projects/{pid}/scenes",
        json={"title": "Aisle two", "initial_situation": "A second front opens.", "participants": [alice]},
    ).json()["scene_id"]

    client.post(f"/projects/{pid}/scenes/{sid1}/beats:simulate", json={})
    client.post(f"/projects/{pid}/scenes/{sid2}/beats:simulate", json={})

    results = {}

    def accept(sid, key):
        results[key] = client.post(f"/projects/{pid}/scenes/{sid}/beats:accept", json={})

    threads = [
        threading.Thread(target=accept, args=(sid1, "a")),
        threading.Thread(target=accept, args=(sid2, "b")),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results["a"].status_code == 200 and results["b"].status_code == 200
    instr = store.load(pid)
    total = sum(len(s.beats) for s in instr.scenes)
    assert total == 2
    for scene in instr.scenes:
        assert len(scene.situations) == len(scene.beats) + 1


def test_cross_project_mutations_do_not_block_each_other(tmp_path):
    delay = 0.15
    provider = SlowProvider(
        delay,
        {
            "simulate": ["b."] * 4,
            "situation_update": ["s."] * 4,
        },
    )
    client, store, _ = make_client(tmp_path, provider=provider)
    pid1, *_ , sid1 = milk_project(client)
    pid2, *_ , sid2 = milk_project(client)

    started = time.monotonic()

    def drive(pid, sid):
        client.post(f"/projects/{pid}/scenes/{sid}/beats:simulate", json={})

    threads = [
        threading.Thread(target=drive, args=(pid1, sid1)),
        threading.Thread(target=drive, args=(pid2, sid2)),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.monotonic() - started
    assert elapsed < 2 * delay * 0.95 + 0.25  # parallel, not serialized


def test_invalid_body_types_rejected(tmp_path):
    client, *_ = make_client(tmp_path)
    response = client.post("/projects", json={"premise": 42})
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "INVALID_PARAMS"
