"""HTTP API over the store and engine, with streamed generation progress.

Mutations are serialized per project id (single-writer queue); reads and
other projects proceed concurrently. Provider calls across requests share a
concurrency cap (default 4). Every mutation re-validates the instrument and
refuses to persist an invalid state.

Generation-backed endpoints accept an optional client-supplied request_id
and record GenerationEvents (queued -> prompting -> awaiting_provider ->
parsing -> done|failed) that GET /generations/{id}/events replays as
server-sent events, including for late subscribers. Bodies and the error
code table are documented bit-exact in API.md.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from fastapi import Body, FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, Response, StreamingResponse

from . import engine, prose
from .errors import InvalidParams, InvariantViolation, StoryError, UnknownRequest
from .fileformat import draft_to_doc, instrument_to_doc
from .model import (
    GenParams,
    StoryInstrument,
    StyleParams,
    TraitScale,
    create_instrument,
    add_character,
    add_scene,
    update_character,
    update_scene_title,
    validate_instrument,
)
from .provider import HttpProvider, ProviderConfig, ScriptedProvider, ScriptedResponses
from .store import ProjectStore

logger = logging.getLogger(__name__)

EVENT_RETENTION = 256
TERMINAL_PHASES = ("done", "failed")


class GenerationLog:
    """Ordered event history per generation request, with replay + follow."""

    def __init__(self, retention: int = EVENT_RETENTION):
        self._events: OrderedDict[str, list[dict]] = OrderedDict()
        self._terminal: set[str] = set()
        self._cond = threading.Condition()
        self._retention = retention

    def open(self, request_id: str) -> None:
        with self._cond:
            self._events[request_id] = []
            while len(self._events) > self._retention:
                old, _ = self._events.popitem(last=False)
                self._terminal.discard(old)

    def emit(self, request_id: str, phase: str, payload: dict | None = None) -> None:
        with self._cond:
            if request_id not in self._events:
                return
            if request_id in self._terminal:
                return  # terminal phase is emitted exactly once
            self._events[request_id].append(
                {"request_id": request_id, "phase": phase, "payload": payload}
            )
            if phase in TERMINAL_PHASES:
                self._terminal.add(request_id)
            self._cond.notify_all()

    def exists(self, request_id: str) -> bool:
        with self._cond:
            return request_id in self._events

    def subscribe(self, request_id: str) -> Iterator[dict]:
        """Replay past events, then follow until the terminal one."""
        if not self.exists(request_id):
            raise UnknownRequest(f"no generation {request_id!r}", request_id=request_id)
        cursor = 0
        while True:
            with self._cond:
                events = self._events.get(request_id, [])
                fresh = events[cursor:]
                cursor = len(events)
                finished = request_id in self._terminal
                if not fresh and not finished:
                    self._cond.wait(timeout=0.5)
                    continue
            for event in fresh:
                yield event
            if finished and cursor >= len(events):
                return


class ThrottledProvider:
    """Caps concurrent provider calls across all requests."""

    def __init__(self, inner, cap: int):
        self._inner = inner
        self._sem = threading.Semaphore(cap)
        self.name = getattr(inner, "name", "provider")

    def complete(self, bundle, cancel=None):
        with self._sem:
            return self._inner.complete(bundle)


class _PhaseProvider:
    """Emits awaiting_provider/parsing around each completion call."""

    def __init__(self, inner, emit: Callable[[str, dict | None], None]):
        self._inner = inner
        self._emit = emit

    def complete(self, bundle, cancel=None):
        self._emit("awaiting_provider", {"kind": bundle.kind})
        result = self._inner.complete(bundle)
        self._emit("parsing", {"kind": bundle.kind})
        return result


def _gen_params(raw: object) -> GenParams:
    if raw is None:
        return GenParams()
    if not isinstance(raw, dict):
        raise InvalidParams("params must be an object")
    params = GenParams()
    if "temperature" in raw:
        value = raw["temperature"]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise InvalidParams("temperature must be a number")
        params.temperature = float(value)
    if "adherence" in raw:
        if not isinstance(raw["adherence"], str):
            raise InvalidParams("adherence must be a string")
        params.adherence = raw["adherence"]
    if "context_budget" in raw:
        if not isinstance(raw["context_budget"], int) or isinstance(raw["context_budget"], bool):
            raise InvalidParams("context_budget must be an integer")
        params.context_budget = raw["context_budget"]
    return params


def _style_params(raw: object, defaults: StyleParams) -> StyleParams:
    if raw is None:
        return StyleParams(
            genre=defaults.genre,
            style=defaults.style,
            intensity=defaults.intensity,
            target_length=defaults.target_length,
        )
    if not isinstance(raw, dict):
        raise InvalidParams("style must be an object")
    style = _style_params(None, defaults)
    for key in ("genre", "style", "intensity", "target_length"):
        if key in raw:
            if not isinstance(raw[key], str):
                raise InvalidParams(f"style.{key} must be a string")
            setattr(style, key, raw[key])
    return style


def _traits(raw: object) -> list[TraitScale]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise InvalidParams("traits must be a list")
    traits = []
    for item in raw:
        if not isinstance(item, dict) or not isinstance(item.get("name"), str):
            raise InvalidParams("each trait needs a string name")
        value = item.get("value")
        if not isinstance(value, int) or isinstance(value, bool):
            raise InvalidParams("each trait needs an integer value")
        traits.append(TraitScale(name=item["name"], value=value))
    return traits


def _string_list(raw: object, what: str) -> list[str]:
    if raw is None:
        return []
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise InvalidParams(f"{what} must be a list of strings")
    return list(raw)


def _require_str(body: dict, key: str) -> str:
    value = body.get(key)
    if not isinstance(value, str):
        raise InvalidParams(f"field {key!r} must be a string")
    return value


def create_app(
    store: ProjectStore,
    provider,
    *,
    provider_cap: int = 4,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="storydig", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    shared_provider = ThrottledProvider(provider, provider_cap)
    events = GenerationLog()
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    app.state.store = store
    app.state.provider = shared_provider
    app.state.events = events

    def project_lock(project_id: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(project_id, threading.Lock())

    def mutate(project_id: str, fn: Callable[[StoryInstrument], dict]) -> dict:
        """Load -> mutate -> re-validate -> atomically save, single-writer."""
        with project_lock(project_id):
            instr = store.load(project_id)
            extra = fn(instr)
            report = validate_instrument(instr)
            if not report.ok:
                raise InvariantViolation(report, "mutation produced an invalid instrument")
            store.save(instr)
            return {**extra, "project": instrument_to_doc(instr)}

    def generation(project_id: str, body: dict, fn: Callable[[StoryInstrument, object, Callable], dict]) -> dict:
        """Like mutate(), with event emission around the engine call.

        Partial-progress errors (recompute) still persist the instrument
        before the failure surfaces.
        """
        request_id = body.get("request_id") or f"gen-{uuid.uuid4().hex[:12]}"
        if not isinstance(request_id, str):
            raise InvalidParams("request_id must be a string")
        events.open(request_id)
        events.emit(request_id, "queued")
        emit = lambda phase, payload=None: events.emit(request_id, phase, payload)
        provider_proxy = _PhaseProvider(shared_provider, emit)
        try:
            with project_lock(project_id):
                instr = store.load(project_id)
                events.emit(request_id, "prompting")
                try:
                    extra = fn(instr, provider_proxy, emit)
                except StoryError as exc:
                    if exc.details.get("recomputed"):
                        report = validate_instrument(instr)
                        if report.ok:
                            store.save(instr)
                    raise
                report = validate_instrument(instr)
                if not report.ok:
                    raise InvariantViolation(report, "mutation produced an invalid instrument")
                store.save(instr)
        except StoryError as exc:
            events.emit(request_id, "failed", {"code": exc.code, "message": str(exc)})
            raise
        result = {"request_id": request_id, **extra, "project": instrument_to_doc(instr)}
        events.emit(request_id, "done", extra.get("_event_payload", extra))
        result.pop("_event_payload", None)
        return result

    @app.exception_handler(StoryError)
    def story_error_handler(_request, exc: StoryError):
        payload = {"error": {"code": exc.code, "message": str(exc), "details": exc.details}}
        if isinstance(exc, InvariantViolation):
            payload["error"]["findings"] = exc.report.to_records()
        return JSONResponse(status_code=exc.http_status, content=payload)

    # ── projects ─────────────────────────────────────────────────────────

    @app.post("/projects", status_code=201)
    def create_project(body: dict = Body(...)):
        premise = _require_str(body, "premise")
        logline = body.get("logline")
        if logline is not None and not isinstance(logline, str):
            raise InvalidParams("logline must be a string")
        style = _style_params(body.get("style_defaults"), StyleParams())
        instr = create_instrument(premise, style, logline)
        store.save(instr)
        return {"project": instrument_to_doc(instr)}

    @app.get("/projects")
    def list_projects():
        return {"projects": store.list()}

    @app.get("/projects/{project_id}")
    def get_project(project_id: str):
        return {"project": instrument_to_doc(store.load(project_id))}

    @app.delete("/projects/{project_id}", status_code=204)
    def delete_project(project_id: str):
        with project_lock(project_id):
            store.delete(project_id)
        return Response(status_code=204)

    # ── characters ───────────────────────────────────────────────────────

    @app.post("/projects/{project_id}/characters", status_code=201)
    def create_character(project_id: str, body: dict = Body(...)):
        def fn(instr):
            cid = add_character(
                instr,
                _require_str(body, "name"),
                body.get("description", "") if isinstance(body.get("description", ""), str) else "",
                _traits(body.get("traits")),
                _string_list(body.get("goals"), "goals"),
            )
            return {"character_id": cid}

        return mutate(project_id, fn)

    @app.patch("/projects/{project_id}/characters/{character_id}")
    def patch_character(project_id: str, character_id: str, body: dict = Body(...)):
        def fn(instr):
            update_character(
                instr,
                character_id,
                name=body.get("name"),
                description=body.get("description"),
                traits=_traits(body["traits"]) if "traits" in body else None,
                goals=_string_list(body["goals"], "goals") if "goals" in body else None,
            )
            return {}

        return mutate(project_id, fn)

    # ── scenes ───────────────────────────────────────────────────────────

    @app.post("/projects/{project_id}/scenes", status_code=201)
    def create_scene(project_id: str, body: dict = Body(...)):
        def fn(instr):
            sid = add_scene(
                instr,
                _require_str(body, "title"),
                _require_str(body, "initial_situation"),
                set(_string_list(body.get("participants"), "participants")),
            )
            return {"scene_id": sid}

        return mutate(project_id, fn)

    @app.patch("/projects/{project_id}/scenes/{scene_id}")
    def patch_scene(project_id: str, scene_id: str, body: dict = Body(...)):
        def fn(instr):
            if "title" in body:
                update_scene_title(instr, scene_id, _require_str(body, "title"))
            override = body.get("override_situation")
            if override is not None:
                if not isinstance(override, dict) or not isinstance(override.get("position"), int):
                    raise InvalidParams("override_situation needs integer position and text")
                engine.override_situation(
                    instr, scene_id, override["position"], _require_str(override, "text")
                )
            return {}

        return mutate(project_id, fn)

    # ── beats ────────────────────────────────────────────────────────────

    @app.post("/projects/{project_id}/scenes/{scene_id}/beats:simulate")
    def simulate_beat(project_id: str, scene_id: str, body: dict = Body(default={})):
        def fn(instr, provider_proxy, emit):
            draft = engine.simulate_next_beat(instr, scene_id, _gen_params(body.get("params")), provider_proxy)
            doc = draft_to_doc(draft)
            return {"draft": doc, "_event_payload": {"draft": doc}}

        return generation(project_id, body, fn)

    @app.post("/projects/{project_id}/scenes/{scene_id}/beats:nudge")
    def nudge_beat(project_id: str, scene_id: str, body: dict = Body(...)):
        def fn(instr, provider_proxy, emit):
            draft = engine.nudge_next_beat(
                instr,
                scene_id,
                _require_str(body, "nudge_text"),
                _gen_params(body.get("params")),
                provider_proxy,
            )
            doc = draft_to_doc(draft)
            return {"draft": doc, "_event_payload": {"draft": doc}}

        return generation(project_id, body, fn)

    @app.post("/projects/{project_id}/scenes/{scene_id}/beats:author")
    def author_beat(project_id: str, scene_id: str, body: dict = Body(...)):
        def fn(instr, provider_proxy, emit):
            draft = engine.author_beat(
                instr,
                scene_id,
                _require_str(body, "text"),
                polish=bool(body.get("polish", False)),
                params=_gen_params(body.get("params")),
                provider=provider_proxy,
            )
            doc = draft_to_doc(draft)
            return {"draft": doc, "_event_payload": {"draft": doc}}

        return generation(project_id, body, fn)

    @app.post("/projects/{project_id}/scenes/{scene_id}/beats:accept")
    def accept_beat(project_id: str, scene_id: str, body: dict = Body(default={})):
        def fn(instr, provider_proxy, emit):
            scene = instr.get_scene(scene_id)
            override = body.get("participants")
            if override is not None and scene.draft is not None:
                participants = set(_string_list(override, "participants"))
                for cid in sorted(participants):
                    if cid not in scene.participants:
                        raise InvalidParams(f"participant {cid!r} not in scene")
                if not participants:
                    raise InvalidParams("participants override must be nonempty")
                scene.draft.proposed_participants = participants
            index = engine.accept_beat(instr, scene_id, scene.draft, provider_proxy)
            payload = {"beat_index": index, "situation": scene.situations[-1].text}
            return {"beat_index": index, "_event_payload": payload}

        return generation(project_id, body, fn)

    @app.post("/projects/{project_id}/scenes/{scene_id}/beats:reject")
    def reject_beat(project_id: str, scene_id: str):
        def fn(instr):
            engine.reject_beat(instr, scene_id)
            return {}

        return mutate(project_id, fn)

    @app.patch("/projects/{project_id}/scenes/{scene_id}/beats/{beat_index}")
    def edit_beat(project_id: str, scene_id: str, beat_index: int, body: dict = Body(...)):
        def fn(instr):
            engine.edit_beat(instr, scene_id, beat_index, _require_str(body, "text"))
            return {}

        return mutate(project_id, fn)

    @app.post("/projects/{project_id}/scenes/{scene_id}:recompute")
    def recompute(project_id: str, scene_id: str, body: dict = Body(default={})):
        def fn(instr, provider_proxy, emit):
            count = engine.recompute_chain(instr, scene_id, provider_proxy)
            return {"recomputed": count, "_event_payload": {"recomputed": count}}

        return generation(project_id, body, fn)

    # ── prose ────────────────────────────────────────────────────────────

    @app.post("/projects/{project_id}/scenes/{scene_id}:render")
    def render(project_id: str, scene_id: str, body: dict = Body(default={})):
        def fn(instr, provider_proxy, emit):
            style = _style_params(body.get("style"), instr.style_defaults)
            document = prose.render_scene(
                instr, scene_id, style, provider_proxy, params=_gen_params(body.get("params"))
            )
            payload = {"segments": len(document.segments)}
            return {"segments": len(document.segments), "_event_payload": payload}

        return generation(project_id, body, fn)

    @app.post("/projects/{project_id}/scenes/{scene_id}/segments/{beat_index}:regenerate")
    def regenerate_segment(project_id: str, scene_id: str, beat_index: int, body: dict = Body(default={})):
        def fn(instr, provider_proxy, emit):
            style = _style_params(body.get("style"), instr.style_defaults)
            continuity = body.get("continuity", "loose")
            if not isinstance(continuity, str):
                raise InvalidParams("continuity must be a string")
            prose.regenerate_segment(
                instr,
                scene_id,
                beat_index,
                style,
                provider_proxy,
                continuity=continuity,
                params=_gen_params(body.get("params")),
            )
            return {"beat_index": beat_index, "_event_payload": {"beat_index": beat_index}}

        return generation(project_id, body, fn)

    @app.patch("/projects/{project_id}/scenes/{scene_id}/segments/{beat_index}")
    def edit_segment(project_id: str, scene_id: str, beat_index: int, body: dict = Body(...)):
        def fn(instr):
            prose.edit_segment(instr, scene_id, beat_index, _require_str(body, "text"))
            return {}

        return mutate(project_id, fn)

    @app.get("/projects/{project_id}/export")
    def export(project_id: str, scope: str = "whole_story", format: str = "plain", scene: str | None = None):
        instr = store.load(project_id)
        text = prose.export_document(instr, scope=scope, format=format, scene_id=scene)
        media = "text/markdown" if format == "markdown" else "text/plain"
        return PlainTextResponse(text, media_type=f"{media}; charset=utf-8")

    # ── generation events ────────────────────────────────────────────────

    @app.get("/generations/{request_id}/events")
    def stream_events(request_id: str):
        if not events.exists(request_id):
            raise UnknownRequest(f"no generation {request_id!r}", request_id=request_id)

        def frames():
            for event in events.subscribe(request_id):
                yield f"event: {event['phase']}\ndata: {json.dumps(event, ensure_ascii=False)}\n\n"

        return StreamingResponse(frames(), media_type="text/event-stream")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


@dataclass
class ServiceConfig:
    data_dir: str = "./projects"
    host: str = "127.0.0.1"
    port: int = 8765
    provider_cap: int = 4
    scripted_path: str | None = None
    ui_dir: str | None = None


def build_provider(config: ServiceConfig):
    if config.scripted_path:
        return ScriptedProvider(ScriptedResponses.from_file(config.scripted_path))
    return HttpProvider(ProviderConfig.from_env())


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted; startup errors exit nonzero."""
    import uvicorn

    app = create_app(
        ProjectStore(config.data_dir),
        build_provider(config),
        provider_cap=config.provider_cap,
        ui_dir=config.ui_dir,
    )
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
