"""Command-line driver for the whole pipeline.

Runs against a local store directly, or against a running service when
--server is given; both paths execute the same operations, so the resulting
project files are identical. --scripted FILE swaps in the deterministic
scripted provider everywhere, which makes full offline runs reproducible;
consumption across invocations is tracked in a `<file>.cursor` sidecar.

Exit codes: 0 success, 1 engine/provider error (stable code printed),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import engine, prose
from .errors import InvalidParams, InvariantViolation, MalformedDocument, NotFound, StoryError
from .fileformat import deserialize, draft_to_doc, instrument_to_doc
from .model import (
    GenParams,
    StoryInstrument,
    StyleParams,
    TraitScale,
    add_character,
    add_scene,
    create_instrument,
    update_character,
    update_scene_title,
    validate_instrument,
)
from .prompts import (
    build_nudge_prompt,
    build_polish_prompt,
    build_prose_prompt,
    build_simulation_prompt,
    build_situation_update_prompt,
)
from .provider import HttpProvider, ProviderConfig, ScriptedProvider, ScriptedResponses
from .store import ProjectStore

INTENSITY_CHOICES = ("restrained", "moderate", "vivid")
LENGTH_CHOICES = ("brief", "standard", "expansive")
ADHERENCE_CHOICES = ("loose", "moderate", "strict")


class _CursorScriptedProvider(ScriptedProvider):
    """Scripted provider whose consumption survives across CLI invocations.

    Offsets per kind live in `<script>.cursor`; each run skips what earlier
    runs consumed and records its own consumption on exit.
    """

    def __init__(self, script_path: str):
        self._path = Path(script_path)
        self._cursor_path = Path(str(script_path) + ".cursor")
        script = ScriptedResponses.from_file(self._path)
        self._offsets: dict[str, int] = {}
        if self._cursor_path.exists():
            self._offsets = json.loads(self._cursor_path.read_text(encoding="utf-8"))
        for kind, offset in self._offsets.items():
            queue = script.queues.get(kind)
            for _ in range(min(offset, len(queue) if queue else 0)):
                queue.popleft()
        super().__init__(script)

    def save_cursor(self) -> None:
        counts: dict[str, int] = dict(self._offsets)
        for kind, _bundle in self.script.consumed:
            counts[kind] = counts.get(kind, 0) + 1
        self._cursor_path.write_text(json.dumps(counts, sort_keys=True), encoding="utf-8")


class Context:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.json = args.json
        self.server = args.server
        self.data_dir = args.data_dir or os.environ.get("TOMB_DATA_DIR", "./projects")
        self._store: ProjectStore | None = None
        self._provider = None

    @property
    def store(self) -> ProjectStore:
        if self._store is None:
            self._store = ProjectStore(self.data_dir)
        return self._store

    @property
    def provider(self):
        if self._provider is None:
            if self.args.scripted:
                self._provider = _CursorScriptedProvider(self.args.scripted)
            else:
                self._provider = HttpProvider(ProviderConfig.from_env())
        return self._provider

    def finish(self) -> None:
        if isinstance(self._provider, _CursorScriptedProvider):
            self._provider.save_cursor()

    def gen_params(self) -> GenParams:
        return GenParams(
            temperature=self.args.temperature,
            adherence=self.args.adherence,
            context_budget=self.args.context_budget,
        )

    def emit(self, payload: dict, human: str) -> None:
        if self.json:
            print(json.dumps(payload, ensure_ascii=False))
        else:
            print(human)

    # ── local helpers ────────────────────────────────────────────────────

    def load(self, project_id: str) -> StoryInstrument:
        return self.store.load(project_id)

    def save(self, instr: StoryInstrument) -> None:
        self.store.save(instr)

    # ── remote helpers ───────────────────────────────────────────────────

    def request(self, method: str, path: str, body: dict | None = None, raw: bool = False):
        import requests

        url = self.server.rstrip("/") + path
        response = requests.request(method, url, json=body, timeout=300)
        if response.status_code >= 400:
            try:
                error = response.json()["error"]
            except Exception:
                raise StoryError(f"server returned {response.status_code}") from None
            cls = StoryError
            exc = cls(error.get("message", ""))
            exc.code = error.get("code", "STORY_ERROR")
            exc.details = error.get("details", {})
            raise exc
        if raw:
            return response.text
        return response.json() if response.content else {}


def _resolve_character(instr: StoryInstrument, ref: str) -> str:
    for c in instr.characters:
        if c.id == ref:
            return c.id
    matches = [c.id for c in instr.characters if c.name == ref]
    if len(matches) == 1:
        return matches[0]
    if len(matches) > 1:
        raise InvalidParams(f"character name {ref!r} is ambiguous; use the id")
    raise NotFound(f"no character {ref!r}", reference=ref)


def _resolve_scene(instr: StoryInstrument, ref: str) -> str:
    for s in instr.scenes:
        if s.id == ref:
            return s.id
    if ref.isdigit():
        for s in instr.scenes:
            if s.ordinal == int(ref):
                return s.id
    raise NotFound(f"no scene {ref!r}", reference=ref)


def _parse_traits(pairs: list[str]) -> list[TraitScale]:
    traits = []
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise InvalidParams(f"trait must look like name=value, got {pair!r}")
        try:
            traits.append(TraitScale(name=name, value=int(value)))
        except ValueError:
            raise InvalidParams(f"trait value in {pair!r} is not an integer") from None
    return traits


def _style(args: argparse.Namespace, defaults: StyleParams | None = None) -> StyleParams:
    base = defaults or StyleParams()
    return StyleParams(
        genre=args.genre if args.genre is not None else base.genre,
        style=args.voice if args.voice is not None else base.style,
        intensity=args.intensity if args.intensity is not None else base.intensity,
        target_length=args.target_length if args.target_length is not None else base.target_length,
    )


def _style_body(args: argparse.Namespace) -> dict:
    body = {}
    if args.genre is not None:
        body["genre"] = args.genre
    if args.voice is not None:
        body["style"] = args.voice
    if args.intensity is not None:
        body["intensity"] = args.intensity
    if args.target_length is not None:
        body["target_length"] = args.target_length
    return body


def _params_body(ctx: Context) -> dict:
    return {
        "temperature": ctx.args.temperature,
        "adherence": ctx.args.adherence,
        "context_budget": ctx.args.context_budget,
    }


def _add_style_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--genre")
    parser.add_argument("--voice", help="voice/register description")
    parser.add_argument("--intensity", choices=INTENSITY_CHOICES)
    parser.add_argument("--target-length", choices=LENGTH_CHOICES, dest="target_length")


# ── command handlers ─────────────────────────────────────────────────────

def cmd_new(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body = {"premise": args.premise}
        if args.logline:
            body["logline"] = args.logline
        style = _style_body(args)
        if style:
            body["style_defaults"] = style
        doc = ctx.request("POST", "/projects", body)["project"]
        ctx.emit({"project_id": doc["id"]}, doc["id"])
        return 0
    instr = create_instrument(args.premise, _style(args), args.logline)
    ctx.save(instr)
    ctx.emit({"project_id": instr.id}, instr.id)
    return 0


def cmd_list(ctx: Context) -> int:
    rows = ctx.request("GET", "/projects")["projects"] if ctx.server else ctx.store.list()
    if ctx.json:
        print(json.dumps({"projects": rows}, ensure_ascii=False))
    else:
        for row in rows:
            print(f"{row['id']}  {row['updated_at']}  {row['title']}")
    return 0


def cmd_character_add(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body = {
            "name": args.name,
            "description": args.description or "",
            "traits": [
                {"name": t.name, "value": t.value} for t in _parse_traits(args.trait or [])
            ],
            "goals": args.goal or [],
        }
        result = ctx.request("POST", f"/projects/{args.project}/characters", body)
        ctx.emit({"character_id": result["character_id"]}, result["character_id"])
        return 0
    instr = ctx.load(args.project)
    cid = add_character(
        instr, args.name, args.description or "", _parse_traits(args.trait or []), args.goal or []
    )
    ctx.save(instr)
    ctx.emit({"character_id": cid}, cid)
    return 0


def cmd_character_edit(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body: dict = {}
        if args.name is not None:
            body["name"] = args.name
        if args.description is not None:
            body["description"] = args.description
        if args.trait:
            body["traits"] = [{"name": t.name, "value": t.value} for t in _parse_traits(args.trait)]
        if args.goal:
            body["goals"] = args.goal
        ctx.request("PATCH", f"/projects/{args.project}/characters/{args.character}", body)
        ctx.emit({"ok": True}, "updated")
        return 0
    instr = ctx.load(args.project)
    cid = _resolve_character(instr, args.character)
    update_character(
        instr,
        cid,
        name=args.name,
        description=args.description,
        traits=_parse_traits(args.trait) if args.trait else None,
        goals=args.goal if args.goal else None,
    )
    ctx.save(instr)
    ctx.emit({"ok": True}, "updated")
    return 0


def cmd_scene_add(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        doc = ctx.request("GET", f"/projects/{args.project}")["project"]
        by_name = {c["name"]: c["id"] for c in doc["characters"]}
        ids = {c["id"] for c in doc["characters"]}
        participants = [p if p in ids else by_name.get(p, p) for p in args.participant or []]
        body = {"title": args.title, "initial_situation": args.situation, "participants": participants}
        result = ctx.request("POST", f"/projects/{args.project}/scenes", body)
        ctx.emit({"scene_id": result["scene_id"]}, result["scene_id"])
        return 0
    instr = ctx.load(args.project)
    participants = {_resolve_character(instr, p) for p in args.participant or []}
    sid = add_scene(instr, args.title, args.situation, participants)
    ctx.save(instr)
    ctx.emit({"scene_id": sid}, sid)
    return 0


def cmd_scene_edit(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body = {}
        if args.title is not None:
            body["title"] = args.title
        if args.situation:
            body["override_situation"] = {"position": int(args.situation[0]), "text": args.situation[1]}
        ctx.request("PATCH", f"/projects/{args.project}/scenes/{args.scene}", body)
        ctx.emit({"ok": True}, "updated")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    if args.title is not None:
        update_scene_title(instr, sid, args.title)
    if args.situation:
        try:
            position = int(args.situation[0])
        except ValueError:
            raise InvalidParams("situation position must be an integer") from None
        engine.override_situation(instr, sid, position, args.situation[1])
    ctx.save(instr)
    ctx.emit({"ok": True}, "updated")
    return 0


def _emit_draft(ctx: Context, draft_doc: dict) -> None:
    ctx.emit(
        {"draft": draft_doc},
        f"draft ({draft_doc['provenance']}): {draft_doc['text']}",
    )


def cmd_beat_simulate(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body = {"params": _params_body(ctx)}
        result = ctx.request(
            "POST", f"/projects/{args.project}/scenes/{args.scene}/beats:simulate", body
        )
        _emit_draft(ctx, result["draft"])
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    draft = engine.simulate_next_beat(instr, sid, ctx.gen_params(), ctx.provider)
    ctx.save(instr)
    _emit_draft(ctx, draft_to_doc(draft))
    return 0


def cmd_beat_nudge(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body = {"nudge_text": args.nudge, "params": _params_body(ctx)}
        result = ctx.request(
            "POST", f"/projects/{args.project}/scenes/{args.scene}/beats:nudge", body
        )
        _emit_draft(ctx, result["draft"])
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    draft = engine.nudge_next_beat(instr, sid, args.nudge, ctx.gen_params(), ctx.provider)
    ctx.save(instr)
    _emit_draft(ctx, draft_to_doc(draft))
    return 0


def cmd_beat_author(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body = {"text": args.text, "polish": bool(args.polish), "params": _params_body(ctx)}
        result = ctx.request(
            "POST", f"/projects/{args.project}/scenes/{args.scene}/beats:author", body
        )
        _emit_draft(ctx, result["draft"])
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    draft = engine.author_beat(
        instr,
        sid,
        args.text,
        polish=bool(args.polish),
        params=ctx.gen_params(),
        provider=ctx.provider if args.polish else None,
    )
    ctx.save(instr)
    _emit_draft(ctx, draft_to_doc(draft))
    return 0


def cmd_beat_accept(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body: dict = {}
        if args.participant:
            body["participants"] = args.participant
        result = ctx.request(
            "POST", f"/projects/{args.project}/scenes/{args.scene}/beats:accept", body
        )
        ctx.emit({"beat_index": result["beat_index"]}, f"accepted beat {result['beat_index']}")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    scene = instr.get_scene(sid)
    if args.participant and scene.draft is not None:
        scene.draft.proposed_participants = {
            _resolve_character(instr, p) for p in args.participant
        }
    index = engine.accept_beat(instr, sid, scene.draft, ctx.provider)
    ctx.save(instr)
    ctx.emit({"beat_index": index}, f"accepted beat {index}")
    return 0


def cmd_beat_reject(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        ctx.request("POST", f"/projects/{args.project}/scenes/{args.scene}/beats:reject", {})
        ctx.emit({"ok": True}, "rejected")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    engine.reject_beat(instr, sid)
    ctx.save(instr)
    ctx.emit({"ok": True}, "rejected")
    return 0


def cmd_beat_edit(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        ctx.request(
            "PATCH",
            f"/projects/{args.project}/scenes/{args.scene}/beats/{args.index}",
            {"text": args.text},
        )
        ctx.emit({"ok": True}, "edited")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    engine.edit_beat(instr, sid, args.index, args.text)
    ctx.save(instr)
    ctx.emit({"ok": True}, "edited")
    return 0


def cmd_recompute(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        result = ctx.request("POST", f"/projects/{args.project}/scenes/{args.scene}:recompute", {})
        ctx.emit({"recomputed": result["recomputed"]}, f"recomputed {result['recomputed']}")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    try:
        count = engine.recompute_chain(instr, sid, ctx.provider)
    except StoryError as exc:
        # Partial progress stays saved; the error still surfaces.
        if exc.details.get("recomputed"):
            ctx.save(instr)
        raise
    ctx.save(instr)
    ctx.emit({"recomputed": count}, f"recomputed {count}")
    return 0


def cmd_render(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body: dict = {"params": _params_body(ctx)}
        style = _style_body(args)
        if style:
            body["style"] = style
        result = ctx.request("POST", f"/projects/{args.project}/scenes/{args.scene}:render", body)
        ctx.emit({"segments": result["segments"]}, f"rendered {result['segments']} segments")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    document = prose.render_scene(
        instr, sid, _style(args, instr.style_defaults), ctx.provider, params=ctx.gen_params()
    )
    ctx.save(instr)
    ctx.emit({"segments": len(document.segments)}, f"rendered {len(document.segments)} segments")
    return 0


def cmd_segment_regenerate(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        body: dict = {"continuity": args.continuity, "params": _params_body(ctx)}
        style = _style_body(args)
        if style:
            body["style"] = style
        ctx.request(
            "POST",
            f"/projects/{args.project}/scenes/{args.scene}/segments/{args.index}:regenerate",
            body,
        )
        ctx.emit({"ok": True}, f"regenerated segment {args.index}")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    prose.regenerate_segment(
        instr,
        sid,
        args.index,
        _style(args, instr.style_defaults),
        ctx.provider,
        continuity=args.continuity,
        params=ctx.gen_params(),
    )
    ctx.save(instr)
    ctx.emit({"ok": True}, f"regenerated segment {args.index}")
    return 0


def cmd_segment_edit(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        ctx.request(
            "PATCH",
            f"/projects/{args.project}/scenes/{args.scene}/segments/{args.index}",
            {"text": args.text},
        )
        ctx.emit({"ok": True}, "edited")
        return 0
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene)
    prose.edit_segment(instr, sid, args.index, args.text)
    ctx.save(instr)
    ctx.emit({"ok": True}, "edited")
    return 0


def cmd_export(ctx: Context) -> int:
    args = ctx.args
    if ctx.server:
        path = f"/projects/{args.project}/export?scope={args.scope}&format={args.format}"
        if args.scene:
            path += f"&scene={args.scene}"
        text = ctx.request("GET", path, raw=True)
    else:
        instr = ctx.load(args.project)
        scene_id = _resolve_scene(instr, args.scene) if args.scene else None
        text = prose.export_document(instr, scope=args.scope, format=args.format, scene_id=scene_id)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
        ctx.emit({"written": args.output}, f"wrote {args.output}")
    else:
        print(text)
    return 0


def cmd_validate(ctx: Context) -> int:
    args = ctx.args
    if args.file:
        try:
            instr = deserialize(Path(args.file).read_bytes())
        except InvariantViolation as exc:
            records = exc.report.to_records()
            ctx.emit(
                {"valid": False, "findings": records},
                "\n".join(f"{r['code']}  {r['path']}  {r['message']}" for r in records),
            )
            return 1
        except (MalformedDocument, StoryError) as exc:
            ctx.emit(
                {"valid": False, "error": {"code": exc.code, "message": str(exc), "details": exc.details}},
                f"{exc.code}: {exc}",
            )
            return 1
    else:
        if not args.project:
            raise InvalidParams("validate needs --project or --file")
        instr = ctx.load(args.project)
    report = validate_instrument(instr)
    if report.ok:
        ctx.emit({"valid": True, "findings": []}, "valid")
        return 0
    records = report.to_records()
    ctx.emit(
        {"valid": False, "findings": records},
        "\n".join(f"{r['code']}  {r['path']}  {r['message']}" for r in records),
    )
    return 1


def cmd_prompt_dump(ctx: Context) -> int:
    """Debugging view of any PromptBundle with its manifest."""
    args = ctx.args
    instr = ctx.load(args.project)
    sid = _resolve_scene(instr, args.scene) if args.scene else None
    params = ctx.gen_params()
    if args.kind == "simulate":
        bundle = build_simulation_prompt(instr, sid, params)
    elif args.kind == "nudge":
        if not args.nudge:
            raise InvalidParams("prompt dump --kind nudge needs --nudge")
        bundle = build_nudge_prompt(instr, sid, args.nudge, params)
    elif args.kind == "polish":
        if not args.text:
            raise InvalidParams("prompt dump --kind polish needs --text")
        bundle = build_polish_prompt(args.text, instr.style_defaults, params)
    elif args.kind == "situation_update":
        scene = instr.get_scene(sid)
        if not scene.beats:
            raise InvalidParams("situation_update dump needs at least one beat")
        index = args.index if args.index is not None else len(scene.beats) - 1
        bundle = build_situation_update_prompt(
            scene.situations[index].text, scene.get_beat(index).text, params
        )
    elif args.kind == "prose":
        index = args.index if args.index is not None else 0
        bundle = build_prose_prompt(
            instr, sid, index, instr.style_defaults, params=params
        )
    else:
        raise InvalidParams(f"cannot dump prompts of kind {args.kind!r}")
    payload = {
        "kind": bundle.kind,
        "system_text": bundle.system_text,
        "user_text": bundle.user_text,
        "manifest": [list(pair) for pair in bundle.debug_manifest],
        "dropped_sections": bundle.dropped_sections,
    }
    if ctx.json:
        print(json.dumps(payload, ensure_ascii=False))
    else:
        print(f"== kind: {bundle.kind}")
        print("== system ==")
        print(bundle.system_text)
        print("== user ==")
        print(bundle.user_text)
        print("== manifest ==")
        for name, source in bundle.debug_manifest:
            print(f"{name}  <-  {source}")
    return 0


def cmd_serve(ctx: Context) -> int:
    from .service import ServiceConfig, serve

    args = ctx.args
    config = ServiceConfig(
        data_dir=ctx.data_dir,
        host=args.host,
        port=args.port,
        scripted_path=args.scripted,
        ui_dir=args.ui_dir,
    )
    try:
        serve(config)
    except (OSError, SystemExit) as exc:
        print(f"STARTUP_FAILED: {exc}", file=sys.stderr)
        return 1
    return 0


# ── parser ───────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storydig", description=__doc__)
    parser.add_argument("--data-dir", help="project store root (default: $TOMB_DATA_DIR or ./projects)")
    parser.add_argument("--server", help="run against a service at this base URL instead of a local store")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--scripted", help="scripted provider responses file (offline mode)")
    parser.add_argument("--temperature", type=float, default=0.7)
    parser.add_argument("--adherence", choices=ADHERENCE_CHOICES, default="moderate")
    parser.add_argument("--context-budget", type=int, default=4000, dest="context_budget")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("new", help="create a project from a premise")
    p.add_argument("--premise", required=True)
    p.add_argument("--logline")
    _add_style_flags(p)
    p.set_defaults(handler=cmd_new)

    p = sub.add_parser("list", help="list projects")
    p.set_defaults(handler=cmd_list)

    character = sub.add_parser("character", help="character cards").add_subparsers(
        dest="subcommand", required=True
    )
    p = character.add_parser("add")
    p.add_argument("--project", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--description")
    p.add_argument("--trait", action="append", metavar="NAME=VALUE")
    p.add_argument("--goal", action="append")
    p.set_defaults(handler=cmd_character_add)
    p = character.add_parser("edit")
    p.add_argument("--project", required=True)
    p.add_argument("--character", required=True, help="character id or name")
    p.add_argument("--name")
    p.add_argument("--description")
    p.add_argument("--trait", action="append", metavar="NAME=VALUE", help="replaces all traits")
    p.add_argument("--goal", action="append", help="replaces all goals")
    p.set_defaults(handler=cmd_character_edit)

    scene = sub.add_parser("scene", help="scene cards").add_subparsers(dest="subcommand", required=True)
    p = scene.add_parser("add")
    p.add_argument("--project", required=True)
    p.add_argument("--title", required=True)
    p.add_argument("--situation", required=True, help="initial situation text")
    p.add_argument("--participant", action="append", required=True, help="character id or name")
    p.set_defaults(handler=cmd_scene_add)
    p = scene.add_parser("edit")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--title")
    p.add_argument("--situation", nargs=2, metavar=("POSITION", "TEXT"), help="override a chain situation")
    p.set_defaults(handler=cmd_scene_edit)

    beat = sub.add_parser("beat", help="the excavation loop").add_subparsers(
        dest="subcommand", required=True
    )
    for name, handler in (
        ("simulate", cmd_beat_simulate),
        ("reject", cmd_beat_reject),
    ):
        p = beat.add_parser(name)
        p.add_argument("--project", required=True)
        p.add_argument("--scene", required=True)
        p.set_defaults(handler=handler)
    p = beat.add_parser("nudge")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--nudge", required=True, help="desired outcome text")
    p.set_defaults(handler=cmd_beat_nudge)
    p = beat.add_parser("author")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--polish", action="store_true")
    p.set_defaults(handler=cmd_beat_author)
    p = beat.add_parser("accept")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--participant", action="append", help="override draft participants")
    p.set_defaults(handler=cmd_beat_accept)
    p = beat.add_parser("edit")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(handler=cmd_beat_edit)

    p = sub.add_parser("recompute", help="repair stale situations")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.set_defaults(handler=cmd_recompute)

    p = sub.add_parser("render", help="render a scene's beats as prose")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    _add_style_flags(p)
    p.set_defaults(handler=cmd_render)

    segment = sub.add_parser("segment", help="prose segments").add_subparsers(
        dest="subcommand", required=True
    )
    p = segment.add_parser("regenerate")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--continuity", choices=("loose", "strict"), default="loose")
    _add_style_flags(p)
    p.set_defaults(handler=cmd_segment_regenerate)
    p = segment.add_parser("edit")
    p.add_argument("--project", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(handler=cmd_segment_edit)

    p = sub.add_parser("export", help="export rendered prose")
    p.add_argument("--project", required=True)
    p.add_argument("--scope", choices=("scene", "whole_story"), default="whole_story")
    p.add_argument("--scene")
    p.add_argument("--format", choices=("plain", "markdown"), default="plain")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("validate", help="check instrument invariants")
    p.add_argument("--project")
    p.add_argument("--file")
    p.set_defaults(handler=cmd_validate)

    prompt = sub.add_parser("prompt", help="prompt debugging").add_subparsers(
        dest="subcommand", required=True
    )
    p = prompt.add_parser("dump", help="dump a bundle with its manifest")
    p.add_argument("--project", required=True)
    p.add_argument("--scene")
    p.add_argument("--kind", required=True, choices=("simulate", "nudge", "polish", "situation_update", "prose"))
    p.add_argument("--nudge")
    p.add_argument("--text")
    p.add_argument("--index", type=int)
    p.set_defaults(handler=cmd_prompt_dump)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui-dir", dest="ui_dir", help="serve a built web UI from this directory at /ui")
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    ctx = Context(args)
    try:
        code = args.handler(ctx)
        ctx.finish()
        return code
    except StoryError as exc:
        ctx.finish()
        if ctx.json:
            payload = {"error": {"code": exc.code, "message": str(exc), "details": exc.details}}
            if isinstance(exc, InvariantViolation):
                payload["error"]["findings"] = exc.report.to_records()
            print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)
        else:
            print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
