"""Canonical project file format.

One self-contained UTF-8 JSON document per instrument, newline-terminated,
with a fixed key order (documented in FORMAT.md) so that serialization is
byte-stable: serialize(deserialize(serialize(x))) == serialize(x). Sets
(participant lists) are emitted sorted; nothing else is reordered.

schema_version is the first key and loaders reject documents written by a
newer schema.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import InvariantViolation, MalformedDocument, SchemaVersionTooNew
from .model import (
    SCHEMA_VERSION,
    Beat,
    Character,
    DraftBeat,
    GenParams,
    Memory,
    Premise,
    ProseDocument,
    ProseSegment,
    Scene,
    SituationState,
    StoryInstrument,
    StyleParams,
    TraitScale,
    validate_instrument,
)


def serialize(instr: StoryInstrument) -> bytes:
    """Render the canonical document; requires a valid instrument."""
    report = validate_instrument(instr)
    if not report.ok:
        raise InvariantViolation(report)
    doc = instrument_to_doc(instr)
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def deserialize(data: bytes) -> StoryInstrument:
    """Parse and validate a canonical document."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedDocument(f"not valid UTF-8: {exc}", offset=exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("top-level value must be an object", path="$")

    version = doc.get("schema_version")
    if not isinstance(version, int):
        raise MalformedDocument("schema_version missing or not an integer", path="schema_version")
    if version > SCHEMA_VERSION:
        raise SchemaVersionTooNew(
            f"document schema_version {version} is newer than supported {SCHEMA_VERSION}",
            found=version,
            supported=SCHEMA_VERSION,
        )

    instr = instrument_from_doc(doc)
    report = validate_instrument(instr)
    if not report.ok:
        raise InvariantViolation(report)
    return instr


# ── rendering (fixed key order) ──────────────────────────────────────────

def instrument_to_doc(instr: StoryInstrument) -> dict:
    return {
        "schema_version": instr.schema_version,
        "id": instr.id,
        "created_at": instr.created_at,
        "updated_at": instr.updated_at,
        "premise": {"text": instr.premise.text, "logline": instr.premise.logline},
        "style_defaults": _style_doc(instr.style_defaults),
        "characters": [_character_doc(c) for c in instr.characters],
        "scenes": [_scene_doc(s) for s in instr.scenes],
    }


def _style_doc(s: StyleParams) -> dict:
    return {
        "genre": s.genre,
        "style": s.style,
        "intensity": s.intensity,
        "target_length": s.target_length,
    }


def _gen_params_doc(p: GenParams) -> dict:
    return {
        "temperature": p.temperature,
        "adherence": p.adherence,
        "context_budget": p.context_budget,
    }


def _character_doc(c: Character) -> dict:
    return {
        "id": c.id,
        "name": c.name,
        "description": c.description,
        "traits": [{"name": t.name, "value": t.value} for t in c.traits],
        "goals": list(c.goals),
        "memories": [
            {
                "source_scene": m.source_scene,
                "source_beat_index": m.source_beat_index,
                "text": m.text,
                "stale": m.stale,
                "condensed": m.condensed,
            }
            for m in c.memories
        ],
    }


def _scene_doc(s: Scene) -> dict:
    return {
        "id": s.id,
        "ordinal": s.ordinal,
        "title": s.title,
        "initial_situation": s.initial_situation,
        "participants": sorted(s.participants),
        "beats": [_beat_doc(b) for b in s.beats],
        "situations": [
            {"text": st.text, "stale": st.stale, "derivation": st.derivation}
            for st in s.situations
        ],
        "draft": draft_to_doc(s.draft) if s.draft is not None else None,
        "prose": _prose_doc(s.prose) if s.prose is not None else None,
    }


def _beat_doc(b: Beat) -> dict:
    return {
        "index": b.index,
        "text": b.text,
        "provenance": b.provenance,
        "nudge_text": b.nudge_text,
        "participants": sorted(b.participants),
        "generation_params": _gen_params_doc(b.generation_params)
        if b.generation_params is not None
        else None,
        "stale_downstream": b.stale_downstream,
        "edit_history": [dict(e) for e in b.edit_history],
    }


def draft_to_doc(d: DraftBeat) -> dict:
    return {
        "text": d.text,
        "provenance": d.provenance,
        "nudge_text": d.nudge_text,
        "proposed_participants": sorted(d.proposed_participants),
        "params": _gen_params_doc(d.params),
        "authored_text": d.authored_text,
        "source_bundle_manifest": [list(pair) for pair in d.source_bundle_manifest],
    }


def _prose_doc(p: ProseDocument) -> dict:
    return {
        "scene_id": p.scene_id,
        "style": _style_doc(p.style),
        "rendered_at": p.rendered_at,
        "segments": [
            {
                "beat_index": seg.beat_index,
                "text": seg.text,
                "origin": seg.origin,
                "stale": seg.stale,
                "style": _style_doc(seg.style) if seg.style is not None else None,
            }
            for seg in p.segments
        ],
    }


# ── parsing ──────────────────────────────────────────────────────────────

def _expect(doc: dict, key: str, types: type | tuple, path: str, optional: bool = False) -> Any:
    value = doc.get(key)
    if value is None and optional:
        return None
    if not isinstance(value, types):
        raise MalformedDocument(
            f"field {key!r} missing or wrong type", path=f"{path}.{key}" if path else key
        )
    return value


def instrument_from_doc(doc: dict) -> StoryInstrument:
    premise_doc = _expect(doc, "premise", dict, "")
    logline = premise_doc.get("logline")
    if logline is not None and not isinstance(logline, str):
        raise MalformedDocument("logline must be a string or null", path="premise.logline")
    characters_doc = _expect(doc, "characters", list, "")
    scenes_doc = _expect(doc, "scenes", list, "")
    return StoryInstrument(
        id=_expect(doc, "id", str, ""),
        schema_version=_expect(doc, "schema_version", int, ""),
        premise=Premise(text=_expect(premise_doc, "text", str, "premise"), logline=logline),
        style_defaults=_style_from(_expect(doc, "style_defaults", dict, ""), "style_defaults"),
        created_at=_expect(doc, "created_at", str, ""),
        updated_at=_expect(doc, "updated_at", str, ""),
        characters=[
            _character_from(c, f"characters[{i}]") for i, c in enumerate(characters_doc)
        ],
        scenes=[_scene_from(s, f"scenes[{i}]") for i, s in enumerate(scenes_doc)],
    )


def _style_from(doc: Any, path: str) -> StyleParams:
    if not isinstance(doc, dict):
        raise MalformedDocument("style params must be an object", path=path)
    return StyleParams(
        genre=_expect(doc, "genre", str, path),
        style=_expect(doc, "style", str, path),
        intensity=_expect(doc, "intensity", str, path),
        target_length=_expect(doc, "target_length", str, path),
    )


def _gen_params_from(doc: Any, path: str) -> GenParams:
    if not isinstance(doc, dict):
        raise MalformedDocument("generation params must be an object", path=path)
    temperature = doc.get("temperature")
    if not isinstance(temperature, (int, float)) or isinstance(temperature, bool):
        raise MalformedDocument("temperature missing or not a number", path=f"{path}.temperature")
    return GenParams(
        temperature=float(temperature) if isinstance(temperature, int) else temperature,
        adherence=_expect(doc, "adherence", str, path),
        context_budget=_expect(doc, "context_budget", int, path),
    )


def _character_from(doc: Any, path: str) -> Character:
    if not isinstance(doc, dict):
        raise MalformedDocument("character must be an object", path=path)
    traits_doc = _expect(doc, "traits", list, path)
    goals_doc = _expect(doc, "goals", list, path)
    memories_doc = _expect(doc, "memories", list, path)
    traits = []
    for i, t in enumerate(traits_doc):
        if not isinstance(t, dict):
            raise MalformedDocument("trait must be an object", path=f"{path}.traits[{i}]")
        traits.append(
            TraitScale(
                name=_expect(t, "name", str, f"{path}.traits[{i}]"),
                value=_expect(t, "value", int, f"{path}.traits[{i}]"),
            )
        )
    memories = []
    for i, m in enumerate(memories_doc):
        if not isinstance(m, dict):
            raise MalformedDocument("memory must be an object", path=f"{path}.memories[{i}]")
        mpath = f"{path}.memories[{i}]"
        memories.append(
            Memory(
                source_scene=_expect(m, "source_scene", str, mpath),
                source_beat_index=_expect(m, "source_beat_index", int, mpath),
                text=_expect(m, "text", str, mpath),
                stale=bool(_expect(m, "stale", bool, mpath)),
                condensed=bool(_expect(m, "condensed", bool, mpath)),
            )
        )
    if not all(isinstance(g, str) for g in goals_doc):
        raise MalformedDocument("goals must be strings", path=f"{path}.goals")
    return Character(
        id=_expect(doc, "id", str, path),
        name=_expect(doc, "name", str, path),
        description=_expect(doc, "description", str, path),
        traits=traits,
        goals=list(goals_doc),
        memories=memories,
    )


def _participants_from(doc: dict, key: str, path: str) -> set[str]:
    raw = _expect(doc, key, list, path)
    if not all(isinstance(p, str) for p in raw):
        raise MalformedDocument("participants must be strings", path=f"{path}.{key}")
    return set(raw)


def _beat_from(doc: Any, path: str) -> Beat:
    if not isinstance(doc, dict):
        raise MalformedDocument("beat must be an object", path=path)
    nudge = doc.get("nudge_text")
    if nudge is not None and not isinstance(nudge, str):
        raise MalformedDocument("nudge_text must be a string or null", path=f"{path}.nudge_text")
    gen_doc = doc.get("generation_params")
    history = _expect(doc, "edit_history", list, path)
    if not all(isinstance(e, dict) for e in history):
        raise MalformedDocument("edit_history entries must be objects", path=f"{path}.edit_history")
    return Beat(
        index=_expect(doc, "index", int, path),
        text=_expect(doc, "text", str, path),
        provenance=_expect(doc, "provenance", str, path),
        nudge_text=nudge,
        participants=_participants_from(doc, "participants", path),
        generation_params=_gen_params_from(gen_doc, f"{path}.generation_params")
        if gen_doc is not None
        else None,
        stale_downstream=bool(_expect(doc, "stale_downstream", bool, path)),
        edit_history=[dict(e) for e in history],
    )


def _draft_from(doc: Any, path: str) -> DraftBeat:
    if not isinstance(doc, dict):
        raise MalformedDocument("draft must be an object", path=path)
    nudge = doc.get("nudge_text")
    if nudge is not None and not isinstance(nudge, str):
        raise MalformedDocument("nudge_text must be a string or null", path=f"{path}.nudge_text")
    authored = doc.get("authored_text")
    if authored is not None and not isinstance(authored, str):
        raise MalformedDocument("authored_text must be a string or null", path=f"{path}.authored_text")
    manifest_doc = _expect(doc, "source_bundle_manifest", list, path)
    manifest: list[tuple[str, str]] = []
    for i, pair in enumerate(manifest_doc):
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
            raise MalformedDocument(
                "manifest entries must be [name, source] string pairs",
                path=f"{path}.source_bundle_manifest[{i}]",
            )
        manifest.append((pair[0], pair[1]))
    return DraftBeat(
        text=_expect(doc, "text", str, path),
        provenance=_expect(doc, "provenance", str, path),
        nudge_text=nudge,
        proposed_participants=_participants_from(doc, "proposed_participants", path),
        params=_gen_params_from(_expect(doc, "params", dict, path), f"{path}.params"),
        authored_text=authored,
        source_bundle_manifest=manifest,
    )


def _prose_from(doc: Any, path: str) -> ProseDocument:
    if not isinstance(doc, dict):
        raise MalformedDocument("prose document must be an object", path=path)
    segments_doc = _expect(doc, "segments", list, path)
    segments = []
    for i, seg in enumerate(segments_doc):
        if not isinstance(seg, dict):
            raise MalformedDocument("segment must be an object", path=f"{path}.segments[{i}]")
        spath = f"{path}.segments[{i}]"
        style_doc = seg.get("style")
        segments.append(
            ProseSegment(
                beat_index=_expect(seg, "beat_index", int, spath),
                text=_expect(seg, "text", str, spath),
                origin=_expect(seg, "origin", str, spath),
                stale=bool(_expect(seg, "stale", bool, spath)),
                style=_style_from(style_doc, f"{spath}.style") if style_doc is not None else None,
            )
        )
    return ProseDocument(
        scene_id=_expect(doc, "scene_id", str, path),
        style=_style_from(_expect(doc, "style", dict, path), f"{path}.style"),
        rendered_at=_expect(doc, "rendered_at", str, path),
        segments=segments,
    )


def _scene_from(doc: Any, path: str) -> Scene:
    if not isinstance(doc, dict):
        raise MalformedDocument("scene must be an object", path=path)
    beats_doc = _expect(doc, "beats", list, path)
    situations_doc = _expect(doc, "situations", list, path)
    situations = []
    for i, st in enumerate(situations_doc):
        if not isinstance(st, dict):
            raise MalformedDocument("situation must be an object", path=f"{path}.situations[{i}]")
        spath = f"{path}.situations[{i}]"
        situations.append(
            SituationState(
                text=_expect(st, "text", str, spath),
                stale=bool(_expect(st, "stale", bool, spath)),
                derivation=_expect(st, "derivation", str, spath),
            )
        )
    draft_doc = doc.get("draft")
    prose_doc = doc.get("prose")
    return Scene(
        id=_expect(doc, "id", str, path),
        ordinal=_expect(doc, "ordinal", int, path),
        title=_expect(doc, "title", str, path),
        initial_situation=_expect(doc, "initial_situation", str, path),
        participants=_participants_from(doc, "participants", path),
        beats=[_beat_from(b, f"{path}.beats[{i}]") for i, b in enumerate(beats_doc)],
        situations=situations,
        draft=_draft_from(draft_doc, f"{path}.draft") if draft_doc is not None else None,
        prose=_prose_from(prose_doc, f"{path}.prose") if prose_doc is not None else None,
    )
