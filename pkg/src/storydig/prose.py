"""Prose rendering: one regenerable segment per accepted beat.

Rendering is the last, disposable step: a scene's beat chain is the source
of truth and the prose document is derived from it. Segment i's prompt sees
segment i-1's text for continuity; regeneration is local by default (loose
continuity) so redoing one segment never rewrites its neighbors.

Export byte formats are specified in EXPORT.md.
"""

from __future__ import annotations

import copy

from . import clock
from .errors import (
    EmptyDraft,
    EmptyGeneration,
    EmptyScene,
    InvalidParams,
    MissingProse,
    NoDocument,
    StaleChain,
    UnknownBeat,
)
from .model import (
    GenParams,
    ProseDocument,
    ProseSegment,
    Scene,
    StoryInstrument,
    StyleParams,
)
from .prompts import build_prose_prompt

CONTINUITY_MODES = ("loose", "strict")


def document_is_stale(scene: Scene) -> bool:
    """Whole-document staleness: any stale segment, or the beat chain moved on."""
    if scene.prose is None:
        return False
    if len(scene.prose.segments) != len(scene.beats):
        return True
    return any(seg.stale for seg in scene.prose.segments)


def render_scene(
    instr: StoryInstrument,
    scene_id: str,
    style: StyleParams,
    provider,
    params: GenParams | None = None,
) -> ProseDocument:
    """Generate the full segment sequence; replaces any prior document.

    A provider failure part-way discards the partial document: the scene
    keeps whatever document it had before the call.
    """
    scene = instr.get_scene(scene_id)
    if not scene.beats:
        raise EmptyScene(f"scene {scene.id!r} has no beats to render", scene_id=scene.id)
    if any(s.stale for s in scene.situations):
        raise StaleChain(
            f"scene {scene.id!r} has stale situations; recompute before rendering",
            scene_id=scene.id,
        )
    segments: list[ProseSegment] = []
    for beat in scene.beats:
        bundle = build_prose_prompt(
            instr,
            scene_id,
            beat.index,
            style,
            prev_segment_text=segments[-1].text if segments else None,
            params=params,
        )
        result = provider.complete(bundle)
        text = result.text.strip()
        if not text:
            raise EmptyGeneration(f"provider returned a blank segment for beat {beat.index}")
        segments.append(ProseSegment(beat_index=beat.index, text=text))
    document = ProseDocument(
        scene_id=scene.id,
        style=copy.deepcopy(style),
        segments=segments,
        rendered_at=clock.now_iso(),
    )
    scene.prose = document
    instr.touch()
    return document


def regenerate_segment(
    instr: StoryInstrument,
    scene_id: str,
    beat_index: int,
    style: StyleParams,
    provider,
    continuity: str = "loose",
    params: GenParams | None = None,
) -> None:
    """Redo one segment in place; every other segment stays byte-identical.

    Strict continuity additionally marks downstream segments stale (they
    were written to follow the old text); the default loose mode leaves
    them untouched.
    """
    if continuity not in CONTINUITY_MODES:
        raise InvalidParams(f"continuity must be one of {CONTINUITY_MODES}")
    scene = instr.get_scene(scene_id)
    if scene.prose is None:
        raise NoDocument(f"scene {scene.id!r} has no prose document", scene_id=scene.id)
    if not (0 <= beat_index < len(scene.prose.segments)):
        raise UnknownBeat(f"no segment for beat index {beat_index}", beat_index=beat_index)
    bundle = build_prose_prompt(
        instr,
        scene_id,
        beat_index,
        style,
        prev_segment_text=scene.prose.segments[beat_index - 1].text if beat_index > 0 else None,
        regenerate=True,
        params=params,
    )
    result = provider.complete(bundle)
    text = result.text.strip()
    if not text:
        raise EmptyGeneration(f"provider returned a blank segment for beat {beat_index}")
    segment = scene.prose.segments[beat_index]
    segment.text = text
    segment.origin = "generated"
    segment.stale = False
    segment.style = copy.deepcopy(style)
    if continuity == "strict":
        for later in scene.prose.segments[beat_index + 1:]:
            later.stale = True
    instr.touch()


def edit_segment(instr: StoryInstrument, scene_id: str, beat_index: int, new_text: str) -> None:
    """Writer rewrite of one segment; never calls a provider."""
    scene = instr.get_scene(scene_id)
    if scene.prose is None:
        raise NoDocument(f"scene {scene.id!r} has no prose document", scene_id=scene.id)
    if not (0 <= beat_index < len(scene.prose.segments)):
        raise UnknownBeat(f"no segment for beat index {beat_index}", beat_index=beat_index)
    if not new_text.strip():
        raise EmptyDraft("segment text is blank")
    segment = scene.prose.segments[beat_index]
    segment.text = new_text
    segment.origin = "manually_edited"
    instr.touch()


def export_document(
    instr: StoryInstrument,
    scope: str = "scene",
    format: str = "plain",
    scene_id: str | None = None,
) -> str:
    """Concatenate rendered prose (beat order within scenes, ordinal order
    across scenes) into plain text or markdown. Pure function of the
    documents; byte layout specified in EXPORT.md."""
    if scope not in ("scene", "whole_story"):
        raise InvalidParams("scope must be 'scene' or 'whole_story'")
    if format not in ("plain", "markdown"):
        raise InvalidParams("format must be 'plain' or 'markdown'")
    if scope == "scene":
        if scene_id is None:
            raise InvalidParams("scene scope needs a scene_id")
        scenes = [instr.get_scene(scene_id)]
    else:
        scenes = sorted(instr.scenes, key=lambda s: s.ordinal)

    for scene in scenes:
        if scene.prose is None:
            raise MissingProse(
                f"scene {scene.title!r} ({scene.id}) has no rendered prose",
                scene_id=scene.id,
                title=scene.title,
            )

    parts = []
    for scene in scenes:
        body = "\n\n".join(seg.text for seg in scene.prose.segments)
        if format == "markdown":
            parts.append(f"# {scene.title}\n\n{body}" if body else f"# {scene.title}")
        else:
            parts.append(body)
    separator = "\n\n" if format == "markdown" else "\n\n\n"
    return separator.join(parts)
