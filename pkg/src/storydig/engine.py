"""The excavation loop: draft beats, acceptance, and chain maintenance.

State laws this module maintains:

- Chain law: situations[T+1] is always the provider-derived (or writer
  overridden) update for (situations[T], beats[T]).
- Memory law: a character holds exactly one non-condensed memory per
  accepted beat they participate in, text equal to the beat text.
- Atomicity: accept_beat performs its provider call before any mutation,
  so a failed acceptance leaves the instrument byte-identical.
- Staleness: editing beat k (or overriding a situation) marks every
  derived value strictly downstream as stale; recompute_chain repairs
  stale entries in ascending order and is resumable after a mid-chain
  provider failure.

Draft creation and rejection deliberately do not bump updated_at: a
simulate followed by a reject must be observationally identical to never
having simulated.
"""

from __future__ import annotations

import copy
import logging
import re

from .errors import (
    DraftAlreadyPending,
    EmptyDraft,
    EmptyGeneration,
    EmptyInput,
    EmptyNudge,
    NoPendingDraft,
    NothingToRecompute,
    ProviderUnavailable,
    StoryError,
    UnknownSituation,
)
from .model import (
    Beat,
    Character,
    DraftBeat,
    GenParams,
    Memory,
    Scene,
    SituationState,
    StoryInstrument,
    check_gen_params,
    insert_memory,
)
from .prompts import (
    build_memory_condense_prompt,
    build_nudge_prompt,
    build_polish_prompt,
    build_simulation_prompt,
    build_situation_update_prompt,
    truncate_context,
)

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_KEEP = 20


def detect_participants(instr: StoryInstrument, scene: Scene, beat_text: str) -> set[str]:
    """Scene participants whose name appears whole-word (case-insensitive)
    in the beat text; all participants when none match."""
    matched = {
        cid
        for cid in scene.participants
        if re.search(
            rf"(?<!\w){re.escape(instr.get_character(cid).name)}(?!\w)",
            beat_text,
            re.IGNORECASE,
        )
    }
    return matched or set(scene.participants)


def _require_no_draft(scene: Scene) -> None:
    if scene.draft is not None:
        raise DraftAlreadyPending(f"scene {scene.id!r} already has a pending draft", scene_id=scene.id)


def _generated_text(provider, bundle) -> str:
    result = provider.complete(bundle)
    text = result.text.strip()
    if not text:
        raise EmptyGeneration(f"provider returned a blank {bundle.kind} completion")
    return text


def simulate_next_beat(instr: StoryInstrument, scene_id: str, params: GenParams, provider) -> DraftBeat:
    """Role-play the participants one beat forward; result awaits accept/reject."""
    check_gen_params(params)
    scene = instr.get_scene(scene_id)
    _require_no_draft(scene)
    bundle = truncate_context(build_simulation_prompt(instr, scene_id, params), params.context_budget)
    text = _generated_text(provider, bundle)
    draft = DraftBeat(
        text=text,
        provenance="simulated",
        proposed_participants=detect_participants(instr, scene, text),
        params=copy.deepcopy(params),
        source_bundle_manifest=list(bundle.debug_manifest),
    )
    scene.draft = draft
    return draft


def nudge_next_beat(
    instr: StoryInstrument, scene_id: str, nudge_text: str, params: GenParams, provider
) -> DraftBeat:
    """Simulate toward a writer-specified outcome; the nudge is kept for audit."""
    if not nudge_text.strip():
        raise EmptyNudge("nudge text is blank")
    check_gen_params(params)
    scene = instr.get_scene(scene_id)
    _require_no_draft(scene)
    bundle = truncate_context(
        build_nudge_prompt(instr, scene_id, nudge_text, params), params.context_budget
    )
    text = _generated_text(provider, bundle)
    draft = DraftBeat(
        text=text,
        provenance="nudged",
        nudge_text=nudge_text,
        proposed_participants=detect_participants(instr, scene, text),
        params=copy.deepcopy(params),
        source_bundle_manifest=list(bundle.debug_manifest),
    )
    scene.draft = draft
    return draft


def author_beat(
    instr: StoryInstrument,
    scene_id: str,
    text: str,
    polish: bool = False,
    params: GenParams | None = None,
    provider=None,
) -> DraftBeat:
    """Writer-authored draft; optionally polished by the provider."""
    if not text.strip():
        raise EmptyDraft("beat text is blank")
    params = params or GenParams()
    check_gen_params(params)
    scene = instr.get_scene(scene_id)
    _require_no_draft(scene)

    final_text = text
    authored_text = None
    manifest: list[tuple[str, str]] = []
    if polish:
        if provider is None:
            raise ProviderUnavailable("polish requested but no provider configured")
        bundle = build_polish_prompt(text, instr.style_defaults, params)
        final_text = _generated_text(provider, bundle)
        authored_text = text
        manifest = list(bundle.debug_manifest)

    draft = DraftBeat(
        text=final_text,
        provenance="manual",
        proposed_participants=detect_participants(instr, scene, final_text),
        params=copy.deepcopy(params),
        authored_text=authored_text,
        source_bundle_manifest=manifest,
    )
    scene.draft = draft
    return draft


def accept_beat(instr: StoryInstrument, scene_id: str, draft: DraftBeat, provider) -> int:
    """Commit the pending draft: append the beat, derive the next situation,
    and hand a memory to every participant. All-or-nothing: the situation
    update runs before any state changes, so a provider failure aborts the
    acceptance with the instrument untouched."""
    scene = instr.get_scene(scene_id)
    if scene.draft is None or draft is not scene.draft:
        raise NoPendingDraft(f"scene {scene.id!r} has no matching pending draft", scene_id=scene.id)

    bundle = build_situation_update_prompt(scene.situations[-1].text, draft.text, draft.params)
    new_situation = _generated_text(provider, bundle)

    index = len(scene.beats)
    beat = Beat(
        index=index,
        text=draft.text,
        provenance=draft.provenance,
        nudge_text=draft.nudge_text,
        participants=set(draft.proposed_participants),
        generation_params=copy.deepcopy(draft.params),
    )
    scene.beats.append(beat)
    scene.situations.append(SituationState(text=new_situation, derivation="provider_update"))
    ordinal_of = {s.id: s.ordinal for s in instr.scenes}
    for cid in beat.participants:
        insert_memory(
            instr.get_character(cid),
            Memory(source_scene=scene.id, source_beat_index=index, text=beat.text),
            ordinal_of,
        )
    scene.draft = None
    instr.touch()
    logger.debug("accepted beat %d in scene %s", index, scene.id)
    return index


def reject_beat(instr: StoryInstrument, scene_id: str) -> None:
    """Discard the pending draft; leaves no trace in the instrument."""
    scene = instr.get_scene(scene_id)
    if scene.draft is None:
        raise NoPendingDraft(f"scene {scene.id!r} has no pending draft", scene_id=scene.id)
    scene.draft = None


def edit_beat(instr: StoryInstrument, scene_id: str, beat_index: int, new_text: str) -> None:
    """Rewrite an accepted beat and invalidate everything derived from it.

    Downstream situations, memories from this beat onward, and prose
    segments from this beat onward go stale; the memories of exactly this
    beat get the new text immediately but stay flagged until recompute
    reconciles the chain. Provenance flips to manual (prior provenance and
    text are kept in edit_history).
    """
    scene = instr.get_scene(scene_id)
    beat = scene.get_beat(beat_index)
    if not new_text.strip():
        raise EmptyDraft("beat text is blank")

    beat.edit_history.append({"provenance": beat.provenance, "text": beat.text})
    beat.text = new_text
    beat.provenance = "manual"
    for b in scene.beats[beat_index:]:
        b.stale_downstream = True
    for situation in scene.situations[beat_index + 1:]:
        situation.stale = True
    for character in instr.characters:
        for memory in character.memories:
            if memory.source_scene == scene.id and memory.source_beat_index >= beat_index:
                memory.stale = True
                if memory.source_beat_index == beat_index and not memory.condensed:
                    memory.text = new_text
    if scene.prose is not None:
        for segment in scene.prose.segments:
            if segment.beat_index >= beat_index:
                segment.stale = True
    instr.touch()


def override_situation(instr: StoryInstrument, scene_id: str, position: int, text: str) -> None:
    """Writer-supplied situation text at a chain position.

    Position 0 rewrites the scene's initial situation (derivation stays
    `initial`); later positions become `manual_override`. Everything
    strictly downstream goes stale; memories are untouched because no beat
    text changed.
    """
    scene = instr.get_scene(scene_id)
    if not isinstance(position, int) or not (0 <= position < len(scene.situations)):
        raise UnknownSituation(f"no situation at position {position}", position=position)
    if not text.strip():
        raise EmptyInput("situation text is blank")
    situation = scene.situations[position]
    situation.text = text.strip() if position == 0 else text
    situation.stale = False
    situation.derivation = "initial" if position == 0 else "manual_override"
    if position == 0:
        scene.initial_situation = situation.text
    for later in scene.situations[position + 1:]:
        later.stale = True
    for b in scene.beats[position:]:
        b.stale_downstream = True
    if scene.prose is not None:
        for segment in scene.prose.segments:
            if segment.beat_index >= position:
                segment.stale = True
    instr.touch()


def recompute_chain(instr: StoryInstrument, scene_id: str, provider) -> int:
    """Repair stale situations in ascending order; returns how many were
    re-derived. A provider failure mid-chain re-raises with a `recomputed`
    attribute after recording partial progress, and a later call resumes at
    the failure point."""
    scene = instr.get_scene(scene_id)
    stale_positions = [i for i, s in enumerate(scene.situations) if s.stale]
    if not stale_positions:
        raise NothingToRecompute(f"scene {scene.id!r} has no stale situations", scene_id=scene.id)

    count = 0
    for position in stale_positions:
        beat = scene.beats[position - 1]
        bundle = build_situation_update_prompt(scene.situations[position - 1].text, beat.text)
        try:
            new_text = _generated_text(provider, bundle)
        except StoryError as exc:
            if count:
                instr.touch()
            exc.recomputed = count
            exc.details["recomputed"] = count
            raise
        situation = scene.situations[position]
        situation.text = new_text
        situation.stale = False
        situation.derivation = "provider_update"
        beat.stale_downstream = False
        for character in instr.characters:
            for memory in character.memories:
                if (
                    memory.source_scene == scene.id
                    and memory.source_beat_index == beat.index
                    and memory.stale
                ):
                    if not memory.condensed:
                        memory.text = beat.text
                    memory.stale = False
        count += 1
    instr.touch()
    return count


def condense_memories(
    instr: StoryInstrument,
    character_id: str,
    provider,
    keep: int = DEFAULT_MEMORY_KEEP,
) -> None:
    """Replace everything older than the most recent `keep` memories with a
    single provider-written recollection; no-op at or under the threshold."""
    character: Character = instr.get_character(character_id)
    if keep <= 0:
        raise EmptyInput("keep must be positive")
    if len(character.memories) <= keep:
        return
    old = character.memories[:-keep]
    bundle = build_memory_condense_prompt(character.name, [m.text for m in old])
    summary = _generated_text(provider, bundle)
    synthetic = Memory(
        source_scene=old[0].source_scene,
        source_beat_index=old[0].source_beat_index,
        text=summary,
        condensed=True,
    )
    character.memories = [synthetic] + character.memories[-keep:]
    instr.touch()
