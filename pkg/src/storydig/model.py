"""Domain types for the story instrument.

The instrument is a persistent hierarchy: a premise, characters (with trait
scales, goals, and accumulated memories), and scenes. Each scene owns an
initial situation, an ordered beat chain, and the derived situation chain:
situations[0] is the writer-authored starting state and situations[T] is the
world state after beat T-1, so len(situations) == len(beats) + 1 always.

Types here are plain mutable dataclasses and deliberately do NOT validate in
their constructors (except where an operation contract demands it): broken
instruments must be constructible so that validate_instrument and deserialize
can report findings instead of dying half-way. All writer-facing mutation goes
through the operation functions below, which do enforce their preconditions.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from . import clock
from .errors import (
    DuplicateName,
    DuplicateTraitName,
    EmptyParticipants,
    EmptyPremise,
    EmptySituation,
    InvalidParams,
    TemperatureOutOfRange,
    TraitOutOfRange,
    UnknownBeat,
    UnknownCharacter,
    UnknownScene,
)

SCHEMA_VERSION = 1

PROVENANCES = ("simulated", "nudged", "manual")
DERIVATIONS = ("initial", "provider_update", "manual_override")
ADHERENCE_LEVELS = ("loose", "moderate", "strict")
INTENSITIES = ("restrained", "moderate", "vivid")
TARGET_LENGTHS = ("brief", "standard", "expansive")
SEGMENT_ORIGINS = ("generated", "manually_edited")

TEMPERATURE_MIN = 0.1
TEMPERATURE_MAX = 2.0

TRAIT_MIN = 0
TRAIT_MAX = 100


@dataclass
class Premise:
    text: str
    logline: str | None = None


@dataclass
class TraitScale:
    """Writer-defined personality axis, e.g. ("taciturnity", 90)."""

    name: str
    value: int


@dataclass
class Memory:
    """A beat a character took part in, carried into later scenes.

    `condensed` marks a synthetic summary that replaced a run of old
    memories; it keeps the oldest replaced source reference so ordering
    stays stable.
    """

    source_scene: str
    source_beat_index: int
    text: str
    stale: bool = False
    condensed: bool = False


@dataclass
class Character:
    id: str
    name: str
    description: str = ""
    traits: list[TraitScale] = field(default_factory=list)
    goals: list[str] = field(default_factory=list)
    memories: list[Memory] = field(default_factory=list)


@dataclass
class GenParams:
    """Sampling controls for one generation request.

    temperature must stay within [0.1, 2.0]; adherence picks the
    system-prompt strictness variant; context_budget is an approximate
    token budget applied by truncate_context.
    """

    temperature: float = 0.7
    adherence: str = "moderate"
    context_budget: int = 4000


@dataclass
class StyleParams:
    genre: str = ""
    style: str = ""
    intensity: str = "moderate"
    target_length: str = "standard"


@dataclass
class SituationState:
    text: str
    stale: bool = False
    derivation: str = "provider_update"


@dataclass
class Beat:
    """One unit of dramatic action in a scene's chain."""

    index: int
    text: str
    provenance: str
    participants: set[str]
    nudge_text: str | None = None
    generation_params: GenParams | None = None
    stale_downstream: bool = False
    # Prior (provenance, text) pairs, oldest first; appended to by edit_beat.
    edit_history: list[dict] = field(default_factory=list)


@dataclass
class DraftBeat:
    """A proposed beat awaiting accept/reject; at most one per scene."""

    text: str
    provenance: str
    proposed_participants: set[str]
    params: GenParams
    nudge_text: str | None = None
    # Original writer text when polish replaced it (undo affordance).
    authored_text: str | None = None
    source_bundle_manifest: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class ProseSegment:
    beat_index: int
    text: str
    origin: str = "generated"
    stale: bool = False
    # Style snapshot when this segment was (re)generated with parameters
    # that differ per segment; None means the document style applies.
    style: StyleParams | None = None


@dataclass
class ProseDocument:
    scene_id: str
    style: StyleParams
    segments: list[ProseSegment]
    rendered_at: str


@dataclass
class Scene:
    id: str
    ordinal: int
    title: str
    initial_situation: str
    participants: set[str]
    beats: list[Beat] = field(default_factory=list)
    situations: list[SituationState] = field(default_factory=list)
    draft: DraftBeat | None = None
    prose: ProseDocument | None = None

    def current_situation(self) -> SituationState:
        return self.situations[-1]

    def get_beat(self, index: int) -> Beat:
        if not isinstance(index, int) or index < 0 or index >= len(self.beats):
            raise UnknownBeat(f"no beat at index {index}", index=index)
        return self.beats[index]


@dataclass
class StoryInstrument:
    id: str
    schema_version: int
    premise: Premise
    style_defaults: StyleParams
    created_at: str
    updated_at: str
    characters: list[Character] = field(default_factory=list)
    scenes: list[Scene] = field(default_factory=list)

    def get_character(self, character_id: str) -> Character:
        for c in self.characters:
            if c.id == character_id:
                return c
        raise UnknownCharacter(f"no character {character_id!r}", character_id=character_id)

    def get_scene(self, scene_id: str) -> Scene:
        for s in self.scenes:
            if s.id == scene_id:
                return s
        raise UnknownScene(f"no scene {scene_id!r}", scene_id=scene_id)

    def scene_ordinal(self, scene_id: str) -> int:
        return self.get_scene(scene_id).ordinal

    def touch(self) -> None:
        self.updated_at = clock.now_iso()


def check_gen_params(params: GenParams) -> None:
    """Reject out-of-domain sampling params; shared by engine and provider."""
    if not (TEMPERATURE_MIN <= params.temperature <= TEMPERATURE_MAX):
        raise TemperatureOutOfRange(
            f"temperature {params.temperature} outside "
            f"[{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]",
            temperature=params.temperature,
        )
    if params.adherence not in ADHERENCE_LEVELS:
        raise InvalidParams(f"adherence must be one of {ADHERENCE_LEVELS}")
    if not isinstance(params.context_budget, int) or params.context_budget <= 0:
        raise InvalidParams("context_budget must be a positive integer")


# ── operations ───────────────────────────────────────────────────────────

def create_instrument(
    premise_text: str,
    style_defaults: StyleParams | None = None,
    logline: str | None = None,
) -> StoryInstrument:
    """Start a new project from a premise; no characters or scenes yet."""
    text = premise_text.strip()
    if not text:
        raise EmptyPremise("premise text is blank")
    now = clock.now_iso()
    return StoryInstrument(
        id=clock.new_id("st"),
        schema_version=SCHEMA_VERSION,
        premise=Premise(text=text, logline=logline),
        style_defaults=style_defaults or StyleParams(),
        created_at=now,
        updated_at=now,
    )


def _check_traits(traits: list[TraitScale]) -> None:
    seen: set[str] = set()
    for t in traits:
        if not (TRAIT_MIN <= t.value <= TRAIT_MAX):
            raise TraitOutOfRange(
                f"trait {t.name!r} value {t.value} outside [{TRAIT_MIN}, {TRAIT_MAX}]",
                trait=t.name,
                value=t.value,
            )
        if t.name in seen:
            raise DuplicateTraitName(f"trait {t.name!r} repeated")
        seen.add(t.name)


def add_character(
    instr: StoryInstrument,
    name: str,
    description: str = "",
    traits: list[TraitScale] | None = None,
    goals: list[str] | None = None,
) -> str:
    """Append a character card; returns the new CharacterId."""
    name = name.strip()
    if not name:
        raise InvalidParams("character name is blank")
    if any(c.name == name for c in instr.characters):
        raise DuplicateName(f"character named {name!r} already exists", name=name)
    _check_traits(traits or [])
    character = Character(
        id=clock.new_id("ch"),
        name=name,
        description=description,
        traits=list(traits or []),
        goals=list(goals or []),
    )
    instr.characters.append(character)
    instr.touch()
    return character.id


def update_character(
    instr: StoryInstrument,
    character_id: str,
    *,
    name: str | None = None,
    description: str | None = None,
    traits: list[TraitScale] | None = None,
    goals: list[str] | None = None,
) -> None:
    """Edit a character card in place; memories are never touched here."""
    character = instr.get_character(character_id)
    if name is not None:
        name = name.strip()
        if not name:
            raise InvalidParams("character name is blank")
        if any(c.name == name and c.id != character_id for c in instr.characters):
            raise DuplicateName(f"character named {name!r} already exists", name=name)
        character.name = name
    if traits is not None:
        _check_traits(traits)
        character.traits = list(traits)
    if description is not None:
        character.description = description
    if goals is not None:
        character.goals = list(goals)
    instr.touch()


def add_scene(
    instr: StoryInstrument,
    title: str,
    initial_situation: str,
    participants: set[str],
) -> str:
    """Append a scene with its starting situation; returns the new SceneId."""
    situation = initial_situation.strip()
    if not situation:
        raise EmptySituation("initial situation is blank")
    if not participants:
        raise EmptyParticipants("a scene needs at least one participant")
    known = {c.id for c in instr.characters}
    for cid in participants:
        if cid not in known:
            raise UnknownCharacter(f"no character {cid!r}", character_id=cid)
    ordinal = max((s.ordinal for s in instr.scenes), default=-1) + 1
    scene = Scene(
        id=clock.new_id("sc"),
        ordinal=ordinal,
        title=title,
        initial_situation=situation,
        participants=set(participants),
        situations=[SituationState(text=situation, stale=False, derivation="initial")],
    )
    instr.scenes.append(scene)
    instr.touch()
    return scene.id


def update_scene_title(instr: StoryInstrument, scene_id: str, title: str) -> None:
    instr.get_scene(scene_id).title = title
    instr.touch()


def insert_memory(character: Character, memory: Memory, ordinal_of: dict[str, int]) -> None:
    """Insert keeping memories sorted by (scene ordinal, beat index)."""
    keys = [
        (ordinal_of.get(m.source_scene, -1), m.source_beat_index)
        for m in character.memories
    ]
    key = (ordinal_of.get(memory.source_scene, -1), memory.source_beat_index)
    character.memories.insert(bisect.bisect_right(keys, key), memory)


# ── validation ───────────────────────────────────────────────────────────

@dataclass
class Finding:
    code: str
    path: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def add(self, code: str, path: str, message: str) -> None:
        self.findings.append(Finding(code=code, path=path, message=message))

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_records(self) -> list[dict]:
        return [
            {"code": f.code, "path": f.path, "message": f.message}
            for f in self.findings
        ]


def validate_instrument(instr: StoryInstrument) -> ValidationReport:
    """Check every structural invariant; empty report iff the instrument is valid."""
    r = ValidationReport()
    known_ids = {c.id for c in instr.characters}
    ordinal_of = {s.id: s.ordinal for s in instr.scenes}

    if not instr.premise.text.strip():
        r.add("PREMISE_EMPTY", "premise.text", "premise text is blank")

    _validate_style(r, instr.style_defaults, "style_defaults")

    names_seen: set[str] = set()
    ids_seen: set[str] = set()
    for ci, c in enumerate(instr.characters):
        path = f"characters[{ci}]"
        if c.id in ids_seen:
            r.add("CHARACTER_ID_DUPLICATE", path, f"character id {c.id!r} repeated")
        ids_seen.add(c.id)
        if not c.name.strip():
            r.add("CHARACTER_NAME_EMPTY", f"{path}.name", "character name is blank")
        if c.name in names_seen:
            r.add("CHARACTER_NAME_DUPLICATE", f"{path}.name", f"name {c.name!r} repeated")
        names_seen.add(c.name)
        trait_names: set[str] = set()
        for ti, t in enumerate(c.traits):
            if not (TRAIT_MIN <= t.value <= TRAIT_MAX):
                r.add(
                    "TRAIT_VALUE_RANGE",
                    f"{path}.traits[{ti}]",
                    f"trait {t.name!r} value {t.value} outside [{TRAIT_MIN}, {TRAIT_MAX}]",
                )
            if t.name in trait_names:
                r.add("TRAIT_NAME_DUPLICATE", f"{path}.traits[{ti}]", f"trait {t.name!r} repeated")
            trait_names.add(t.name)
        seen_sources: set[tuple[str, int]] = set()
        prev_key: tuple[int, int] | None = None
        for mi, m in enumerate(c.memories):
            mpath = f"{path}.memories[{mi}]"
            if m.source_scene not in ordinal_of:
                r.add("MEMORY_SOURCE_UNRESOLVED", mpath, f"scene {m.source_scene!r} not found")
                continue
            scene = instr.get_scene(m.source_scene)
            if not (0 <= m.source_beat_index < len(scene.beats)):
                r.add(
                    "MEMORY_SOURCE_UNRESOLVED",
                    mpath,
                    f"beat index {m.source_beat_index} out of range for scene {m.source_scene!r}",
                )
            if not m.text.strip():
                r.add("MEMORY_TEXT_EMPTY", mpath, "memory text is blank")
            source = (m.source_scene, m.source_beat_index)
            if source in seen_sources:
                r.add("MEMORY_DUPLICATE", mpath, f"duplicate memory source {source}")
            seen_sources.add(source)
            key = (ordinal_of[m.source_scene], m.source_beat_index)
            if prev_key is not None and key < prev_key:
                r.add("MEMORY_ORDER", mpath, "memories not sorted by (scene ordinal, beat index)")
            prev_key = key

    ordinals_seen: set[int] = set()
    scene_ids_seen: set[str] = set()
    for si, s in enumerate(instr.scenes):
        path = f"scenes[{si}]"
        if s.id in scene_ids_seen:
            r.add("SCENE_ID_DUPLICATE", path, f"scene id {s.id!r} repeated")
        scene_ids_seen.add(s.id)
        if s.ordinal in ordinals_seen:
            r.add("SCENE_ORDINAL_DUPLICATE", f"{path}.ordinal", f"ordinal {s.ordinal} repeated")
        ordinals_seen.add(s.ordinal)
        if not s.participants:
            r.add("SCENE_PARTICIPANTS_EMPTY", f"{path}.participants", "scene has no participants")
        for cid in sorted(s.participants):
            if cid not in known_ids:
                r.add(
                    "SCENE_PARTICIPANT_UNKNOWN",
                    f"{path}.participants",
                    f"participant {cid!r} not in instrument",
                )
        if not s.initial_situation.strip():
            r.add("SITUATION_EMPTY", f"{path}.initial_situation", "initial situation is blank")

        for bi, b in enumerate(s.beats):
            bpath = f"{path}.beats[{bi}]"
            if b.index != bi:
                r.add("BEAT_INDEX_SEQUENCE", bpath, f"beat index {b.index}, expected {bi}")
            if not b.text.strip():
                r.add("BEAT_TEXT_EMPTY", bpath, "beat text is blank")
            if b.provenance not in PROVENANCES:
                r.add("BEAT_PROVENANCE_INVALID", bpath, f"provenance {b.provenance!r}")
            if b.provenance == "nudged" and not (b.nudge_text or "").strip():
                r.add("BEAT_NUDGE_MISSING", bpath, "nudged beat without nudge text")
            if not b.participants:
                r.add("BEAT_PARTICIPANTS_EMPTY", bpath, "beat has no participants")
            for cid in sorted(b.participants):
                if cid not in s.participants:
                    r.add(
                        "BEAT_PARTICIPANT_NOT_IN_SCENE",
                        bpath,
                        f"participant {cid!r} not in scene participants",
                    )
            if b.generation_params is not None:
                _validate_gen_params(r, b.generation_params, f"{bpath}.generation_params")

        if len(s.situations) != len(s.beats) + 1:
            r.add(
                "SITUATION_CHAIN_LENGTH",
                f"{path}.situations",
                f"{len(s.situations)} situations for {len(s.beats)} beats",
            )
        if s.situations:
            head = s.situations[0]
            if head.text != s.initial_situation:
                r.add(
                    "SITUATION_HEAD_MISMATCH",
                    f"{path}.situations[0]",
                    "situations[0] text differs from initial_situation",
                )
            if head.derivation != "initial" or head.stale:
                r.add(
                    "SITUATION_HEAD_DERIVATION",
                    f"{path}.situations[0]",
                    "situations[0] must be derivation=initial and non-stale",
                )
        for ti, st in enumerate(s.situations):
            if st.derivation not in DERIVATIONS:
                r.add(
                    "SITUATION_DERIVATION_INVALID",
                    f"{path}.situations[{ti}]",
                    f"derivation {st.derivation!r}",
                )

        if s.draft is not None:
            dpath = f"{path}.draft"
            if s.draft.provenance not in PROVENANCES:
                r.add("DRAFT_PROVENANCE_INVALID", dpath, f"provenance {s.draft.provenance!r}")
            if s.draft.provenance == "nudged" and not (s.draft.nudge_text or "").strip():
                r.add("DRAFT_NUDGE_MISSING", dpath, "nudged draft without nudge text")
            for cid in sorted(s.draft.proposed_participants):
                if cid not in s.participants:
                    r.add(
                        "DRAFT_PARTICIPANT_NOT_IN_SCENE",
                        dpath,
                        f"participant {cid!r} not in scene participants",
                    )
            _validate_gen_params(r, s.draft.params, f"{dpath}.params")

        if s.prose is not None:
            ppath = f"{path}.prose"
            if s.prose.scene_id != s.id:
                r.add("PROSE_SCENE_MISMATCH", ppath, "prose document scene_id differs")
            _validate_style(r, s.prose.style, f"{ppath}.style")
            for gi, seg in enumerate(s.prose.segments):
                spath = f"{ppath}.segments[{gi}]"
                if seg.beat_index != gi:
                    r.add("SEGMENT_INDEX_SEQUENCE", spath, f"segment beat_index {seg.beat_index}, expected {gi}")
                if seg.origin not in SEGMENT_ORIGINS:
                    r.add("SEGMENT_ORIGIN_INVALID", spath, f"origin {seg.origin!r}")
                if not seg.text.strip() and not seg.stale:
                    r.add("SEGMENT_TEXT_EMPTY", spath, "non-stale segment with blank text")
                if seg.style is not None:
                    _validate_style(r, seg.style, f"{spath}.style")

    return r


def _validate_gen_params(r: ValidationReport, p: GenParams, path: str) -> None:
    if not (TEMPERATURE_MIN <= p.temperature <= TEMPERATURE_MAX):
        r.add("GEN_TEMPERATURE_RANGE", f"{path}.temperature", f"temperature {p.temperature}")
    if p.adherence not in ADHERENCE_LEVELS:
        r.add("GEN_ADHERENCE_INVALID", f"{path}.adherence", f"adherence {p.adherence!r}")
    if not isinstance(p.context_budget, int) or p.context_budget <= 0:
        r.add("GEN_BUDGET_INVALID", f"{path}.context_budget", f"budget {p.context_budget!r}")


def _validate_style(r: ValidationReport, s: StyleParams, path: str) -> None:
    if s.intensity not in INTENSITIES:
        r.add("STYLE_INTENSITY_INVALID", f"{path}.intensity", f"intensity {s.intensity!r}")
    if s.target_length not in TARGET_LENGTHS:
        r.add("STYLE_TARGET_LENGTH_INVALID", f"{path}.target_length", f"target_length {s.target_length!r}")
