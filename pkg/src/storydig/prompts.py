"""Deterministic prompt assembly.

Every provider request is built here from instrument state, and nothing else.

DETERMINISM GUARANTEE:
- Same instrument state + same inputs + same params -> byte-identical
  system_text and user_text. No timestamps, ids, or randomness ever enter
  prompt text.
- Fixed section order: premise -> character sheets -> memories -> current
  situation -> prior beats -> nudge (if any) -> instruction.
- Template texts live in templates/*.txt and are versioned with the package.

Every block of user_text is a PromptSection carrying a manifest entry
(section name + source path), so a bundle can always explain exactly which
instrument elements it includes. truncate_context drops sections by priority
class (oldest prior beats, then oldest memories, then character
descriptions) and never touches the premise, trait lines, the current
situation, or the nudge.

Size estimation for truncation: characters / 4, floor division, over
system_text plus user_text.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

from .errors import (
    BudgetUnsatisfiable,
    EmptyDraft,
    EmptyInput,
    EmptyNudge,
    InvalidParams,
    StaleChain,
    UnknownBeat,
    UpstreamStale,
)
from .model import (
    Character,
    GenParams,
    Scene,
    StoryInstrument,
    StyleParams,
    check_gen_params,
)

PROMPT_KINDS = (
    "simulate",
    "nudge",
    "polish",
    "situation_update",
    "prose",
    "prose_segment",
    "memory_condense",
)

# Drop priority classes for truncate_context; NEVER sections are protected.
NEVER = 0
DROP_BEATS = 1
DROP_MEMORIES = 2
DROP_DESCRIPTIONS = 3

#: target_length -> (min_words, max_words) emitted in prose instructions.
WORD_RANGES = {
    "brief": (50, 120),
    "standard": (120, 300),
    "expansive": (300, 600),
}

_INTENSITY_PHRASES = {
    "restrained": "Keep the prose restrained and understated.",
    "moderate": "Keep the prose balanced, neither flat nor overwrought.",
    "vivid": "Make the prose vivid and sensory.",
}

_NUDGE_OPEN = "<<<"
_NUDGE_CLOSE = ">>>"

_TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (_TEMPLATE_DIR / f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")


@dataclass
class PromptSection:
    name: str
    source: str
    text: str
    drop_class: int = NEVER
    drop_rank: int = 0


@dataclass
class PromptBundle:
    """A fully assembled provider request plus its build manifest."""

    kind: str
    system_text: str
    user_text: str
    params: GenParams
    debug_manifest: list[tuple[str, str]]
    dropped_sections: list[str] = field(default_factory=list)
    sections: list[PromptSection] = field(default_factory=list)


def estimate_tokens(system_text: str, user_text: str) -> int:
    return (len(system_text) + len(user_text)) // 4


def _assemble(kind: str, system_text: str, sections: list[PromptSection], params: GenParams) -> PromptBundle:
    return PromptBundle(
        kind=kind,
        system_text=system_text,
        user_text="\n\n".join(s.text for s in sections),
        params=params,
        debug_manifest=[(s.name, s.source) for s in sections],
        sections=sections,
    )


def _simulate_system(params: GenParams) -> str:
    clause = _template(f"adherence_{params.adherence}")
    return _template("system_simulate").format(adherence_clause=clause)


def _premise_section(instr: StoryInstrument) -> PromptSection:
    return PromptSection("premise", "premise", f"PREMISE:\n{instr.premise.text}")


def _scene_participants(instr: StoryInstrument, scene: Scene) -> list[Character]:
    # Instrument character order filtered by membership keeps this stable.
    return [c for c in instr.characters if c.id in scene.participants]


def _character_sections(instr: StoryInstrument, scene: Scene) -> list[PromptSection]:
    sections: list[PromptSection] = []
    for rank, c in enumerate(_scene_participants(instr, scene)):
        base = f"characters[{c.id}]"
        sections.append(PromptSection(f"character:{c.name}", base, f"CHARACTER: {c.name}"))
        if c.description:
            sections.append(
                PromptSection(
                    f"character_description:{c.name}",
                    f"{base}.description",
                    f"Description: {c.description}",
                    drop_class=DROP_DESCRIPTIONS,
                    drop_rank=rank,
                )
            )
        if c.traits:
            lines = "\n".join(f"- {t.name}: {t.value}/100" for t in c.traits)
            sections.append(
                PromptSection(f"character_traits:{c.name}", f"{base}.traits", f"Traits:\n{lines}")
            )
        if c.goals:
            lines = "\n".join(f"- {g}" for g in c.goals)
            sections.append(
                PromptSection(f"character_goals:{c.name}", f"{base}.goals", f"Goals:\n{lines}")
            )
    return sections


def _memory_sections(instr: StoryInstrument, scene: Scene) -> list[PromptSection]:
    """Merge participants' non-stale memories into one chronological run.

    One section per distinct (scene ordinal, beat index) source, ascending,
    so memory texts always appear in strictly increasing source order no
    matter how many characters share a memory.
    """
    ordinal_of = {s.id: s.ordinal for s in instr.scenes}
    merged: dict[tuple[int, int], list[tuple[str, str, str]]] = {}
    for c in _scene_participants(instr, scene):
        for mi, m in enumerate(c.memories):
            if m.stale:
                continue
            key = (ordinal_of[m.source_scene], m.source_beat_index)
            merged.setdefault(key, []).append(
                (c.name, m.text, f"characters[{c.id}].memories[{mi}]")
            )
    sections = []
    for rank, key in enumerate(sorted(merged)):
        ordinal, beat_index = key
        by_text: dict[str, list[str]] = {}
        sources = []
        for name, text, source in merged[key]:
            by_text.setdefault(text, []).append(name)
            sources.append(source)
        lines = [
            f"MEMORY (scene {ordinal}, beat {beat_index}) {', '.join(names)}: {text}"
            for text, names in by_text.items()
        ]
        sections.append(
            PromptSection(
                f"memory:{ordinal}.{beat_index}",
                "; ".join(sources),
                "\n".join(lines),
                drop_class=DROP_MEMORIES,
                drop_rank=rank,
            )
        )
    return sections


def _situation_section(scene: Scene) -> PromptSection:
    index = len(scene.situations) - 1
    return PromptSection(
        "situation",
        f"scenes[{scene.id}].situations[{index}]",
        f"CURRENT SITUATION:\n{scene.situations[index].text}",
    )


def _beat_sections(scene: Scene) -> list[PromptSection]:
    return [
        PromptSection(
            f"beat:{b.index}",
            f"scenes[{scene.id}].beats[{b.index}]",
            f"BEAT {b.index}: {b.text}",
            drop_class=DROP_BEATS,
            drop_rank=b.index,
        )
        for b in scene.beats
    ]


def _escape_nudge(text: str) -> str:
    # Delimiter lines embedded in the nudge get a backslash prefix so the
    # bundle keeps exactly one unambiguous nudge block.
    return "\n".join(
        "\\" + line if line.strip() in (_NUDGE_OPEN, _NUDGE_CLOSE) else line
        for line in text.split("\n")
    )


def _require_fresh_chain(scene: Scene) -> None:
    if any(s.stale for s in scene.situations):
        raise StaleChain(
            f"scene {scene.id!r} has stale situations; recompute before generating",
            scene_id=scene.id,
        )


def _context_sections(instr: StoryInstrument, scene: Scene) -> list[PromptSection]:
    sections = [_premise_section(instr)]
    sections.extend(_character_sections(instr, scene))
    sections.extend(_memory_sections(instr, scene))
    sections.append(_situation_section(scene))
    sections.extend(_beat_sections(scene))
    return sections


def build_simulation_prompt(instr: StoryInstrument, scene_id: str, params: GenParams) -> PromptBundle:
    """Request for the next beat, role-played from the participants."""
    check_gen_params(params)
    scene = instr.get_scene(scene_id)
    _require_fresh_chain(scene)
    sections = _context_sections(instr, scene)
    sections.append(
        PromptSection("instruction", "template:instruction_simulate", _template("instruction_simulate"))
    )
    return _assemble("simulate", _simulate_system(params), sections, params)


def build_nudge_prompt(
    instr: StoryInstrument, scene_id: str, nudge_text: str, params: GenParams
) -> PromptBundle:
    """Simulation request that must arrive at the writer's nudged outcome."""
    if not nudge_text.strip():
        raise EmptyNudge("nudge text is blank")
    check_gen_params(params)
    scene = instr.get_scene(scene_id)
    _require_fresh_chain(scene)
    sections = _context_sections(instr, scene)
    sections.append(
        PromptSection(
            "nudge",
            "input:nudge_text",
            f"NUDGE (desired outcome):\n{_NUDGE_OPEN}\n{_escape_nudge(nudge_text)}\n{_NUDGE_CLOSE}",
        )
    )
    sections.append(
        PromptSection("instruction", "template:instruction_nudge", _template("instruction_nudge"))
    )
    return _assemble("nudge", _simulate_system(params), sections, params)


def build_polish_prompt(
    draft_text: str, style_defaults: StyleParams, params: GenParams | None = None
) -> PromptBundle:
    """Tighten a manually authored beat without adding events.

    Never truncates: the draft is embedded whole regardless of length.
    """
    if not draft_text.strip():
        raise EmptyDraft("draft text is blank")
    sections = [
        PromptSection("draft", "input:draft_text", f"BEAT DRAFT:\n{draft_text}"),
        PromptSection("instruction", "template:instruction_polish", _template("instruction_polish")),
    ]
    return _assemble("polish", _template("system_polish"), sections, params or GenParams())


def build_situation_update_prompt(
    prev_situation: str, beat_text: str, params: GenParams | None = None
) -> PromptBundle:
    """Derive the situation after a beat from the situation before it."""
    if not prev_situation.strip() or not beat_text.strip():
        raise EmptyInput("previous situation and beat text must be nonempty")
    sections = [
        PromptSection("previous_situation", "input:previous_situation", f"SITUATION BEFORE:\n{prev_situation}"),
        PromptSection("beat", "input:beat_text", f"BEAT APPLIED:\n{beat_text}"),
        PromptSection(
            "instruction",
            "template:instruction_situation_update",
            _template("instruction_situation_update"),
        ),
    ]
    return _assemble("situation_update", _template("system_situation_update"), sections, params or GenParams())


def build_prose_prompt(
    instr: StoryInstrument,
    scene_id: str,
    beat_index: int,
    style: StyleParams,
    prev_segment_text: str | None = None,
    regenerate: bool = False,
    params: GenParams | None = None,
) -> PromptBundle:
    """Render one beat as prose, continuing from the previous segment."""
    scene = instr.get_scene(scene_id)
    beat = scene.get_beat(beat_index)
    if any(s.stale for i, s in enumerate(scene.situations) if i <= beat_index):
        raise UpstreamStale(
            f"beat {beat_index} sits on a stale chain; recompute first",
            scene_id=scene.id,
            beat_index=beat_index,
        )
    if style.target_length not in WORD_RANGES:
        raise InvalidParams(f"target_length must be one of {tuple(WORD_RANGES)}")
    if style.intensity not in _INTENSITY_PHRASES:
        raise InvalidParams(f"intensity must be one of {tuple(_INTENSITY_PHRASES)}")

    if prev_segment_text is None and beat_index > 0 and scene.prose is not None:
        for seg in scene.prose.segments:
            if seg.beat_index == beat_index - 1 and seg.text:
                prev_segment_text = seg.text
                break

    sections = [_premise_section(instr)]
    sections.extend(_character_sections(instr, scene))
    sections.append(
        PromptSection(
            "situation",
            f"scenes[{scene.id}].situations[{beat_index}]",
            f"SITUATION BEFORE THE BEAT:\n{scene.situations[beat_index].text}",
        )
    )
    sections.append(
        PromptSection(
            "beat",
            f"scenes[{scene.id}].beats[{beat_index}]",
            f"BEAT TO RENDER:\n{beat.text}",
        )
    )
    if prev_segment_text is not None:
        sections.append(
            PromptSection(
                "previous_segment",
                f"scenes[{scene.id}].prose.segments[{beat_index - 1}]",
                f"PREVIOUS PASSAGE (continue from here):\n{prev_segment_text}",
            )
        )
    min_words, max_words = WORD_RANGES[style.target_length]
    directive = _template("instruction_prose").format(
        genre=style.genre or "(unspecified)",
        style=style.style or "(unspecified)",
        intensity_phrase=_INTENSITY_PHRASES[style.intensity],
        min_words=min_words,
        max_words=max_words,
    )
    sections.append(PromptSection("style_directives", "template:instruction_prose", directive))
    kind = "prose_segment" if regenerate else "prose"
    return _assemble(kind, _template("system_prose"), sections, params or GenParams())


def build_memory_condense_prompt(
    character_name: str, memory_texts: list[str], params: GenParams | None = None
) -> PromptBundle:
    """Summarize a run of old memories into one recollection."""
    if not memory_texts:
        raise EmptyInput("no memories to condense")
    sections = [
        PromptSection("character", "input:character_name", f"CHARACTER: {character_name}"),
        PromptSection(
            "memories",
            "input:memory_texts",
            "MEMORIES (oldest first):\n" + "\n".join(f"- {t}" for t in memory_texts),
        ),
        PromptSection("instruction", "template:instruction_condense", _template("instruction_condense")),
    ]
    return _assemble("memory_condense", _template("system_condense"), sections, params or GenParams())


def truncate_context(bundle: PromptBundle, budget: int) -> PromptBundle:
    """Fit a bundle under `budget` estimated tokens by greedy section drops.

    Drop order: oldest prior beats, then oldest memories, then character
    descriptions. Protected sections (premise, trait lines, goals, current
    situation, nudge, instructions) are never dropped; if they alone exceed
    the budget the bundle is unsatisfiable.
    """
    if not isinstance(budget, int) or budget <= 0:
        raise InvalidParams("budget must be a positive integer")
    if estimate_tokens(bundle.system_text, bundle.user_text) <= budget:
        return bundle

    retained = list(bundle.sections)
    droppable = sorted(
        (s for s in retained if s.drop_class != NEVER),
        key=lambda s: (s.drop_class, s.drop_rank),
    )
    dropped: list[str] = []
    for victim in droppable:
        retained.remove(victim)
        dropped.append(victim.name)
        user_text = "\n\n".join(s.text for s in retained)
        if estimate_tokens(bundle.system_text, user_text) <= budget:
            return replace(
                bundle,
                user_text=user_text,
                debug_manifest=[(s.name, s.source) for s in retained],
                dropped_sections=bundle.dropped_sections + dropped,
                sections=retained,
            )
    raise BudgetUnsatisfiable(
        f"protected prompt core exceeds budget {budget}",
        budget=budget,
        core_estimate=estimate_tokens(
            bundle.system_text, "\n\n".join(s.text for s in retained)
        ),
    )
