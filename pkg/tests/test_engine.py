from __future__ import annotations

import random

import pytest

from storydig import engine
from storydig.errors import (
    DraftAlreadyPending,
    EmptyDraft,
    EmptyGeneration,
    EmptyNudge,
    NoPendingDraft,
    NothingToRecompute,
    ProviderUnavailable,
    RateLimited,
    UnknownBeat,
)
from storydig.fileformat import serialize
from storydig.model import GenParams, Memory, TraitScale, add_character, add_scene
from storydig.provider import ScriptedProvider, ScriptedResponses

from helpers import (
    NUDGE_TEXT,
    NUDGED_BEAT,
    SIMULATED_BEAT,
    make_milk_instrument,
    scripted,
)
from randgen import ScriptedSession, memory_law_holds

PARAMS = GenParams(context_budget=9000)


def test_simulate_parses_draft_and_detects_participants():
    instr, alice, bob, scene_id = make_milk_instrument()
    provider = scripted(simulate=[SIMULATED_BEAT])
    draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    assert draft.text == SIMULATED_BEAT
    assert draft.provenance == "simulated"
    assert draft.proposed_participants == {bob}
    assert instr.get_scene(scene_id).draft is draft
    assert draft.source_bundle_manifest  # prompt provenance retained


def test_simulate_participant_fallback_when_no_name_matches():
    instr, alice, bob, scene_id = make_milk_instrument()
    provider = scripted(simulate=["The carton hits the floor."])
    draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    assert draft.proposed_participants == {alice, bob}


def test_simulate_name_match_is_whole_word():
    instr, alice, bob, scene_id = make_milk_instrument()
    provider = scripted(simulate=["Bobsled season ends; ALICE smiles."])
    draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    assert draft.proposed_participants == {alice}


def test_second_simulate_while_pending_rejected():
    instr, *_, scene_id = make_milk_instrument()
    provider = scripted(simulate=["one", "two"])
    engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    with pytest.raises(DraftAlreadyPending):
        engine.simulate_next_beat(instr, scene_id, PARAMS, provider)


def test_simulate_blank_generation_rejected():
    instr, *_, scene_id = make_milk_instrument()
    provider = scripted(simulate=["   "])
    with pytest.raises(EmptyGeneration):
        engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    assert instr.get_scene(scene_id).draft is None


def test_nudge_round_trip_keeps_nudge_text():
    instr, alice, bob, scene_id = make_milk_instrument()
    provider = scripted(nudge=[NUDGED_BEAT], situation_update=["Bob holds the carton."])
    draft = engine.nudge_next_beat(instr, scene_id, NUDGE_TEXT, PARAMS, provider)
    assert draft.text == NUDGED_BEAT
    assert draft.provenance == "nudged"
    index = engine.accept_beat(instr, scene_id, draft, provider)
    beat = instr.get_scene(scene_id).beats[index]
    assert beat.nudge_text == NUDGE_TEXT
    assert beat.provenance == "nudged"


def test_nudge_empty_rejected():
    instr, *_, scene_id = make_milk_instrument()
    with pytest.raises(EmptyNudge):
        engine.nudge_next_beat(instr, scene_id, " ", PARAMS, scripted())


def test_author_passthrough_no_provider_call():
    instr, alice, bob, scene_id = make_milk_instrument()
    draft = engine.author_beat(instr, scene_id, "Alice gloats.", polish=False)
    assert draft.text == "Alice gloats."
    assert draft.provenance == "manual"
    assert draft.authored_text is None
    assert draft.proposed_participants == {alice}


def test_author_polish_keeps_original_for_undo():
    instr, *_, scene_id = make_milk_instrument()
    provider = scripted(polish=["Alice gloats over her prize."])
    draft = engine.author_beat(
        instr, scene_id, "alice gloats", polish=True, params=PARAMS, provider=provider
    )
    assert draft.text == "Alice gloats over her prize."
    assert draft.authored_text == "alice gloats"


def test_author_polish_without_provider():
    instr, *_, scene_id = make_milk_instrument()
    with pytest.raises(ProviderUnavailable):
        engine.author_beat(instr, scene_id, "x", polish=True, provider=None)
    assert instr.get_scene(scene_id).draft is None


def test_accept_advances_chain_and_memories():
    instr, alice, bob, scene_id = make_milk_instrument()
    provider = scripted(
        simulate=[SIMULATED_BEAT],
        situation_update=["Alice stands alone holding the carton."],
    )
    draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    index = engine.accept_beat(instr, scene_id, draft, provider)
    scene = instr.get_scene(scene_id)
    assert index == 0
    assert len(scene.beats) == 1
    assert len(scene.situations) == 2
    assert scene.situations[1].text == "Alice stands alone holding the carton."
    assert scene.situations[1].derivation == "provider_update"
    assert scene.draft is None
    bob_memories = instr.get_character(bob).memories
    assert [m.text for m in bob_memories] == [SIMULATED_BEAT]
    assert instr.get_character(alice).memories == []


def test_accept_failure_is_atomic(pinned_clock):
    instr, *_, scene_id = make_milk_instrument()
    provider = scripted(
        simulate=["Bob shrugs."],
        situation_update=[{"error": "RATE_LIMITED"}],
    )
    draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    before = serialize(instr)
    with pytest.raises(RateLimited):
        engine.accept_beat(instr, scene_id, draft, provider)
    assert serialize(instr) == before


def test_accept_without_pending_draft():
    instr, *_, scene_id = make_milk_instrument()
    with pytest.raises(NoPendingDraft):
        engine.accept_beat(instr, scene_id, None, scripted())


def test_memory_insertion_keeps_chronological_order():
    instr, alice, bob, first = make_milk_instrument()
    second = add_scene(instr, "Later", "Bob alone in the lot.", {bob})
    provider = scripted(
        simulate=["Bob mutters.", "Bob remembers Alice."],
        situation_update=["s1", "s2"],
    )
    # Accept in the second scene first, then go back to the first scene.
    draft = engine.simulate_next_beat(instr, second, PARAMS, provider)
    engine.accept_beat(instr, second, draft, provider)
    draft = engine.simulate_next_beat(instr, first, PARAMS, provider)
    engine.accept_beat(instr, first, draft, provider)
    keys = [
        (instr.get_scene(m.source_scene).ordinal, m.source_beat_index)
        for m in instr.get_character(bob).memories
    ]
    assert keys == sorted(keys)


def test_reject_is_observationally_pure(pinned_clock):
    instr, *_, scene_id = make_milk_instrument()
    provider = scripted(simulate=["Bob sighs.", "Bob leaves."])
    before = serialize(instr)
    engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    engine.reject_beat(instr, scene_id)
    assert serialize(instr) == before
    # The next simulate is permitted and consumes the next script entry.
    draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
    assert draft.text == "Bob leaves."


def test_reject_without_draft():
    instr, *_, scene_id = make_milk_instrument()
    with pytest.raises(NoPendingDraft):
        engine.reject_beat(instr, scene_id)


def _three_beat_scene():
    instr, alice, bob, scene_id = make_milk_instrument()
    provider = scripted(
        simulate=["Alice grabs.", "Bob grips.", "Alice and Bob tug."],
        situation_update=["s1", "s2", "s3"],
    )
    for _ in range(3):
        draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
        engine.accept_beat(instr, scene_id, draft, provider)
    return instr, alice, bob, scene_id


def test_edit_marks_downstream_stale():
    instr, alice, bob, scene_id = _three_beat_scene()
    engine.edit_beat(instr, scene_id, 0, "Alice lunges instead.")
    scene = instr.get_scene(scene_id)
    assert [s.stale for s in scene.situations] == [False, True, True, True]
    stale_memory_indexes = {
        m.source_beat_index
        for c in instr.characters
        for m in c.memories
        if m.source_scene == scene_id and m.stale
    }
    assert stale_memory_indexes == {0, 1, 2}
    beat = scene.beats[0]
    assert beat.provenance == "manual"
    assert beat.edit_history[-1]["text"] == "Alice grabs."
    # Memories of the edited beat carry the new text immediately.
    for c in instr.characters:
        for m in c.memories:
            if m.source_scene == scene_id and m.source_beat_index == 0:
                assert m.text == "Alice lunges instead."


def test_edit_last_beat_only_final_situation_stale():
    instr, *_, scene_id = _three_beat_scene()
    engine.edit_beat(instr, scene_id, 2, "A tense truce.")
    scene = instr.get_scene(scene_id)
    assert [s.stale for s in scene.situations] == [False, False, False, True]


def test_edit_identical_text_still_marks_stale():
    instr, *_, scene_id = _three_beat_scene()
    original = instr.get_scene(scene_id).beats[1].text
    engine.edit_beat(instr, scene_id, 1, original)
    assert instr.get_scene(scene_id).situations[2].stale


def test_edit_unknown_or_empty():
    instr, *_, scene_id = _three_beat_scene()
    with pytest.raises(UnknownBeat):
        engine.edit_beat(instr, scene_id, 9, "x")
    with pytest.raises(EmptyDraft):
        engine.edit_beat(instr, scene_id, 0, "  ")


def test_recompute_full_chain():
    instr, *_, scene_id = _three_beat_scene()
    engine.edit_beat(instr, scene_id, 0, "Alice lunges.")
    provider = scripted(situation_update=["r1", "r2", "r3"])
    count = engine.recompute_chain(instr, scene_id, provider)
    scene = instr.get_scene(scene_id)
    assert count == 3
    assert [s.text for s in scene.situations[1:]] == ["r1", "r2", "r3"]
    assert not any(s.stale for s in scene.situations)
    assert not any(
        m.stale for c in instr.characters for m in c.memories if m.source_scene == scene_id
    )


def test_recompute_partial_failure_is_resumable():
    instr, *_, scene_id = _three_beat_scene()
    engine.edit_beat(instr, scene_id, 0, "Alice lunges.")
    failing = scripted(situation_update=["r1", {"error": "TIMEOUT"}])
    with pytest.raises(Exception) as info:
        engine.recompute_chain(instr, scene_id, failing)
    assert info.value.details["recomputed"] == 1
    scene = instr.get_scene(scene_id)
    assert scene.situations[1].text == "r1" and not scene.situations[1].stale
    assert scene.situations[2].stale and scene.situations[3].stale
    resume = scripted(situation_update=["r2", "r3"])
    assert engine.recompute_chain(instr, scene_id, resume) == 2
    assert not any(s.stale for s in scene.situations)


def test_recompute_with_nothing_stale():
    instr, *_, scene_id = _three_beat_scene()
    with pytest.raises(NothingToRecompute):
        engine.recompute_chain(instr, scene_id, scripted())


def test_override_situation_marks_downstream():
    instr, *_, scene_id = _three_beat_scene()
    engine.override_situation(instr, scene_id, 1, "Alice already won.")
    scene = instr.get_scene(scene_id)
    assert scene.situations[1].derivation == "manual_override"
    assert not scene.situations[1].stale
    assert [s.stale for s in scene.situations] == [False, False, True, True]


def test_override_initial_situation_updates_scene_field():
    instr, *_, scene_id = _three_beat_scene()
    engine.override_situation(instr, scene_id, 0, "A new opening tableau.")
    scene = instr.get_scene(scene_id)
    assert scene.initial_situation == "A new opening tableau."
    assert scene.situations[0].derivation == "initial"
    assert [s.stale for s in scene.situations] == [False, True, True, True]


def test_condense_memories_counts_and_order():
    instr, alice, bob, scene_id = make_milk_instrument()
    character = instr.get_character(bob)
    scene = instr.get_scene(scene_id)
    provider = scripted(
        simulate=[f"b{i} happens." for i in range(25)],
        situation_update=[f"s{i}" for i in range(25)],
        memory_condense=["Bob recalls a long grocery feud."],
    )
    for _ in range(25):
        draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
        draft.proposed_participants = {bob}
        engine.accept_beat(instr, scene_id, draft, provider)
    assert len(character.memories) == 25
    engine.condense_memories(instr, bob, provider, keep=20)
    assert len(character.memories) == 21
    summary = character.memories[0]
    assert summary.condensed
    assert summary.text == "Bob recalls a long grocery feud."
    assert summary.source_beat_index == 0  # oldest source reference retained
    keys = [(m.source_scene, m.source_beat_index) for m in character.memories]
    assert keys == sorted(keys, key=lambda k: k[1])
    # Exactly the 20 newest survive non-condensed.
    assert [m.source_beat_index for m in character.memories[1:]] == list(range(5, 25))


def test_condense_noop_at_threshold():
    instr, alice, bob, scene_id = make_milk_instrument()
    character = instr.get_character(bob)
    for i in range(20):
        character.memories.append(
            Memory(source_scene=scene_id, source_beat_index=i, text=f"m{i}")
        )
    provider = scripted()  # would raise if consulted
    engine.condense_memories(instr, bob, provider, keep=20)
    assert len(character.memories) == 20


def test_condense_provider_failure_leaves_memories():
    instr, alice, bob, scene_id = make_milk_instrument()
    character = instr.get_character(bob)
    scene = instr.get_scene(scene_id)
    provider = scripted(
        simulate=[f"b{i}." for i in range(25)],
        situation_update=[f"s{i}" for i in range(25)],
        memory_condense=[{"error": "TIMEOUT"}],
    )
    for _ in range(25):
        draft = engine.simulate_next_beat(instr, scene_id, PARAMS, provider)
        draft.proposed_participants = {bob}
        engine.accept_beat(instr, scene_id, draft, provider)
    before = [m.text for m in character.memories]
    with pytest.raises(Exception):
        engine.condense_memories(instr, bob, provider, keep=20)
    assert [m.text for m in character.memories] == before


# ── randomized laws (smoke here; full suites in acceptance) ──────────────

def test_staleness_soundness_random_sessions():
    rng = random.Random(31)
    for case in range(40):
        session = ScriptedSession.build(rng)
        session.run(50, ("simulate", "accept", "edit", "recompute", "override"))
        oracle = session.replay_oracle()
        for scene_id, model in oracle.items():
            scene = session.instr.get_scene(scene_id)
            assert [s.stale for s in scene.situations] == model.stale, f"case {case}"
            assert [s.text for s in scene.situations] == model.situations, f"case {case}"


def test_memory_law_random_sessions():
    rng = random.Random(32)
    for case in range(40):
        session = ScriptedSession.build(rng)
        session.run(
            60, ("simulate", "nudge", "author", "accept", "reject", "edit", "recompute")
        )
        assert memory_law_holds(session.instr), f"case {case}"
