"""Shared fixtures: the milk-carton project and scripted provider builders."""

from __future__ import annotations

from storydig.model import StoryInstrument, StyleParams, TraitScale, add_character, add_scene, create_instrument
from storydig.provider import ScriptedProvider, ScriptedResponses

MILK_PREMISE = "An ordinary supermarket errand turns into a quiet battle of wills."
MILK_SITUATION = "Two shoppers fighting over the last milk carton"
SIMULATED_BEAT = (
    "Bob, who is a taciturn man, lets go of the milk carton and immediately slinks off."
)
NUDGE_TEXT = "Bob becomes uncharacteristically bold"
NUDGED_BEAT = "Bob overcomes his bashfulness and twists the carton out of Alice's hands."


def make_milk_instrument() -> tuple[StoryInstrument, str, str, str]:
    """The two-shopper fixture; returns (instr, alice_id, bob_id, scene_id)."""
    instr = create_instrument(
        MILK_PREMISE,
        StyleParams(genre="comedy", style="dry, observational", intensity="moderate", target_length="brief"),
    )
    alice = add_character(
        instr, "Alice", "A determined shopper.", [TraitScale("persistence", 75)], ["get the milk"]
    )
    bob = add_character(
        instr, "Bob", "A taciturn man.", [TraitScale("taciturnity", 90)], ["avoid conflict"]
    )
    scene = add_scene(instr, "Checkout", MILK_SITUATION, {alice, bob})
    return instr, alice, bob, scene


def scripted(**kinds) -> ScriptedProvider:
    """Scripted provider from keyword queues, e.g. scripted(simulate=[...])."""
    return ScriptedProvider(ScriptedResponses.from_dict(dict(kinds)))
