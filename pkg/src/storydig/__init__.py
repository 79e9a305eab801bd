"""storydig: a story archeology engine.

Writers excavate a narrative by refining a persistent story instrument
(premise, characters, scenes, beats) instead of issuing disposable prose
prompts. Beats are generated by character simulation, writer nudges, or
manual authoring; prose is rendered from the beat chain as a final,
regenerable step.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
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
    add_character,
    add_scene,
    create_instrument,
    validate_instrument,
)
from .fileformat import deserialize, serialize  # noqa: F401
