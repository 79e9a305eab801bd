/** Milk-carton project document, as the service would return it. */

import type { ProjectDoc, SceneDoc } from "../src/types.js";

export const SIMULATED_BEAT =
  "Bob, who is a taciturn man, lets go of the milk carton and immediately slinks off.";
export const MILK_SITUATION = "Two shoppers fighting over the last milk carton";

export function milkProject(): ProjectDoc {
  return {
    schema_version: 1,
    id: "st-000000000000",
    created_at: "2026-01-01T00:00:00.000000Z",
    updated_at: "2026-01-01T00:00:05.000000Z",
    premise: {
      text: "An ordinary supermarket errand turns into a quiet battle of wills.",
      logline: null,
    },
    style_defaults: { genre: "comedy", style: "dry", intensity: "moderate", target_length: "brief" },
    characters: [
      {
        id: "ch-aaa",
        name: "Alice",
        description: "A determined shopper.",
        traits: [{ name: "persistence", value: 75 }],
        goals: ["get the milk"],
        memories: [],
      },
      {
        id: "ch-bbb",
        name: "Bob",
        description: "A taciturn man.",
        traits: [{ name: "taciturnity", value: 90 }],
        goals: ["avoid conflict"],
        memories: [
          { source_scene: "sc-111", source_beat_index: 0, text: SIMULATED_BEAT, stale: false, condensed: false },
        ],
      },
    ],
    scenes: [
      {
        id: "sc-111",
        ordinal: 0,
        title: "Checkout",
        initial_situation: MILK_SITUATION,
        participants: ["ch-aaa", "ch-bbb"],
        beats: [
          {
            index: 0,
            text: SIMULATED_BEAT,
            provenance: "simulated",
            nudge_text: null,
            participants: ["ch-bbb"],
            generation_params: { temperature: 0.7, adherence: "moderate", context_budget: 4000 },
            stale_downstream: false,
            edit_history: [],
          },
        ],
        situations: [
          { text: MILK_SITUATION, stale: false, derivation: "initial" },
          { text: "Alice stands alone holding the carton.", stale: false, derivation: "provider_update" },
        ],
        draft: null,
        prose: null,
      },
    ],
  };
}

export function withDraft(project: ProjectDoc): ProjectDoc {
  const scene = project.scenes[0] as SceneDoc;
  scene.draft = {
    text: "Alice hesitates, then offers to split the carton.",
    provenance: "simulated",
    nudge_text: null,
    proposed_participants: ["ch-aaa"],
    params: { temperature: 0.7, adherence: "moderate", context_budget: 4000 },
    authored_text: null,
    source_bundle_manifest: [["premise", "premise"]],
  };
  return project;
}

export function withStaleChain(project: ProjectDoc): ProjectDoc {
  const scene = project.scenes[0] as SceneDoc;
  const tail = scene.situations[1];
  if (tail !== undefined) {
    tail.stale = true;
  }
  return project;
}

export function withProse(project: ProjectDoc): ProjectDoc {
  const scene = project.scenes[0] as SceneDoc;
  scene.prose = {
    scene_id: scene.id,
    style: project.style_defaults,
    rendered_at: "2026-01-01T00:00:06.000000Z",
    segments: [
      { beat_index: 0, text: "Bob said nothing at all.", origin: "generated", stale: false, style: null },
    ],
  };
  return project;
}
