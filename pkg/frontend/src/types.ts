/**
 * Wire types mirroring the service's project documents (FORMAT.md).
 * No story data lives only in the UI: every field here comes from the
 * service and goes back to it unchanged.
 */

export interface TraitDoc {
  name: string;
  value: number;
}

export interface MemoryDoc {
  source_scene: string;
  source_beat_index: number;
  text: string;
  stale: boolean;
  condensed: boolean;
}

export interface CharacterDoc {
  id: string;
  name: string;
  description: string;
  traits: TraitDoc[];
  goals: string[];
  memories: MemoryDoc[];
}

export interface GenParamsDoc {
  temperature: number;
  adherence: "loose" | "moderate" | "strict";
  context_budget: number;
}

export interface StyleDoc {
  genre: string;
  style: string;
  intensity: "restrained" | "moderate" | "vivid";
  target_length: "brief" | "standard" | "expansive";
}

export interface SituationDoc {
  text: string;
  stale: boolean;
  derivation: "initial" | "provider_update" | "manual_override";
}

export interface BeatDoc {
  index: number;
  text: string;
  provenance: "simulated" | "nudged" | "manual";
  nudge_text: string | null;
  participants: string[];
  generation_params: GenParamsDoc | null;
  stale_downstream: boolean;
  edit_history: { provenance: string; text: string }[];
}

export interface DraftDoc {
  text: string;
  provenance: "simulated" | "nudged" | "manual";
  nudge_text: string | null;
  proposed_participants: string[];
  params: GenParamsDoc;
  authored_text: string | null;
  source_bundle_manifest: [string, string][];
}

export interface SegmentDoc {
  beat_index: number;
  text: string;
  origin: "generated" | "manually_edited";
  stale: boolean;
  style: StyleDoc | null;
}

export interface ProseDoc {
  scene_id: string;
  style: StyleDoc;
  rendered_at: string;
  segments: SegmentDoc[];
}

export interface SceneDoc {
  id: string;
  ordinal: number;
  title: string;
  initial_situation: string;
  participants: string[];
  beats: BeatDoc[];
  situations: SituationDoc[];
  draft: DraftDoc | null;
  prose: ProseDoc | null;
}

export interface ProjectDoc {
  schema_version: number;
  id: string;
  created_at: string;
  updated_at: string;
  premise: { text: string; logline: string | null };
  style_defaults: StyleDoc;
  characters: CharacterDoc[];
  scenes: SceneDoc[];
}

export interface ProjectRow {
  id: string;
  title: string;
  updated_at: string;
}

export interface GenerationEvent {
  request_id: string;
  phase: "queued" | "prompting" | "awaiting_provider" | "parsing" | "done" | "failed";
  payload: Record<string, unknown> | null;
}

export interface ApiError {
  code: string;
  message: string;
  details?: Record<string, unknown>;
}
