/**
 * View state and action gating.
 *
 * Gating mirrors the engine's preconditions exactly: actions whose
 * precondition fails are DISABLED in the UI rather than sent and
 * rejected. The view state is always reconstructible from (service
 * project document + local edit buffers); a reload loses at most
 * unconfirmed edits.
 */

import type { ProjectDoc, SceneDoc } from "./types.js";

export const STAGES = ["premise", "characters", "scenes", "beats", "prose"] as const;
export type Stage = (typeof STAGES)[number];

export interface BoardViewState {
  projectId: string | null;
  stage: Stage;
  selectedSceneId: string | null;
  /** Generation request ids still in flight (one per project at a time). */
  pendingRequests: string[];
  /** Unsaved edit buffers keyed by card id; applied only after the service confirms. */
  editBuffers: Record<string, string>;
}

export function initialViewState(): BoardViewState {
  return {
    projectId: null,
    stage: "premise",
    selectedSceneId: null,
    pendingRequests: [],
    editBuffers: {},
  };
}

export interface SceneGating {
  chainStale: boolean;
  proseStale: boolean;
  hasDraft: boolean;
  canSimulate: boolean;
  canNudge: boolean;
  canAuthor: boolean;
  canAccept: boolean;
  canReject: boolean;
  canRecompute: boolean;
  canRender: boolean;
  canExport: boolean;
}

export function chainIsStale(scene: SceneDoc): boolean {
  return scene.situations.some((s) => s.stale);
}

export function proseIsStale(scene: SceneDoc): boolean {
  if (scene.prose === null) {
    return false;
  }
  return (
    scene.prose.segments.length !== scene.beats.length ||
    scene.prose.segments.some((seg) => seg.stale)
  );
}

/** Mirrors engine preconditions; a pending in-flight mutation disables everything. */
export function sceneGating(scene: SceneDoc, busy = false): SceneGating {
  const hasDraft = scene.draft !== null;
  const stale = chainIsStale(scene);
  const generate = !busy && !hasDraft && !stale;
  return {
    chainStale: stale,
    proseStale: proseIsStale(scene),
    hasDraft,
    canSimulate: generate,
    canNudge: generate,
    canAuthor: generate,
    canAccept: !busy && hasDraft,
    canReject: !busy && hasDraft,
    canRecompute: !busy && stale,
    canRender: !busy && scene.beats.length > 0 && !stale,
    canExport: scene.prose !== null,
  };
}

export function canRegenerateSegment(scene: SceneDoc, index: number, busy = false): boolean {
  if (busy || scene.prose === null) {
    return false;
  }
  if (index < 0 || index >= scene.prose.segments.length) {
    return false;
  }
  // Upstream staleness blocks regeneration of this segment.
  return !scene.situations.slice(0, index + 1).some((s) => s.stale);
}

export function selectedScene(project: ProjectDoc, view: BoardViewState): SceneDoc | null {
  if (view.selectedSceneId === null) {
    return project.scenes[0] ?? null;
  }
  return project.scenes.find((s) => s.id === view.selectedSceneId) ?? null;
}
