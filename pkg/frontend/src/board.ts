/**
 * Pure HTML renderers for the pipeline board.
 *
 * Everything here is a string-in, string-out function of the project
 * document plus view state, which keeps rendering testable without a DOM.
 * Interactive elements carry data-action attributes; app.ts dispatches on
 * them by event delegation. Buttons for actions whose engine precondition
 * fails render with the `disabled` attribute (disable-over-error).
 */

import type { BeatDoc, CharacterDoc, ProjectDoc, SceneDoc, SegmentDoc } from "./types.js";
import {
  BoardViewState,
  STAGES,
  canRegenerateSegment,
  sceneGating,
  selectedScene,
} from "./gating.js";

export function escapeHtml(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

function button(action: string, label: string, enabled: boolean, extra = ""): string {
  const disabled = enabled ? "" : " disabled";
  return `<button data-action="${action}"${extra}${disabled}>${escapeHtml(label)}</button>`;
}

export function renderPremiseCard(project: ProjectDoc): string {
  const logline = project.premise.logline
    ? `<p class="logline">${escapeHtml(project.premise.logline)}</p>`
    : "";
  return `<div class="card premise-card">
<h3>Premise</h3>
<p>${escapeHtml(project.premise.text)}</p>${logline}
</div>`;
}

export function renderCharacterCard(character: CharacterDoc): string {
  const traits = character.traits
    .map(
      (t) => `<label class="trait-row">${escapeHtml(t.name)}
<input type="range" class="trait-slider" min="0" max="100" value="${t.value}"
 data-card="character:${character.id}" data-trait="${escapeHtml(t.name)}">
<span class="trait-value">${t.value}/100</span></label>`,
    )
    .join("\n");
  const goals = character.goals.map((g) => `<li>${escapeHtml(g)}</li>`).join("");
  const memories = character.memories.filter((m) => !m.stale).length;
  return `<div class="card character-card" data-character="${character.id}">
<h3>${escapeHtml(character.name)}</h3>
<p>${escapeHtml(character.description)}</p>
${traits}
<ul class="goals">${goals}</ul>
<span class="memory-count">${memories} memories</span>
</div>`;
}

function provenanceBadge(beat: BeatDoc): string {
  return `<span class="badge badge-${beat.provenance}">${beat.provenance}</span>`;
}

export function renderBeatCard(scene: SceneDoc, beat: BeatDoc, busy: boolean): string {
  const stale = beat.stale_downstream ? '<span class="stale-marker">stale downstream</span>' : "";
  const nudge = beat.nudge_text
    ? `<p class="nudge-note">nudge: ${escapeHtml(beat.nudge_text)}</p>`
    : "";
  return `<div class="card beat-card" data-beat="${beat.index}">
<header>Beat ${beat.index} ${provenanceBadge(beat)} ${stale}</header>
<p class="beat-text">${escapeHtml(beat.text)}</p>${nudge}
${button("beat-edit", "Edit", !busy, ` data-scene="${scene.id}" data-index="${beat.index}"`)}
</div>`;
}

export function renderDraftCard(scene: SceneDoc, busy: boolean): string {
  if (scene.draft === null) {
    return "";
  }
  const gating = sceneGating(scene, busy);
  const nudge = scene.draft.nudge_text
    ? `<p class="nudge-note">nudge: ${escapeHtml(scene.draft.nudge_text)}</p>`
    : "";
  return `<div class="card draft-card" data-provenance="${scene.draft.provenance}">
<header>Draft <span class="badge badge-${scene.draft.provenance}">${scene.draft.provenance}</span></header>
<p class="beat-text">${escapeHtml(scene.draft.text)}</p>${nudge}
${button("beat-accept", "Accept", gating.canAccept, ` data-scene="${scene.id}"`)}
${button("beat-reject", "Reject", gating.canReject, ` data-scene="${scene.id}"`)}
</div>`;
}

export function renderSceneCard(scene: SceneDoc, names: Map<string, string>, busy: boolean): string {
  const gating = sceneGating(scene, busy);
  const participants = scene.participants
    .map((cid) => escapeHtml(names.get(cid) ?? cid))
    .join(", ");
  const staleFlag = gating.chainStale ? '<span class="stale-marker">chain stale</span>' : "";
  return `<div class="card scene-card" data-scene="${scene.id}">
<h3>${escapeHtml(scene.title)} ${staleFlag}</h3>
<p class="situation">${escapeHtml(scene.situations[scene.situations.length - 1]?.text ?? scene.initial_situation)}</p>
<p class="participants">${participants}</p>
<span class="beat-count">${scene.beats.length} beats</span>
${button("scene-select", "Open", true, ` data-scene="${scene.id}"`)}
${button("recompute", "Recompute", gating.canRecompute, ` data-scene="${scene.id}"`)}
</div>`;
}

export function renderSegmentCard(scene: SceneDoc, segment: SegmentDoc, busy: boolean): string {
  const stale = segment.stale ? '<span class="stale-marker">stale</span>' : "";
  const origin = `<span class="badge badge-${segment.origin}">${segment.origin}</span>`;
  return `<div class="card segment-card" data-segment="${segment.beat_index}">
<header>Segment ${segment.beat_index} ${origin} ${stale}</header>
<p class="segment-text">${escapeHtml(segment.text)}</p>
${button("segment-regenerate", "Regenerate", canRegenerateSegment(scene, segment.beat_index, busy), ` data-scene="${scene.id}" data-index="${segment.beat_index}"`)}
${button("segment-edit", "Edit", !busy, ` data-scene="${scene.id}" data-index="${segment.beat_index}"`)}
</div>`;
}

export function renderGenerationControls(busy: boolean, scene: SceneDoc | null): string {
  const gating = scene ? sceneGating(scene, busy) : null;
  return `<div class="generation-controls">
<label>temperature
<input type="range" id="temperature" min="0.1" max="2.0" step="0.1" value="0.7">
<span id="temperature-value">0.7</span></label>
<label>adherence
<select id="adherence">
<option value="loose">loose</option>
<option value="moderate" selected>moderate</option>
<option value="strict">strict</option>
</select></label>
${button("beat-simulate", "Simulate", gating?.canSimulate ?? false, scene ? ` data-scene="${scene.id}"` : "")}
${button("beat-nudge", "Nudge", gating?.canNudge ?? false, scene ? ` data-scene="${scene.id}"` : "")}
<input type="text" id="nudge-text" placeholder="desired outcome">
${button("beat-author", "Author", gating?.canAuthor ?? false, scene ? ` data-scene="${scene.id}"` : "")}
<input type="text" id="author-text" placeholder="write the beat yourself">
</div>`;
}

export function renderProgress(view: BoardViewState): string {
  if (view.pendingRequests.length === 0) {
    return '<div id="progress" class="progress idle"></div>';
  }
  const id = view.pendingRequests[view.pendingRequests.length - 1];
  return `<div id="progress" class="progress active" data-request="${id}">working&hellip;</div>`;
}

export function renderBoard(project: ProjectDoc, view: BoardViewState): string {
  const busy = view.pendingRequests.length > 0;
  const names = new Map(project.characters.map((c) => [c.id, c.name]));
  const scene = selectedScene(project, view);
  const gating = scene ? sceneGating(scene, busy) : null;

  const stageTabs = STAGES.map(
    (stage) =>
      `<button class="stage-tab${stage === view.stage ? " active" : ""}" data-action="stage" data-stage="${stage}">${stage}</button>`,
  ).join("");

  const characterCards = project.characters.map(renderCharacterCard).join("\n");
  const sceneCards = project.scenes
    .map((s) => renderSceneCard(s, names, busy))
    .join("\n");
  const beatCards = scene
    ? scene.beats.map((b) => renderBeatCard(scene, b, busy)).join("\n") +
      renderDraftCard(scene, busy)
    : "";
  const segments =
    scene && scene.prose
      ? scene.prose.segments.map((seg) => renderSegmentCard(scene, seg, busy)).join("\n")
      : '<p class="empty">no prose rendered yet</p>';
  const proseStaleFlag =
    scene && gating?.proseStale ? '<span class="stale-marker">document stale</span>' : "";

  return `<div class="board">
<nav class="stages">${stageTabs}</nav>
${renderProgress(view)}
<section class="stage-panel" data-stage="premise">
${renderPremiseCard(project)}
</section>
<section class="stage-panel" data-stage="characters">
${characterCards}
${button("character-add", "Add character", !busy)}
</section>
<section class="stage-panel" data-stage="scenes">
${sceneCards}
${button("scene-add", "Add scene", !busy && project.characters.length > 0)}
</section>
<section class="stage-panel" data-stage="beats">
${renderGenerationControls(busy, scene)}
${beatCards}
</section>
<section class="stage-panel" data-stage="prose">
${button("render", "Render prose", gating?.canRender ?? false, scene ? ` data-scene="${scene.id}"` : "")}
${proseStaleFlag}
${segments}
</section>
</div>`;
}
