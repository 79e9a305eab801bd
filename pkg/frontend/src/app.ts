/**
 * Browser bootstrap: wires the board renderer to the service.
 *
 * State discipline: the project document always comes from the service
 * response; nothing is applied optimistically. One mutation per project
 * is in flight at a time (everything is disabled while busy), and
 * generation actions subscribe to the event stream for progress.
 */

import { ApiClient, ApiRequestError, DEFAULT_PARAMS } from "./api.js";
import { renderBoard } from "./board.js";
import { BoardViewState, Stage, initialViewState } from "./gating.js";
import { followGeneration } from "./sse.js";
import type { GenParamsDoc, ProjectDoc } from "./types.js";

const root = document.getElementById("app");
const api = new ApiClient(window.location.origin.replace(/\/$/, ""));

let project: ProjectDoc | null = null;
const view: BoardViewState = initialViewState();

function currentParams(): GenParamsDoc {
  const temperature = Number(
    (document.getElementById("temperature") as HTMLInputElement | null)?.value ?? "0.7",
  );
  const adherence = ((document.getElementById("adherence") as HTMLSelectElement | null)?.value ??
    "moderate") as GenParamsDoc["adherence"];
  return { temperature, adherence, context_budget: DEFAULT_PARAMS.context_budget };
}

function redraw(): void {
  if (root === null) {
    return;
  }
  if (project === null) {
    root.innerHTML = '<p class="empty">no project loaded</p>';
    return;
  }
  root.innerHTML = renderBoard(project, view);
  for (const panel of root.querySelectorAll<HTMLElement>(".stage-panel")) {
    panel.style.display = panel.dataset.stage === view.stage ? "block" : "none";
  }
}

function showError(error: unknown): void {
  const banner = document.getElementById("error-banner");
  if (banner === null) {
    return;
  }
  banner.textContent =
    error instanceof ApiRequestError ? `${error.code}: ${error.message}` : String(error);
  banner.style.display = "block";
  setTimeout(() => {
    banner.style.display = "none";
  }, 6000);
}

async function generation(
  fn: (requestId: string) => Promise<{ project: ProjectDoc }>,
): Promise<void> {
  if (project === null || view.pendingRequests.length > 0) {
    return;
  }
  const requestId = api.nextRequestId();
  view.pendingRequests.push(requestId);
  redraw();
  const follow = followGeneration((url, init) => fetch(url, init), api.eventsUrl(requestId)).catch(
    () => [],
  );
  try {
    const result = await fn(requestId);
    project = result.project;
  } catch (error) {
    showError(error);
  } finally {
    await follow;
    view.pendingRequests = view.pendingRequests.filter((id) => id !== requestId);
    redraw();
  }
}

async function mutation(fn: () => Promise<{ project: ProjectDoc }>): Promise<void> {
  if (project === null || view.pendingRequests.length > 0) {
    return;
  }
  try {
    const result = await fn();
    project = result.project;
  } catch (error) {
    showError(error);
  }
  redraw();
}

function sceneIdOf(target: HTMLElement): string {
  return target.dataset.scene ?? view.selectedSceneId ?? project?.scenes[0]?.id ?? "";
}

async function dispatch(target: HTMLElement): Promise<void> {
  if (project === null) {
    return;
  }
  const pid = project.id;
  const action = target.dataset.action;
  const sceneId = sceneIdOf(target);
  const index = Number(target.dataset.index ?? "-1");
  const params = currentParams();
  switch (action) {
    case "stage":
      view.stage = (target.dataset.stage ?? "premise") as Stage;
      redraw();
      break;
    case "scene-select":
      view.selectedSceneId = sceneId;
      view.stage = "beats";
      redraw();
      break;
    case "beat-simulate":
      await generation((rid) => api.simulate(pid, sceneId, params, rid));
      break;
    case "beat-nudge": {
      const nudge = (document.getElementById("nudge-text") as HTMLInputElement | null)?.value ?? "";
      if (nudge.trim() === "") {
        showError(new Error("nudge text is empty"));
        return;
      }
      await generation((rid) => api.nudge(pid, sceneId, nudge, params, rid));
      break;
    }
    case "beat-author": {
      const text = (document.getElementById("author-text") as HTMLInputElement | null)?.value ?? "";
      if (text.trim() === "") {
        showError(new Error("beat text is empty"));
        return;
      }
      await generation((rid) => api.author(pid, sceneId, text, false, params, rid));
      break;
    }
    case "beat-accept":
      await generation((rid) => api.accept(pid, sceneId, rid));
      break;
    case "beat-reject":
      await mutation(() => api.reject(pid, sceneId));
      break;
    case "beat-edit": {
      const scene = project.scenes.find((s) => s.id === sceneId);
      const current = scene?.beats[index]?.text ?? "";
      const text = window.prompt("Edit beat", current);
      if (text !== null && text.trim() !== "") {
        await mutation(() => api.editBeat(pid, sceneId, index, text));
      }
      break;
    }
    case "recompute":
      await generation((rid) => api.recompute(pid, sceneId, rid));
      break;
    case "render":
      await generation((rid) => api.render(pid, sceneId, {}, params, rid));
      break;
    case "segment-regenerate":
      await generation((rid) => api.regenerateSegment(pid, sceneId, index, {}, params, rid));
      break;
    case "segment-edit": {
      const scene = project.scenes.find((s) => s.id === sceneId);
      const current = scene?.prose?.segments[index]?.text ?? "";
      const text = window.prompt("Edit segment", current);
      if (text !== null && text.trim() !== "") {
        await mutation(() => api.editSegment(pid, sceneId, index, text));
      }
      break;
    }
    case "character-add": {
      const name = window.prompt("Character name");
      if (name !== null && name.trim() !== "") {
        const description = window.prompt("Description") ?? "";
        await mutation(() => api.addCharacter(pid, name, description, [], []) as Promise<{ project: ProjectDoc }>);
      }
      break;
    }
    case "scene-add": {
      const title = window.prompt("Scene title");
      if (title === null || title.trim() === "") {
        return;
      }
      const situation = window.prompt("Initial situation");
      if (situation === null || situation.trim() === "") {
        return;
      }
      const participants = project.characters.map((c) => c.id);
      await mutation(() => api.addScene(pid, title, situation, participants) as Promise<{ project: ProjectDoc }>);
      break;
    }
    default:
      break;
  }
}

async function boot(): Promise<void> {
  try {
    const rows = await api.listProjects();
    if (rows.length === 0) {
      const premise = window.prompt("Premise for a new story") ?? "";
      if (premise.trim() === "") {
        return;
      }
      project = await api.createProject(premise);
    } else {
      const first = rows[0];
      if (first !== undefined) {
        project = await api.getProject(first.id);
      }
    }
    if (project !== null) {
      view.projectId = project.id;
    }
  } catch (error) {
    showError(error);
  }
  redraw();

  root?.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (target !== null && !(target as HTMLButtonElement).disabled) {
      void dispatch(target);
    }
  });
  root?.addEventListener("input", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.id === "temperature") {
      const label = document.getElementById("temperature-value");
      if (label !== null) {
        label.textContent = target.value;
      }
    }
  });
}

void boot();
