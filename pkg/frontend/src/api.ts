/**
 * HTTP client for the story service.
 *
 * BYTE CONTRACT: request bodies are compact JSON with fields in exactly
 * the order documented in API.md; the contract tests compare the emitted
 * bytes against the documented examples literally. Bodies are therefore
 * built from object literals in documented order and JSON.stringify'd,
 * never assembled ad hoc at call sites.
 */

import type {
  ApiError,
  DraftDoc,
  GenParamsDoc,
  ProjectDoc,
  ProjectRow,
  StyleDoc,
  TraitDoc,
} from "./types.js";

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export const DEFAULT_PARAMS: GenParamsDoc = {
  temperature: 0.7,
  adherence: "moderate",
  context_budget: 4000,
};

export class ApiRequestError extends Error {
  readonly code: string;
  readonly status: number;
  readonly details: Record<string, unknown>;

  constructor(status: number, error: ApiError) {
    super(`${error.code}: ${error.message}`);
    this.code = error.code;
    this.status = status;
    this.details = error.details ?? {};
  }
}

interface MutationResult {
  project: ProjectDoc;
  request_id?: string;
  draft?: DraftDoc;
  beat_index?: number;
  recomputed?: number;
  segments?: number;
  character_id?: string;
  scene_id?: string;
}

export class ApiClient {
  private requestCounter = 0;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchFn = (url, init) => fetch(url, init),
  ) {}

  /** Client-chosen generation ids let the UI subscribe before acting. */
  nextRequestId(): string {
    this.requestCounter += 1;
    return `gen-ui-${String(this.requestCounter).padStart(6, "0")}`;
  }

  private async request(method: string, path: string, body?: string): Promise<MutationResult> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = body;
      init.headers = { "Content-Type": "application/json" };
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (response.status === 204) {
      return { project: undefined as unknown as ProjectDoc };
    }
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiRequestError(response.status, (payload as { error: ApiError }).error);
    }
    return payload as unknown as MutationResult;
  }

  // ── projects ──────────────────────────────────────────────────────────

  async listProjects(): Promise<ProjectRow[]> {
    const result = await this.request("GET", "/projects");
    return (result as unknown as { projects: ProjectRow[] }).projects;
  }

  async getProject(projectId: string): Promise<ProjectDoc> {
    return (await this.request("GET", `/projects/${projectId}`)).project;
  }

  async createProject(premise: string, styleDefaults?: Partial<StyleDoc>): Promise<ProjectDoc> {
    const body =
      styleDefaults === undefined
        ? JSON.stringify({ premise })
        : JSON.stringify({ premise, style_defaults: styleDefaults });
    return (await this.request("POST", "/projects", body)).project;
  }

  async addCharacter(
    projectId: string,
    name: string,
    description: string,
    traits: TraitDoc[],
    goals: string[],
  ): Promise<MutationResult> {
    const body = JSON.stringify({ name, description, traits, goals });
    return this.request("POST", `/projects/${projectId}/characters`, body);
  }

  async patchCharacter(
    projectId: string,
    characterId: string,
    fields: Partial<{ name: string; description: string; traits: TraitDoc[]; goals: string[] }>,
  ): Promise<MutationResult> {
    return this.request(
      "PATCH",
      `/projects/${projectId}/characters/${characterId}`,
      JSON.stringify(fields),
    );
  }

  async addScene(
    projectId: string,
    title: string,
    initialSituation: string,
    participants: string[],
  ): Promise<MutationResult> {
    const body = JSON.stringify({
      title,
      initial_situation: initialSituation,
      participants,
    });
    return this.request("POST", `/projects/${projectId}/scenes`, body);
  }

  // ── beat generation (drive_generation actions) ────────────────────────

  simulate(projectId: string, sceneId: string, params: GenParamsDoc, requestId: string) {
    const body = JSON.stringify({
      params: { temperature: params.temperature, adherence: params.adherence, context_budget: params.context_budget },
      request_id: requestId,
    });
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}/beats:simulate`, body);
  }

  nudge(projectId: string, sceneId: string, nudgeText: string, params: GenParamsDoc, requestId: string) {
    const body = JSON.stringify({
      nudge_text: nudgeText,
      params: { temperature: params.temperature, adherence: params.adherence, context_budget: params.context_budget },
      request_id: requestId,
    });
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}/beats:nudge`, body);
  }

  author(
    projectId: string,
    sceneId: string,
    text: string,
    polish: boolean,
    params: GenParamsDoc,
    requestId: string,
  ) {
    const body = JSON.stringify({
      text,
      polish,
      params: { temperature: params.temperature, adherence: params.adherence, context_budget: params.context_budget },
      request_id: requestId,
    });
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}/beats:author`, body);
  }

  accept(projectId: string, sceneId: string, requestId: string, participants?: string[]) {
    const body =
      participants === undefined
        ? JSON.stringify({ request_id: requestId })
        : JSON.stringify({ participants, request_id: requestId });
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}/beats:accept`, body);
  }

  reject(projectId: string, sceneId: string) {
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}/beats:reject`, "{}");
  }

  editBeat(projectId: string, sceneId: string, index: number, text: string) {
    return this.request(
      "PATCH",
      `/projects/${projectId}/scenes/${sceneId}/beats/${index}`,
      JSON.stringify({ text }),
    );
  }

  recompute(projectId: string, sceneId: string, requestId: string) {
    const body = JSON.stringify({ request_id: requestId });
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}:recompute`, body);
  }

  // ── prose ─────────────────────────────────────────────────────────────

  render(projectId: string, sceneId: string, style: Partial<StyleDoc>, params: GenParamsDoc, requestId: string) {
    const body = JSON.stringify({
      style,
      params: { temperature: params.temperature, adherence: params.adherence, context_budget: params.context_budget },
      request_id: requestId,
    });
    return this.request("POST", `/projects/${projectId}/scenes/${sceneId}:render`, body);
  }

  regenerateSegment(
    projectId: string,
    sceneId: string,
    index: number,
    style: Partial<StyleDoc>,
    params: GenParamsDoc,
    requestId: string,
  ) {
    const body = JSON.stringify({
      style,
      continuity: "loose",
      params: { temperature: params.temperature, adherence: params.adherence, context_budget: params.context_budget },
      request_id: requestId,
    });
    return this.request(
      "POST",
      `/projects/${projectId}/scenes/${sceneId}/segments/${index}:regenerate`,
      body,
    );
  }

  editSegment(projectId: string, sceneId: string, index: number, text: string) {
    return this.request(
      "PATCH",
      `/projects/${projectId}/scenes/${sceneId}/segments/${index}`,
      JSON.stringify({ text }),
    );
  }

  async exportText(projectId: string, scope: "scene" | "whole_story", format: "plain" | "markdown", sceneId?: string): Promise<string> {
    let path = `/projects/${projectId}/export?scope=${scope}&format=${format}`;
    if (sceneId !== undefined) {
      path += `&scene=${sceneId}`;
    }
    const response = await this.fetchFn(this.baseUrl + path, { method: "GET" });
    if (!response.ok) {
      const payload = (await response.json()) as { error: ApiError };
      throw new ApiRequestError(response.status, payload.error);
    }
    return response.text();
  }

  eventsUrl(requestId: string): string {
    return `${this.baseUrl}/generations/${requestId}/events`;
  }
}
