/** Disable-gating mirrors the engine preconditions. */

import { describe, expect, it } from "vitest";

import { canRegenerateSegment, chainIsStale, proseIsStale, sceneGating } from "../src/gating.js";
import { milkProject, withDraft, withProse, withStaleChain } from "./fixture.js";
import type { SceneDoc } from "../src/types.js";

function scene(project = milkProject()): SceneDoc {
  return project.scenes[0] as SceneDoc;
}

describe("sceneGating", () => {
  it("fresh scene with beats: generate and render enabled, accept/reject disabled", () => {
    const g = sceneGating(scene());
    expect(g.canSimulate).toBe(true);
    expect(g.canNudge).toBe(true);
    expect(g.canAuthor).toBe(true);
    expect(g.canAccept).toBe(false);
    expect(g.canReject).toBe(false);
    expect(g.canRender).toBe(true);
    expect(g.canRecompute).toBe(false);
  });

  it("pending draft disables simulate/nudge/author and enables accept/reject", () => {
    const g = sceneGating(scene(withDraft(milkProject())));
    expect(g.hasDraft).toBe(true);
    expect(g.canSimulate).toBe(false);
    expect(g.canNudge).toBe(false);
    expect(g.canAuthor).toBe(false);
    expect(g.canAccept).toBe(true);
    expect(g.canReject).toBe(true);
  });

  it("stale chain disables generation and render, enables recompute", () => {
    const s = scene(withStaleChain(milkProject()));
    expect(chainIsStale(s)).toBe(true);
    const g = sceneGating(s);
    expect(g.canSimulate).toBe(false);
    expect(g.canNudge).toBe(false);
    expect(g.canRender).toBe(false);
    expect(g.canRecompute).toBe(true);
  });

  it("zero beats disables render", () => {
    const s = scene();
    s.beats = [];
    s.situations = [s.situations[0]!];
    expect(sceneGating(s).canRender).toBe(false);
  });

  it("an in-flight mutation disables everything", () => {
    const g = sceneGating(scene(), true);
    expect(Object.entries(g).filter(([k]) => k.startsWith("can")).every(([, v]) => v === false)).toBe(
      true,
    );
  });
});

describe("prose staleness and regeneration", () => {
  it("document staleness tracks segment flags and beat count drift", () => {
    const project = withProse(milkProject());
    const s = scene(project);
    expect(proseIsStale(s)).toBe(false);
    s.prose!.segments[0]!.stale = true;
    expect(proseIsStale(s)).toBe(true);
    s.prose!.segments[0]!.stale = false;
    s.beats.push({ ...s.beats[0]!, index: 1 });
    s.situations.push({ text: "later", stale: false, derivation: "provider_update" });
    expect(proseIsStale(s)).toBe(true);
  });

  it("segment regeneration gated by document presence and upstream staleness", () => {
    const bare = scene();
    expect(canRegenerateSegment(bare, 0)).toBe(false);
    const rendered = scene(withProse(milkProject()));
    expect(canRegenerateSegment(rendered, 0)).toBe(true);
    expect(canRegenerateSegment(rendered, 5)).toBe(false);
    const stale = scene(withProse(withStaleChain(milkProject())));
    expect(canRegenerateSegment(stale, 0)).toBe(true); // situations[0] fresh
    stale.situations[0]!.stale = true;
    expect(canRegenerateSegment(stale, 0)).toBe(false);
  });
});
