/**
 * Server-sent event parsing for the generation progress stream.
 *
 * Frames arrive as `event: <phase>\ndata: <json>\n\n`; chunk boundaries
 * can fall anywhere, so the parser buffers until a blank line completes a
 * frame. Only `data:` lines matter (the payload repeats the phase).
 */

import type { GenerationEvent } from "./types.js";
import type { FetchFn } from "./api.js";

export class SseParser {
  private buffer = "";

  /** Feed a chunk; returns the events completed by it. */
  push(chunk: string): GenerationEvent[] {
    this.buffer += chunk;
    const events: GenerationEvent[] = [];
    let split = this.buffer.indexOf("\n\n");
    while (split >= 0) {
      const frame = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      for (const line of frame.split("\n")) {
        if (line.startsWith("data: ")) {
          events.push(JSON.parse(line.slice("data: ".length)) as GenerationEvent);
        }
      }
      split = this.buffer.indexOf("\n\n");
    }
    return events;
  }
}

const TERMINAL_PHASES = new Set(["done", "failed"]);

/**
 * Subscribe to a generation's event stream; resolves with all events once
 * the terminal one arrives (past events replay, so late subscription is
 * safe). onEvent fires per event for progress display.
 */
export async function followGeneration(
  fetchFn: FetchFn,
  url: string,
  onEvent?: (event: GenerationEvent) => void,
): Promise<GenerationEvent[]> {
  const response = await fetchFn(url, { method: "GET" });
  if (!response.ok || response.body === null) {
    throw new Error(`event stream unavailable (${response.status})`);
  }
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  const events: GenerationEvent[] = [];
  for (;;) {
    const { done, value } = await reader.read();
    if (done) {
      return events;
    }
    for (const event of parser.push(decoder.decode(value, { stream: true }))) {
      events.push(event);
      onEvent?.(event);
      if (TERMINAL_PHASES.has(event.phase)) {
        await reader.cancel().catch(() => undefined);
        return events;
      }
    }
  }
}
