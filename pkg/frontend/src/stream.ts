// SSE reader on fetch streams: works in the browser and in node tests, and
// makes reconnect-with-resume explicit (?since=<last id + 1>).

import type { StreamEvent } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface StreamCallbacks {
  onEvent(ev: StreamEvent): void;
  onStatus(status: "live" | "reconnecting" | "closed"): void;
}

export function parseSseChunk(buffer: string): { events: StreamEvent[]; rest: string } {
  const events: StreamEvent[] = [];
  const blocks = buffer.split("\n\n");
  const rest = blocks.pop() ?? "";
  for (const block of blocks) {
    let kind = "";
    let id = -1;
    let data = "";
    for (const line of block.split("\n")) {
      if (line.startsWith("event: ")) kind = line.slice(7);
      else if (line.startsWith("id: ")) id = Number(line.slice(4));
      else if (line.startsWith("data: ")) data = line.slice(6);
    }
    if ((kind === "frame" || kind === "alert" || kind === "end") && data) {
      events.push({ kind, id, data: JSON.parse(data) } as StreamEvent);
    }
  }
  return { events, rest };
}

export class SessionStream {
  private stopped = false;
  private lastId = -1;

  constructor(
    private baseUrl: string,
    private callbacks: StreamCallbacks,
    private fetchImpl: FetchLike = fetch,
    private retryMs = 500,
  ) {}

  stop(): void {
    this.stopped = true;
  }

  async run(): Promise<void> {
    while (!this.stopped) {
      try {
        const url = `${this.baseUrl}/v1/stream?since=${this.lastId + 1}`;
        const resp = await this.fetchImpl(url);
        if (!resp.ok || !resp.body) {
          throw new Error(`stream returned ${resp.status}`);
        }
        this.callbacks.onStatus("live");
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        let ended = false;
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          const { events, rest } = parseSseChunk(buffer);
          buffer = rest;
          for (const ev of events) {
            this.lastId = Math.max(this.lastId, ev.id);
            this.callbacks.onEvent(ev);
            if (ev.kind === "end") ended = true;
          }
          if (this.stopped) {
            await reader.cancel();
            return;
          }
        }
        if (ended) {
          this.callbacks.onStatus("closed");
          return;
        }
        throw new Error("stream closed before the end event");
      } catch (err) {
        if (this.stopped) return;
        this.callbacks.onStatus("reconnecting");
        await new Promise((r) => setTimeout(r, this.retryMs));
      }
    }
  }
}
