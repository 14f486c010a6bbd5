// Session view state: one reducer applies stream events in order. The
// rendered tick never goes backwards and the alert feed is append-only;
// out-of-order frames (stale reconnect replays) are dropped.

import type { AlertEvent, FrameEvent, StreamEvent } from "./types.js";

export type Connection = "connecting" | "live" | "reconnecting" | "ended";

export interface TranscriptEntry {
  who: "user" | "copilot";
  text: string;
  mission?: string;
}

export interface SessionView {
  tick: number;
  timeS: number;
  risk: number | null;
  threshold: number;
  detections: number;
  alerts: AlertEvent[];
  transcript: TranscriptEntry[];
  connection: Connection;
  outcome: "clean" | "collision" | null;
  lastEventId: number;
}

export function initialView(): SessionView {
  return {
    tick: -1,
    timeS: 0,
    risk: null,
    threshold: NaN,
    detections: 0,
    alerts: [],
    transcript: [],
    connection: "connecting",
    outcome: null,
    lastEventId: -1,
  };
}

export function applyEvent(view: SessionView, ev: StreamEvent): SessionView {
  const next = { ...view, lastEventId: Math.max(view.lastEventId, ev.id) };
  switch (ev.kind) {
    case "frame": {
      const frame = ev.data as FrameEvent;
      if (frame.tick <= view.tick) {
        return view; // stale or duplicate: the rendered tick never decreases
      }
      next.tick = frame.tick;
      next.timeS = frame.time_s;
      next.risk = frame.risk;
      next.threshold = frame.threshold;
      next.detections = frame.detections;
      next.connection = "live";
      return next;
    }
    case "alert": {
      next.alerts = [...view.alerts, ev.data];
      return next;
    }
    case "end": {
      next.outcome = ev.data.outcome;
      next.connection = "ended";
      return next;
    }
  }
}

export function setConnection(view: SessionView, connection: Connection): SessionView {
  if (view.connection === "ended") {
    return view;
  }
  return { ...view, connection };
}

// Threshold changes only land via server acknowledgment (the ack value or a
// later frame event); there is no optimistic path.
export function applyThresholdAck(view: SessionView, value: number): SessionView {
  return { ...view, threshold: value };
}

export function addTranscript(view: SessionView, entry: TranscriptEntry): SessionView {
  return { ...view, transcript: [...view.transcript, entry] };
}
