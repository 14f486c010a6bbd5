import { describe, expect, it } from "vitest";

import {
  applyEvent,
  applyThresholdAck,
  initialView,
  setConnection,
} from "../src/state.js";
import type { AlertEvent, FrameEvent, StreamEvent } from "../src/types.js";

function frame(tick: number, over: Partial<FrameEvent> = {}): StreamEvent {
  return {
    kind: "frame",
    id: tick,
    data: {
      tick,
      time_s: tick / 10,
      risk: 0.2,
      threshold: 0.4,
      product_tick: tick - 1,
      detections: 3,
      ...over,
    },
  };
}

function alert(tick: number, mode: "active" | "passive" = "passive"): StreamEvent {
  const data: AlertEvent = {
    tick,
    mode,
    mission: "accident_prediction",
    severity: "Warning",
    text: `watch out ${tick}`,
    evidence: ["track:1"],
    fallback: false,
  };
  return { kind: "alert", id: 1000 + tick, data };
}

describe("session view reducer", () => {
  it("advances on in-order frames", () => {
    let view = initialView();
    view = applyEvent(view, frame(41));
    view = applyEvent(view, frame(42));
    expect(view.tick).toBe(42);
    expect(view.connection).toBe("live");
  });

  it("discards out-of-order frames", () => {
    let view = initialView();
    view = applyEvent(view, frame(42, { risk: 0.9 }));
    const before = view;
    view = applyEvent(view, frame(40, { risk: 0.1 }));
    expect(view.tick).toBe(42);
    expect(view.risk).toBe(0.9);
    expect(view).toBe(before); // unchanged reference: event fully ignored
  });

  it("keeps the alert feed append-only", () => {
    let view = initialView();
    view = applyEvent(view, alert(5));
    const first = view.alerts;
    view = applyEvent(view, alert(7));
    view = applyEvent(view, frame(8));
    expect(view.alerts.map((a) => a.tick)).toEqual([5, 7]);
    expect(view.alerts.slice(0, 1)).toEqual(first);
  });

  it("tracks the highest seen event id for resume", () => {
    let view = initialView();
    view = applyEvent(view, frame(3));
    view = applyEvent(view, alert(3));
    expect(view.lastEventId).toBe(1003);
  });

  it("end event freezes the connection state", () => {
    let view = initialView();
    view = applyEvent(view, frame(10));
    view = applyEvent(view, { kind: "end", id: 99, data: { outcome: "clean", alerts: 2 } });
    expect(view.outcome).toBe("clean");
    expect(view.connection).toBe("ended");
    view = setConnection(view, "reconnecting");
    expect(view.connection).toBe("ended");
  });

  it("threshold only moves on server acknowledgment", () => {
    let view = initialView();
    view = applyEvent(view, frame(1, { threshold: 0.4 }));
    expect(view.threshold).toBe(0.4);
    view = applyThresholdAck(view, 0.6);
    expect(view.threshold).toBe(0.6);
    // the next frame reflects whatever the server says
    view = applyEvent(view, frame(2, { threshold: 0.6 }));
    expect(view.threshold).toBe(0.6);
  });
});
