// Console wiring: one ordered event queue feeds the reducer; rendering runs
// on animation frames from the latest view snapshot.

import { SentinelApi, ApiError } from "./api.js";
import { drawBev } from "./bev.js";
import {
  SessionView,
  addTranscript,
  applyEvent,
  applyThresholdAck,
  initialView,
  setConnection,
} from "./state.js";
import { SessionStream } from "./stream.js";
import type { StreamEvent } from "./types.js";

const BASE = (window as { SENTINEL_URL?: string }).SENTINEL_URL ?? "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class ConsoleApp {
  private view: SessionView = initialView();
  private queue: StreamEvent[] = [];
  private api = new SentinelApi(BASE);
  private stream: SessionStream;
  private bevDirty = false;
  private renderedAlerts = 0;
  private renderedTranscript = 0;

  constructor() {
    this.stream = new SessionStream(BASE, {
      onEvent: (ev) => this.queue.push(ev),
      onStatus: (status) => {
        if (status === "reconnecting") this.view = setConnection(this.view, "reconnecting");
        if (status === "live") this.view = setConnection(this.view, "live");
      },
    });
  }

  start(): void {
    void this.stream.run();
    this.bindControls();
    const loop = () => {
      this.drain();
      this.render();
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  private drain(): void {
    let sawFrame = false;
    while (this.queue.length) {
      const ev = this.queue.shift()!;
      this.view = applyEvent(this.view, ev);
      if (ev.kind === "frame") sawFrame = true;
    }
    if (sawFrame) this.bevDirty = true;
  }

  private bindControls(): void {
    const input = el<HTMLInputElement>("query-input");
    const send = el<HTMLButtonElement>("query-send");
    const queryError = el<HTMLSpanElement>("query-error");
    send.addEventListener("click", () => {
      const text = input.value.trim();
      if (!text) {
        queryError.textContent = "type a question first";
        return; // no POST for empty input
      }
      queryError.textContent = "";
      this.view = addTranscript(this.view, { who: "user", text });
      input.value = "";
      this.api.sendQuery(text).then(
        (answer) => {
          this.view = addTranscript(this.view, {
            who: "copilot",
            text: answer.final,
            mission: answer.mission,
          });
        },
        (err: ApiError) => {
          queryError.textContent = `query failed: ${err.message}`;
        },
      );
    });

    const slider = el<HTMLInputElement>("threshold-slider");
    const thresholdError = el<HTMLSpanElement>("threshold-error");
    slider.addEventListener("change", () => {
      const value = Number(slider.value);
      this.api.setThreshold(value).then(
        (ack) => {
          thresholdError.textContent = "";
          this.view = applyThresholdAck(this.view, ack.threshold);
        },
        (err: ApiError) => {
          thresholdError.textContent = `rejected: ${err.message}`;
        },
      );
    });

    el<HTMLButtonElement>("report-load").addEventListener("click", () => {
      this.api.getReport().then((report) => {
        el<HTMLPreElement>("report-body").textContent = JSON.stringify(report, null, 2);
      });
    });
  }

  private render(): void {
    el<HTMLSpanElement>("tick").textContent = this.view.tick >= 0 ? String(this.view.tick) : "-";
    el<HTMLSpanElement>("clock").textContent = this.view.timeS.toFixed(1);
    el<HTMLSpanElement>("detections").textContent = String(this.view.detections);

    const banner = el<HTMLDivElement>("banner");
    banner.dataset.state = this.view.connection;
    banner.textContent =
      this.view.connection === "reconnecting" ? "connection lost - reconnecting"
      : this.view.connection === "ended" ? `episode ended: ${this.view.outcome}`
      : this.view.connection === "live" ? "live"
      : "connecting";

    const risk = this.view.risk ?? 0;
    const gauge = el<HTMLDivElement>("risk-fill");
    gauge.style.width = `${Math.round(risk * 100)}%`;
    gauge.dataset.band = risk >= 0.8 ? "critical" : risk >= 0.45 ? "warning"
      : risk >= 0.15 ? "caution" : "info";
    el<HTMLSpanElement>("risk-value").textContent = risk.toFixed(2);
    if (!Number.isNaN(this.view.threshold)) {
      el<HTMLSpanElement>("threshold-value").textContent = this.view.threshold.toFixed(2);
    }

    const feed = el<HTMLUListElement>("alert-feed");
    for (; this.renderedAlerts < this.view.alerts.length; this.renderedAlerts++) {
      const a = this.view.alerts[this.renderedAlerts];
      const li = document.createElement("li");
      li.className = `alert ${a.mode} sev-${a.severity.toLowerCase()}`;
      li.textContent = `[t${a.tick}] ${a.severity} ${a.mission}: ${a.text}`;
      feed.prepend(li);
    }

    const transcript = el<HTMLUListElement>("transcript");
    for (; this.renderedTranscript < this.view.transcript.length; this.renderedTranscript++) {
      const entry = this.view.transcript[this.renderedTranscript];
      const li = document.createElement("li");
      li.className = `bubble ${entry.who}`;
      li.textContent = entry.mission ? `(${entry.mission}) ${entry.text}` : entry.text;
      transcript.appendChild(li);
    }

    if (this.bevDirty) {
      this.bevDirty = false;
      this.api.getBev().then(
        (bev) => drawBev(el<HTMLCanvasElement>("bev"), bev, 3),
        () => undefined, // no grid yet
      );
    }
  }
}

new ConsoleApp().start();
