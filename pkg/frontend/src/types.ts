// Payload shapes of the sentinel serve API (see the repo README).

export interface FrameEvent {
  tick: number;
  time_s: number;
  risk: number | null;
  threshold: number;
  product_tick: number | null;
  detections: number;
}

export interface AlertEvent {
  tick: number;
  mode: "active" | "passive";
  mission: string;
  severity: "Info" | "Caution" | "Warning" | "Critical";
  text: string;
  evidence: string[];
  fallback: boolean;
}

export interface EndEvent {
  outcome: "clean" | "collision";
  alerts: number;
}

export type StreamEvent =
  | { kind: "frame"; id: number; data: FrameEvent }
  | { kind: "alert"; id: number; data: AlertEvent }
  | { kind: "end"; id: number; data: EndEvent };

export interface BevSnapshot {
  tick: number;
  cells_x: number;
  cells_y: number;
  resolution: number;
  origin: { x: number; y: number; yaw: number };
  cells_b64: string;
  detections: Array<{
    kind: string;
    x: number;
    y: number;
    yaw: number;
    length: number;
    width: number;
  }>;
  forecasts: Array<{
    track_id: number;
    kind: string;
    points: Array<[number, number, number]>;
  }>;
}

export interface StateSnapshot {
  scenario: string;
  tick: number | null;
  time_s: number | null;
  risk: number | null;
  threshold: number;
  done: boolean;
}

export interface QueryAnswer {
  mission: string;
  final: string;
  severity: string;
  tick: number;
  evidence: string[];
}

export interface ReportSnapshot {
  scenario: string;
  done: boolean;
  tick: number | null;
  alerts: AlertEvent[];
  missions: Record<string, number>;
  collisions: Array<{ tick: number; a: string; b: string; overlap_m: number }>;
  corpus_committed: Array<{ box_id: string; mission: string; outcome: string }>;
}
