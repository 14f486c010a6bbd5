"""Serve mode: one live session behind a small JSON-over-HTTP API.

The simulation/reasoning loop runs in a single background thread; HTTP
handlers exchange messages with it through a lock-protected mailbox
(queries and threshold changes apply at the next tick). /v1/stream is a
server-sent-events feed of frame and alert events.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .episode import ReasoningSession, RunConfig, load_config_scenario, simulate_perception
from .reasoning.corpus import CorpusStore
from .v2x import quantize_cells


@dataclass
class QueryTicket:
    text: str
    done: threading.Event = field(default_factory=threading.Event)
    result: dict | None = None
    error: str | None = None


class LiveSession:
    def __init__(self, cfg: RunConfig, pace: float = 1.0):
        self.cfg = cfg
        self.pace = max(pace, 1e-3)
        scenario = load_config_scenario(cfg)
        self.trace = simulate_perception(scenario, cfg.seed, cfg.channel, cfg.staleness_s)
        self.episode_id = f"{self.trace.scenario_id}-s{self.trace.seed}"
        self.session = ReasoningSession(
            self.episode_id, cfg, CorpusStore(cfg.corpus_path), cfg.make_client()
        )
        self.lock = threading.Lock()
        self.events: list[dict] = []
        self._queries: deque[QueryTicket] = deque()
        self._pending_threshold: float | None = None
        self.current = None  # latest TickRecord
        self.done = False
        self.committed = []
        self._thread: threading.Thread | None = None

    # -- control surface -----------------------------------------------------

    def submit_query(self, text: str) -> QueryTicket:
        ticket = QueryTicket(text=text)
        with self.lock:
            if self.done:
                ticket.error = "episode finished"
                ticket.done.set()
            else:
                self._queries.append(ticket)
        return ticket

    def set_threshold(self, value: float):
        with self.lock:
            self._pending_threshold = value

    def _emit(self, kind: str, data: dict):
        self.events.append({"event": kind, "data": data, "id": len(self.events)})

    # -- loop ------------------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self):
        dt_wall = self.trace.dt_s / self.pace
        for tr in self.trace.ticks:
            t0 = time.monotonic()
            with self.lock:
                if self._pending_threshold is not None:
                    self.session.threshold = self._pending_threshold
                    self._pending_threshold = None
                ticket = self._queries[0] if self._queries else None
                before = len(self.session.frames)
                recs = self.session.step(tr, [ticket.text] if ticket else None)
                if ticket is not None:
                    frame = None
                    for f in self.session.frames[before:]:
                        if f.mode == "active":
                            frame = f
                    if frame is not None:
                        self._queries.popleft()
                        if frame.decision is not None:
                            ticket.result = {
                                "mission": frame.mission.value,
                                "final": frame.decision.final,
                                "severity": frame.decision.severity,
                                "tick": tr.tick,
                                "evidence": list(frame.alert.evidence) if frame.alert else [],
                            }
                        else:
                            ticket.error = "no decision"
                        ticket.done.set()
                self.current = tr
                risk = self.session.last_risk
                self._emit("frame", {
                    "tick": tr.tick,
                    "time_s": tr.now_s,
                    "risk": risk.value if risk else None,
                    "threshold": self.session.threshold,
                    "product_tick": tr.product.tick if tr.product else None,
                    "detections": len(tr.product.detections) if tr.product else 0,
                })
                for rec in recs:
                    if rec.get("type") == "alert":
                        self._emit("alert", rec)
            elapsed = time.monotonic() - t0
            time.sleep(max(0.0, dt_wall - elapsed))
        with self.lock:
            self.committed = self.session.finalize(self.trace.collision)
            self.done = True
            while self._queries:
                ticket = self._queries.popleft()
                ticket.error = "episode finished"
                ticket.done.set()
            self._emit("end", {
                "outcome": "collision" if self.trace.collision else "clean",
                "alerts": len(self.session.alerts),
            })

    # -- snapshots -------------------------------------------------------------

    def state_snapshot(self) -> dict:
        with self.lock:
            tr = self.current
            risk = self.session.last_risk
            alerts = [
                {
                    "tick": a.tick, "mode": a.mode, "mission": a.mission.value,
                    "severity": a.severity, "text": a.text,
                }
                for a in self.session.alerts[-5:]
            ]
            return {
                "scenario": self.trace.scenario_id,
                "tick": tr.tick if tr else None,
                "time_s": tr.now_s if tr else None,
                "risk": risk.value if risk else None,
                "threshold": self.session.threshold,
                "done": self.done,
                "alerts_tail": alerts,
            }

    def bev_snapshot(self) -> dict | None:
        with self.lock:
            tr = self.current
            if tr is None or tr.product is None:
                return None
            grid = tr.product.fused_grid
            tracks = [
                {
                    "track_id": f.track_id, "kind": f.kind,
                    "points": [[round(t, 3), round(x, 3), round(y, 3)]
                               for t, x, y in f.points[::10]],
                }
                for f in tr.product.forecasts
            ]
            dets = [
                {"kind": d.kind, "x": d.x, "y": d.y, "yaw": d.yaw,
                 "length": d.length, "width": d.width}
                for d in tr.product.detections
            ]
            return {
                "tick": tr.product.tick,
                "cells_x": grid.spec.cells_x,
                "cells_y": grid.spec.cells_y,
                "resolution": grid.spec.resolution_m_per_cell,
                "origin": {"x": grid.spec.origin.x, "y": grid.spec.origin.y,
                           "yaw": grid.spec.origin.yaw},
                "cells_b64": base64.b64encode(quantize_cells(grid.cells)).decode(),
                "detections": dets,
                "forecasts": tracks,
            }

    def report_snapshot(self) -> dict:
        with self.lock:
            missions: dict[str, int] = {}
            alerts = []
            for a in self.session.alerts:
                missions[a.mission.value] = missions.get(a.mission.value, 0) + 1
                alerts.append({
                    "tick": a.tick, "mode": a.mode, "mission": a.mission.value,
                    "severity": a.severity, "text": a.text,
                    "evidence": list(a.evidence), "fallback": a.fallback,
                })
            collisions = []
            for tr in self.trace.ticks[: (self.current.tick + 1) if self.current else 0]:
                for c in tr.collisions:
                    collisions.append({
                        "tick": c.tick, "a": c.actor_a, "b": c.actor_b,
                        "overlap_m": c.overlap_m,
                    })
            return {
                "scenario": self.trace.scenario_id,
                "done": self.done,
                "tick": self.current.tick if self.current else None,
                "alerts": alerts,
                "missions": missions,
                "collisions": collisions,
                "corpus_committed": [
                    {"box_id": b.box_id, "mission": b.mission.value, "outcome": b.outcome}
                    for b in self.committed
                ],
            }


class _Handler(BaseHTTPRequestHandler):
    session: LiveSession | None  # attached by make_server once built

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _json(self, code: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _starting(self) -> bool:
        # the port binds before the session finishes precomputing
        if self.session is None:
            self._json(503, {"error": "session starting"})
            return True
        return False

    def _read_body(self) -> dict | None:
        try:
            n = int(self.headers.get("Content-Length", "0"))
            return json.loads(self.rfile.read(n).decode("utf-8")) if n else {}
        except (ValueError, json.JSONDecodeError):
            return None

    def do_GET(self):
        if self._starting():
            return
        path = self.path.split("?")[0]
        if path == "/v1/state":
            self._json(200, self.session.state_snapshot())
        elif path == "/v1/bev":
            snap = self.session.bev_snapshot()
            if snap is None:
                self._json(404, {"error": "no fused grid yet"})
            else:
                self._json(200, snap)
        elif path == "/v1/report":
            self._json(200, self.session.report_snapshot())
        elif path == "/v1/stream":
            self._stream()
        else:
            self._json(404, {"error": f"no route {path}"})

    def do_POST(self):
        if self._starting():
            return
        path = self.path.split("?")[0]
        body = self._read_body()
        if body is None:
            self._json(400, {"error": "body must be JSON"})
            return
        if path == "/v1/query":
            text = body.get("text", "")
            if not isinstance(text, str) or not text.strip():
                self._json(400, {"error": "query text must be non-empty"})
                return
            ticket = self.session.submit_query(text)
            if not ticket.done.wait(timeout=30.0):
                self._json(504, {"error": "no decision before timeout"})
                return
            if ticket.error:
                self._json(409, {"error": ticket.error})
            else:
                self._json(200, ticket.result)
        elif path == "/v1/threshold":
            value = body.get("value")
            if not isinstance(value, (int, float)) or isinstance(value, bool) \
                    or not 0.0 <= float(value) <= 1.0:
                self._json(400, {"error": "value must be a number in [0, 1]"})
                return
            self.session.set_threshold(float(value))
            self._json(200, {"threshold": float(value), "applies": "next tick"})
        else:
            self._json(404, {"error": f"no route {path}"})

    def _stream(self):
        since = 0
        if "?" in self.path:
            for part in self.path.split("?", 1)[1].split("&"):
                if part.startswith("since="):
                    try:
                        since = int(part.split("=", 1)[1])
                    except ValueError:
                        pass
        last_id = self.headers.get("Last-Event-ID")
        if last_id is not None:
            try:
                since = int(last_id) + 1
            except ValueError:
                pass
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        idx = since
        try:
            while True:
                with self.session.lock:
                    chunk = self.session.events[idx:]
                    finished = self.session.done
                for ev in chunk:
                    payload = (
                        f"event: {ev['event']}\n"
                        f"id: {ev['id']}\n"
                        f"data: {json.dumps(ev['data'])}\n\n"
                    )
                    self.wfile.write(payload.encode("utf-8"))
                    self.wfile.flush()
                idx += len(chunk)
                if finished and idx >= len(self.session.events):
                    break
                time.sleep(0.01)
        except (BrokenPipeError, ConnectionResetError):
            pass


def make_server(cfg: RunConfig, port: int = 0, pace: float = 1.0):
    """Bind the HTTP server, build the session, start its loop."""
    handler = type("SessionHandler", (_Handler,), {"session": None})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.daemon_threads = True
    session = LiveSession(cfg, pace)
    handler.session = session
    session.start()
    return server, session


def serve_session(cfg: RunConfig, port: int, pace: float = 1.0):
    """CLI entry: answer 503 while the session precomputes its trace."""
    handler = type("SessionHandler", (_Handler,), {"session": None})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.daemon_threads = True

    def build():
        session = LiveSession(cfg, pace)
        handler.session = session
        session.start()

    threading.Thread(target=build, daemon=True).start()
    host, bound_port = server.server_address[:2]
    print(f"serving live session on http://{host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
