"""End-to-end episode runner and the newline-JSON episode log.

The per-tick pipeline is world -> sense -> encode -> channel -> ingest ->
fusion -> risk -> reasoning. Perception is independent of the reasoning
configuration, so it is simulated once into a PerceptionTrace that the
reasoning pass (and the sweep harnesses) replay.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import os
from dataclasses import dataclass, field, replace

from .errors import ConfigError, IoError, LlmTimeout
from .fusion import FusionCenter, FusionConfig, PerceptionProduct, to_global_frame
from .geometry import Pose
from .metrics import TickTruth, tick_truth_from_product
from .reasoning.corpus import CorpusStore
from .reasoning.llm import MockLlmClient, HttpLlmClient, invoke_llm
from .reasoning.loop import (
    DecisionFrame,
    PassiveMonitor,
    QueryJob,
    SafetyAlert,
    emit_alert,
    finalize_episode,
    submit_active_query,
)
from .reasoning.missions import load_rubric
from .reasoning.prompts import build_input_bundle, generate_prompt
from .reasoning.risk import RiskConfig, compute_risk_intensity
from .reasoning.corpus import sample_corpus
from .sensing import (
    BevGrid,
    GridSpec,
    SensorAgent,
    SensorConfig,
    attach_grid,
    rasterize_local_bev,
    sense_frame,
)
from .v2x import Channel, ChannelModel, IngestBuffer, decode_message, encode_message
from .world import (
    CollisionEvent,
    Scenario,
    bundled_scenario,
    detect_collisions,
    load_scenario,
    world_states,
)

LOG_SCHEMA_VERSION = 1

# prompt intensity levels: character budget and corpus sample count
PROMPT_LEVELS = {
    "Mini": (4000, 1),
    "Middle": (16000, 5),
    "High": (48000, 10),
}

COMMON_GRID = GridSpec(cells_x=240, cells_y=240, resolution_m_per_cell=0.5,
                       origin=Pose(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class RunConfig:
    scenario: str  # bundled name or a file path
    seed: int | None = None
    threshold: float = 0.4
    llm: str = "mock"
    out_dir: str | None = None
    renewal_rate: float = 0.5
    level: str = "Middle"
    cooldown_s: float = 3.0
    staleness_s: float = 0.3
    llm_timeout_s: float = 10.0
    corpus_path: str | None = None
    channel: ChannelModel = field(default_factory=ChannelModel)

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} outside [0, 1]")
        if not 0.0 <= self.renewal_rate <= 1.0:
            raise ConfigError(f"renewal rate {self.renewal_rate} outside [0, 1]")
        if self.level not in PROMPT_LEVELS:
            raise ConfigError(f"level '{self.level}' not one of {sorted(PROMPT_LEVELS)}")
        if self.llm != "mock" and not self.llm.startswith("http:"):
            raise ConfigError("llm must be 'mock' or 'http:<endpoint>'")

    def make_client(self):
        if self.llm == "mock":
            return MockLlmClient()
        return HttpLlmClient(self.llm.removeprefix("http:"))


def load_config_scenario(cfg: RunConfig) -> Scenario:
    if os.path.sep in cfg.scenario or cfg.scenario.endswith(".json"):
        if not os.path.exists(cfg.scenario):
            raise IoError(f"scenario file not found: {cfg.scenario}")
        with open(cfg.scenario, encoding="utf-8") as f:
            return load_scenario(f.read())
    try:
        return bundled_scenario(cfg.scenario)
    except FileNotFoundError as e:
        raise IoError(str(e)) from e


# ---------------------------------------------------------------------------
# perception phase

@dataclass(frozen=True)
class TickRecord:
    tick: int
    now_s: float
    product: PerceptionProduct | None  # latest product as of this tick
    ego_xy: tuple[float, float] | None
    violation: bool
    gt_actors: tuple
    collisions: tuple[CollisionEvent, ...]


@dataclass(frozen=True)
class PerceptionTrace:
    scenario_id: str
    seed: int
    dt_s: float
    ticks: tuple[TickRecord, ...]
    collision: CollisionEvent | None
    # optional: per tick, per agent, global-frame detections (for recall studies)
    agent_detections: tuple | None = None


def build_agents(scenario: Scenario) -> list[SensorAgent]:
    agents = []
    num = 0
    for actor in scenario.actors:
        if actor.sensing:
            agents.append(SensorAgent(
                agent_num=num, pose=Pose(actor.x, actor.y, actor.yaw),
                config=SensorConfig(), actor_id=actor.actor_id,
            ))
            num += 1
    for rsu in scenario.rsus:
        agents.append(SensorAgent(
            agent_num=num, pose=Pose(rsu.x, rsu.y, rsu.yaw),
            config=SensorConfig(**rsu.sensor), actor_id=None,
        ))
        num += 1
    return agents


def simulate_perception(
    scenario: Scenario,
    seed: int | None = None,
    channel_model: ChannelModel | None = None,
    staleness_s: float = 0.3,
    sensor_overrides: SensorConfig | None = None,
    fusion_cfg: FusionConfig | None = None,
    collect_agent_frames: bool = False,
    stop_on_collision: bool = True,
) -> PerceptionTrace:
    """Run the full perception pipeline over the scenario, deterministically."""
    seed = scenario.seed if seed is None else seed
    dt = scenario.dt_s
    agents = build_agents(scenario)
    if sensor_overrides is not None:
        agents = [replace(a, config=sensor_overrides) for a in agents]
    by_actor = {a.actor_id: a for a in agents if a.actor_id is not None}
    ego_actor_id = agents[0].actor_id if agents and agents[0].actor_id else None

    channel = Channel(channel_model or ChannelModel(), seed=seed ^ 0x5EED, dt_s=dt)
    buffer = IngestBuffer(dt, expected_agents={a.agent_num for a in agents},
                          staleness_s=staleness_s)
    fusion = FusionCenter(COMMON_GRID, dt, fusion_cfg)

    inflight: list = []  # (delivery_time, seq, bytes)
    seq = 0
    pose_table: dict[tuple[int, int], Pose] = {}
    latest: PerceptionProduct | None = None
    ticks: list[TickRecord] = []
    first_collision: CollisionEvent | None = None
    agent_dets: list[dict[int, tuple]] = []

    for state in world_states(scenario):
        now = state.time_s
        events = detect_collisions(state)
        if events and first_collision is None:
            first_collision = events[0]

        # sense + transmit
        frame_dets: dict[int, tuple] = {}
        for agent in agents:
            pose = agent.pose
            if agent.actor_id is not None:
                actor = next(a for a in state.actors if a.actor_id == agent.actor_id)
                pose = actor.pose
                agent = replace(agent, pose=pose)
            frame = sense_frame(state, agent, seed)
            local_spec = replace(COMMON_GRID, cells_x=100, cells_y=100, origin=pose)
            frame = attach_grid(frame, rasterize_local_bev(frame, local_spec, agent.config))
            pose_table[(agent.agent_num, state.tick)] = pose
            if collect_agent_frames:
                frame_dets[agent.agent_num] = tuple(
                    to_global_frame(d, pose) for d in frame.detections
                )
            wire = encode_message(frame, now)
            delivery = channel.transmit(wire, state.tick, now)
            if delivery is not None:
                heapq.heappush(inflight, (delivery, seq, wire))
                seq += 1
        if collect_agent_frames:
            agent_dets.append(frame_dets)

        # deliveries due by now feed the ingest buffer
        ready = buffer.poll(now)
        while inflight and inflight[0][0] <= now:
            _, _, wire = heapq.heappop(inflight)
            msg = decode_message(wire)
            pose = pose_table.get((msg.agent_num, msg.tick))
            if pose is None:
                continue
            payload = msg.payload
            grid = payload.local_grid
            grid = BevGrid(replace(grid.spec, origin=pose), grid.cells, grid.tick)
            payload = replace(payload, ego_pose=pose, local_grid=grid)
            ready.extend(buffer.add(replace(msg, payload=payload), now))

        # a dropped message can hold a tick's set until its deadline, which
        # fires after newer complete sets; the fusion consumer stays monotone
        for rs in sorted(ready, key=lambda r: r.tick):
            if latest is not None and rs.tick <= latest.tick:
                continue
            latest = fusion.run_heads(rs.tick, [m.payload for m in rs.messages])

        ego_xy = None
        if ego_actor_id is not None:
            ego = next(a for a in state.actors if a.actor_id == ego_actor_id)
            ego_xy = (ego.x, ego.y)
        violation = any(a.violating for a in state.actors)

        ticks.append(TickRecord(
            tick=state.tick, now_s=now, product=latest,
            ego_xy=ego_xy, violation=violation,
            gt_actors=state.actors, collisions=tuple(events),
        ))
        if events and stop_on_collision:
            break

    return PerceptionTrace(
        scenario_id=scenario.scenario_id,
        seed=seed, dt_s=dt, ticks=tuple(ticks),
        collision=first_collision,
        agent_detections=tuple(agent_dets) if collect_agent_frames else None,
    )


# ---------------------------------------------------------------------------
# reasoning phase

@dataclass
class EpisodeResult:
    scenario_id: str
    seed: int
    frames: list[DecisionFrame]
    alerts: list[SafetyAlert]
    collision: CollisionEvent | None
    committed_boxes: list
    truth_by_tick: dict[int, TickTruth]
    trace: PerceptionTrace
    records: list[dict]

    @property
    def exit_code(self) -> int:
        return 2 if self.collision is not None else 0


class ReasoningSession:
    """Tick-by-tick reasoning over perception records.

    Used in batch by run_reasoning and interactively by the serve-mode
    session (which mutates `threshold` between ticks).
    """

    def __init__(self, episode_id: str, cfg: RunConfig, store: CorpusStore,
                 client=None, tick_base: int = 0):
        self.episode_id = episode_id
        self.cfg = cfg
        self.store = store
        self.client = client or cfg.make_client()
        self.tick_base = tick_base
        self.rubric = load_rubric()
        self.budget, self.sample_k = PROMPT_LEVELS[cfg.level]
        self.monitor = PassiveMonitor(cfg.threshold, cfg.cooldown_s)
        self.risk_cfg = RiskConfig()
        self.frames: list[DecisionFrame] = []
        self.alerts: list[SafetyAlert] = []
        self.records: list[dict] = []
        self.dialogue: list[str] = []
        self.temporal: list[str] = []
        self.raw_backup: list[str] = []
        self.truth_by_tick: dict[int, TickTruth] = {}
        self._frame_ticks: set[int] = set()
        self.last_risk = None

    @property
    def threshold(self) -> float:
        return self.monitor.threshold

    @threshold.setter
    def threshold(self, value: float):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"threshold {value} outside [0, 1]")
        self.monitor.threshold = value

    def _process(self, job: QueryJob, bundle) -> DecisionFrame:
        sampled = sample_corpus(self.store, job.tags, self.tick_base + job.tick,
                                k=self.sample_k)
        prompt = generate_prompt(
            job.mission, job.risk, job.evidence, sampled,
            cache=self.temporal[-8:], raw=self.raw_backup[-10:],
            utterance=job.utterance, mode=job.mode, budget=self.budget,
        )
        decision = None
        try:
            decision = invoke_llm(self.client, prompt, cot=True,
                                  timeout_s=self.cfg.llm_timeout_s)
            alert = emit_alert(job, decision=decision)
        except LlmTimeout as e:
            alert = emit_alert(job, error=e)  # raises in active mode
        return DecisionFrame(
            tick=job.tick, mission=job.mission, mode=job.mode,
            prompt_digest=bundle.digest, risk=job.risk,
            decision=decision, alert=alert, tags=job.tags,
        )

    def _handle(self, job: QueryJob, bundle, tick: int) -> DecisionFrame | None:
        if job.tick in self._frame_ticks:
            return None  # at most one decision frame per (episode, tick)
        frame = self._process(job, bundle)
        self._frame_ticks.add(job.tick)
        self.frames.append(frame)
        if frame.alert is not None:
            self.alerts.append(frame.alert)
            self.records.append({
                "type": "alert", "tick": tick, "mode": frame.alert.mode,
                "mission": frame.alert.mission.value,
                "severity": frame.alert.severity,
                "text": frame.alert.text,
                "evidence": list(frame.alert.evidence),
                "fallback": frame.alert.fallback,
            })
        self.records.append({
            "type": "decision", "tick": tick,
            "mission": frame.mission.value, "mode": frame.mode,
            "risk": round(frame.risk.value, 9),
            "digest": frame.prompt_digest,
            "steps": list(frame.decision.steps) if frame.decision else [],
            "final": frame.decision.final if frame.decision else None,
        })
        return frame

    def step(self, tr: TickRecord, active_texts: list[str] | None = None) -> list[dict]:
        """Process one tick; returns the records it appended."""
        start = len(self.records)
        rec: dict = {
            "type": "tick", "tick": tr.tick,
            "actors": [
                {
                    "id": a.actor_id, "kind": a.kind,
                    "x": round(a.x, 9), "y": round(a.y, 9),
                    "yaw": round(a.yaw, 9), "speed": round(a.speed, 9),
                }
                for a in tr.gt_actors
            ],
            "collisions": [
                {"a": c.actor_a, "b": c.actor_b, "overlap_m": round(c.overlap_m, 9)}
                for c in tr.collisions
            ],
        }
        if tr.product is None:
            rec["risk"] = None
            self.records.append(rec)
            return self.records[start:]

        product = tr.product
        # truth is what perception said when the loop acted: key by world tick
        self.truth_by_tick[tr.tick] = tick_truth_from_product(product)
        risk = compute_risk_intensity(product, tr.ego_xy, tr.violation, self.risk_cfg)
        self.last_risk = risk
        rec["risk"] = round(risk.value, 9)
        rec["product_tick"] = product.tick
        rec["detections"] = len(product.detections)
        rec["predicted_collisions"] = [
            {"a": c.track_a, "b": c.track_b, "ttc_s": round(c.ttc_s, 9)}
            for c in product.collisions
        ]
        self.records.append(rec)

        self.temporal.append(
            f"tick {tr.tick}: risk {risk.value:.3f}, {len(product.detections)} objects, "
            f"{len(product.collisions)} predicted conflicts"
        )
        self.raw_backup.append(
            f"tick {tr.tick}: " + "; ".join(
                f"{d.kind}@({d.x:.1f},{d.y:.1f})" for d in product.detections[:6]
            )
        )
        bundle = build_input_bundle(product, self.dialogue,
                                    [f"tick:{product.tick}"], self.episode_id)

        job = self.monitor.poll(bundle, risk, tr.now_s, tr.ego_xy, tick=tr.tick)
        if job is not None:
            self._handle(job, bundle, tr.tick)
        for text in active_texts or []:
            self.dialogue.append(f"user: {text}")
            active = submit_active_query(bundle, text, risk, self.rubric,
                                         tr.ego_xy, self.risk_cfg, tick=tr.tick)
            frame = self._handle(active, bundle, tr.tick)
            if frame is not None and frame.decision is not None:
                self.dialogue.append(f"copilot: {frame.decision.final}")
        return self.records[start:]

    def finalize(self, collision: CollisionEvent | None) -> list:
        committed = finalize_episode(
            self.frames, collision, self.store, self.cfg.renewal_rate,
            self.episode_id, k=2, tick_base=self.tick_base,
        )
        for box in committed:
            self.records.append({
                "type": "corpus_box", "box_id": box.box_id,
                "mission": box.mission.value, "outcome": box.outcome,
            })
        return committed


def run_reasoning(
    trace: PerceptionTrace,
    cfg: RunConfig,
    store: CorpusStore,
    client=None,
    active_schedule: list[tuple[int, str]] | None = None,
    tick_base: int = 0,
    finalize: bool = True,
) -> EpisodeResult:
    """Replay the reasoning loop over a perception trace."""
    episode_id = f"{trace.scenario_id}-s{trace.seed}"
    session = ReasoningSession(episode_id, cfg, store, client, tick_base)
    schedule: dict[int, list[str]] = {}
    for t, q in active_schedule or []:
        schedule.setdefault(t, []).append(q)
    for tr in trace.ticks:
        session.step(tr, schedule.get(tr.tick))
    committed = session.finalize(trace.collision) if finalize else []
    return EpisodeResult(
        scenario_id=trace.scenario_id, seed=trace.seed,
        frames=session.frames, alerts=session.alerts, collision=trace.collision,
        committed_boxes=committed, truth_by_tick=session.truth_by_tick,
        trace=trace, records=session.records,
    )


def run_episode(cfg: RunConfig, store: CorpusStore | None = None,
                active_schedule: list[tuple[int, str]] | None = None) -> EpisodeResult:
    scenario = load_config_scenario(cfg)
    trace = simulate_perception(scenario, cfg.seed, cfg.channel, cfg.staleness_s)
    store = store if store is not None else CorpusStore(cfg.corpus_path)
    return run_reasoning(trace, cfg, store, active_schedule=active_schedule)


# ---------------------------------------------------------------------------
# episode log

def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def episode_log_lines(result: EpisodeResult, cfg: RunConfig) -> list[str]:
    header = {
        "type": "header",
        "schema": LOG_SCHEMA_VERSION,
        "scenario": result.scenario_id,
        "seed": result.seed,
        "config": {
            "threshold": cfg.threshold,
            "llm": cfg.llm,
            "renewal_rate": cfg.renewal_rate,
            "level": cfg.level,
            "cooldown_s": cfg.cooldown_s,
            "staleness_s": cfg.staleness_s,
        },
        "outcome": "collision" if result.collision else "clean",
    }
    lines = [_json_line(header)]
    lines.extend(_json_line(r) for r in result.records)
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    lines.append(_json_line({"type": "checksum", "sha256": digest}))
    return lines


def write_episode_log(result: EpisodeResult, cfg: RunConfig, path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(episode_log_lines(result, cfg)) + "\n")


def read_episode_log(path: str) -> list[dict]:
    """Parse a log and verify its trailing checksum."""
    if not os.path.exists(path):
        raise IoError(f"log file not found: {path}")
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise IoError(f"log file is empty: {path}")
    records = [json.loads(line) for line in lines]
    tail = records[-1]
    if tail.get("type") == "checksum":
        body = "\n".join(lines[:-1]) + "\n"
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        if digest != tail.get("sha256"):
            raise IoError(f"log checksum mismatch in {path}")
    return records
