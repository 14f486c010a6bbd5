"""Passive/active query flow, alert emission, end-of-episode corpus update."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..errors import EmptyQuery, LlmTimeout, ValidationError
from ..fusion import PerceptionProduct
from ..world import CollisionEvent
from .corpus import CorpusBox, CorpusStore
from .llm import Decision, severity_for_risk
from .missions import Mission, classify_mission
from .prompts import InputBundle
from .risk import RiskConfig, RiskScore

FALLBACK_MARKER = "[fallback]"

_REF_RE = re.compile(r"\b(track:[\w-]+|collision:[\w-]+-[\w-]+)\b")


@dataclass(frozen=True)
class QueryJob:
    mode: str  # "active" | "passive"
    mission: Mission
    tick: int
    risk: RiskScore
    evidence: tuple[str, ...]
    tags: tuple[str, ...]
    utterance: str = ""


@dataclass(frozen=True)
class SafetyAlert:
    mode: str
    mission: Mission
    severity: str
    text: str
    evidence: tuple[str, ...]
    tick: int
    fallback: bool = False

    def __post_init__(self):
        if self.mode == "passive" and not self.evidence and not self.fallback:
            raise ValidationError("passive alert needs evidence or the fallback marker")


@dataclass(frozen=True)
class DecisionFrame:
    tick: int
    mission: Mission
    mode: str
    prompt_digest: str
    risk: RiskScore
    decision: Decision | None
    alert: SafetyAlert | None
    tags: tuple[str, ...] = ()


def build_evidence(product: PerceptionProduct, ego_xy: tuple[float, float] | None,
                   limit: int = 4) -> tuple[str, ...]:
    """Collision refs by urgency, then track refs: participants, then nearest."""
    refs: list[str] = []
    participants: list[int] = []
    for c in sorted(product.collisions, key=lambda c: (c.ttc_s, c.track_a, c.track_b))[:2]:
        refs.append(f"collision:{c.track_a}-{c.track_b}")
        participants.extend((c.track_a, c.track_b))
    track_ids: list[int] = []
    for tid in participants:
        if tid not in track_ids:
            track_ids.append(tid)

    def start_dist(f):
        if not f.points or ego_xy is None:
            return math.inf
        _, x, y = f.points[0]
        return math.hypot(x - ego_xy[0], y - ego_xy[1])

    for f in sorted(product.forecasts, key=lambda f: (start_dist(f), f.track_id)):
        if f.track_id not in track_ids:
            track_ids.append(f.track_id)
    refs.extend(f"track:{tid}" for tid in track_ids)
    return tuple(refs[:limit])


_COMPONENT_MISSIONS = (
    Mission.ACCIDENT_PREDICTION,   # ttc
    Mission.SAFETY_EVALUATION,     # proximity
    Mission.TRAFFIC_VIOLATION,     # violation
)


def dominant_mission(risk: RiskScore, cfg: RiskConfig = RiskConfig()) -> Mission:
    weighted = risk.weighted_components(cfg)
    best = max(range(3), key=lambda i: (weighted[i], -i))
    return _COMPONENT_MISSIONS[best]


class PassiveMonitor:
    """Fires a passive query when risk crosses the threshold, with a cooldown."""

    def __init__(self, threshold: float, cooldown_s: float = 3.0,
                 risk_cfg: RiskConfig = RiskConfig()):
        if not 0.0 <= threshold <= 1.0:
            raise ValidationError(f"threshold {threshold} outside [0, 1]")
        self.threshold = threshold
        self.cooldown_s = cooldown_s
        self.risk_cfg = risk_cfg
        self._last_fire_s: float | None = None

    def poll(self, bundle: InputBundle, risk: RiskScore, now_s: float,
             ego_xy: tuple[float, float] | None = None,
             tick: int | None = None) -> QueryJob | None:
        if risk.value < self.threshold:
            return None
        if self._last_fire_s is not None and now_s - self._last_fire_s < self.cooldown_s:
            return None
        self._last_fire_s = now_s
        mission = dominant_mission(risk, self.risk_cfg)
        return QueryJob(
            mode="passive",
            mission=mission,
            tick=bundle.tick if tick is None else tick,
            risk=risk,
            evidence=build_evidence(bundle.perception, ego_xy),
            tags=(mission.value, "passive", _component_tag(risk, self.risk_cfg)),
        )


def _component_tag(risk: RiskScore, cfg: RiskConfig) -> str:
    names = ("ttc", "proximity", "violation")
    weighted = risk.weighted_components(cfg)
    return names[max(range(3), key=lambda i: (weighted[i], -i))]


def submit_active_query(bundle: InputBundle, text: str, risk: RiskScore,
                        rubric: dict | None = None,
                        ego_xy: tuple[float, float] | None = None,
                        risk_cfg: RiskConfig = RiskConfig(),
                        tick: int | None = None) -> QueryJob:
    if not text or not text.strip():
        raise EmptyQuery("active query text must be non-empty")
    mission = classify_mission(text, rubric)
    return QueryJob(
        mode="active",
        mission=mission,
        tick=bundle.tick if tick is None else tick,
        risk=risk,
        evidence=build_evidence(bundle.perception, ego_xy),
        tags=(mission.value, "active", _component_tag(risk, risk_cfg)),
        utterance=text.strip(),
    )


def extract_refs(decision: Decision) -> tuple[str, ...]:
    refs: list[str] = []
    for chunk in (*decision.steps, decision.final):
        for m in _REF_RE.findall(chunk):
            if m not in refs:
                refs.append(m)
    return tuple(refs)


def _fallback_text(job: QueryJob) -> str:
    bits = []
    if job.risk.ttc_term > 0:
        ttc = (1.0 - job.risk.ttc_term) * RiskConfig().ttc_horizon_s
        bits.append(f"TTC {ttc:.1f}s")
    if job.risk.proximity_term > 0:
        bits.append("close object")
    if job.risk.violation_term > 0:
        bits.append("violation flag")
    with_refs = f" with {' '.join(job.evidence)}" if job.evidence else ""
    hazard = ", ".join(bits) if bits else "unspecified hazard"
    return f"{FALLBACK_MARKER} hazard: {hazard}{with_refs}"


def emit_alert(job: QueryJob, decision: Decision | None = None,
               error: Exception | None = None) -> SafetyAlert:
    """Turn a decision (or a timeout) into an alert.

    Passive mode absorbs LLM timeouts with a template alert; active mode
    surfaces the error to the caller.
    """
    if error is not None:
        if job.mode == "active":
            raise error
        if not isinstance(error, LlmTimeout):
            raise error
        return SafetyAlert(
            mode=job.mode, mission=job.mission,
            severity=severity_for_risk(job.risk.value),
            text=_fallback_text(job),
            evidence=job.evidence, tick=job.tick, fallback=True,
        )
    assert decision is not None
    refs = extract_refs(decision)
    if job.mode == "passive" and not refs:
        return SafetyAlert(
            mode=job.mode, mission=job.mission, severity=decision.severity,
            text=f"{FALLBACK_MARKER} {decision.final}",
            evidence=(), tick=job.tick, fallback=True,
        )
    return SafetyAlert(
        mode=job.mode, mission=job.mission, severity=decision.severity,
        text=decision.final, evidence=refs, tick=job.tick,
    )


# ---------------------------------------------------------------------------
# corpus update

def _box_from_frame(frame: DecisionFrame, outcome: str, episode_id: str,
                    tick_base: int) -> CorpusBox:
    final = frame.decision.final if frame.decision else "fallback alert"
    summary = (
        f"{frame.mission.value} at tick {frame.tick}: risk {frame.risk.value:.2f}, "
        f"{outcome}; {final[:120]}"
    )
    return CorpusBox(
        box_id=f"{episode_id}:{frame.tick:05d}",
        mission=frame.mission,
        summary_text=summary,
        relevance_tags=tuple(frame.tags) + (outcome,),
        created_tick=tick_base + frame.tick,
        outcome=outcome,
        payload_ref=frame.prompt_digest,
    )


def finalize_episode(
    frames: list[DecisionFrame],
    collision: CollisionEvent | None,
    store: CorpusStore,
    renewal_rate: float,
    episode_id: str,
    k: int = 2,
    tick_base: int = 0,
) -> list[CorpusBox]:
    """Commit experience boxes for one episode.

    Clean run: candidates are the top-k decision frames by risk. Collision
    run: the single frame nearest the collision tick, as a failure. The
    renewal rate gates how many candidates actually commit: ceil(rate * count).
    """
    if not 0.0 <= renewal_rate <= 1.0:
        raise ValidationError(f"renewal rate {renewal_rate} outside [0, 1]")
    if collision is None:
        ranked = sorted(frames, key=lambda f: (-f.risk.value, f.tick))
        candidates = [(f, "success") for f in ranked[:k]]
    else:
        if not frames:
            return []
        nearest = min(frames, key=lambda f: (abs(f.tick - collision.tick), f.tick))
        candidates = [(nearest, "failure")]
    commit_n = math.ceil(renewal_rate * len(candidates))
    committed = []
    for frame, outcome in candidates[:commit_n]:
        box = _box_from_frame(frame, outcome, episode_id, tick_base)
        store.add(box)
        committed.append(box)
    return committed
