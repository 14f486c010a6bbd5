"""Deterministic 2D traffic world: scripted scenarios, ground truth, collisions.

Actors are kinematic waypoint-followers: dynamics come from the scenario
script alone, so two runs of the same scenario yield bit-identical states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

from .errors import EndOfScenario, SchemaError, ValidationError
from .geometry import Pose, obb_penetration

ACTOR_KINDS = ("car", "truck", "van", "pedestrian")

# length x width in meters, by kind
DEFAULT_FOOTPRINTS = {
    "car": (4.5, 1.9),
    "truck": (8.0, 2.5),
    "van": (5.0, 2.0),
    "pedestrian": (0.6, 0.6),
}

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class ActorSpec:
    actor_id: str
    kind: str
    x: float
    y: float
    yaw: float = 0.0
    speed_mps: float = 0.0
    waypoints: tuple[tuple[float, float], ...] = ()
    length: float = 0.0
    width: float = 0.0
    sensing: bool = True
    violation_s: tuple[float, float] | None = None


@dataclass(frozen=True)
class RsuSpec:
    rsu_id: str
    x: float
    y: float
    yaw: float = 0.0
    sensor: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    duration_s: float
    dt_s: float
    actors: tuple[ActorSpec, ...]
    rsus: tuple[RsuSpec, ...]
    seed: int = 0
    map_extent_m: float = 100.0

    @property
    def num_ticks(self) -> int:
        """Last valid tick index; states exist for ticks 0..num_ticks."""
        return int(round(self.duration_s / self.dt_s))


@dataclass(frozen=True)
class ActorState:
    actor_id: str
    kind: str
    x: float
    y: float
    yaw: float
    speed: float
    length: float
    width: float
    violating: bool = False

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.yaw)

    @property
    def footprint(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.yaw, self.length, self.width)


@dataclass(frozen=True)
class WorldState:
    tick: int
    time_s: float
    actors: tuple[ActorState, ...]

    def __post_init__(self):
        for a in self.actors:
            if not (math.isfinite(a.x) and math.isfinite(a.y)):
                raise ValidationError(f"non-finite position for actor {a.actor_id}")


@dataclass(frozen=True)
class CollisionEvent:
    tick: int
    actor_a: str
    actor_b: str
    overlap_m: float


# ---------------------------------------------------------------------------
# scenario documents

_SCENARIO_KEYS = {"id", "duration_s", "dt_s", "seed", "map_extent_m", "actors", "rsus"}
_ACTOR_KEYS = {"id", "kind", "x", "y", "yaw", "speed_mps", "waypoints",
               "length", "width", "sensing", "violation_s"}
_RSU_KEYS = {"id", "x", "y", "yaw", "sensor"}


def _require(obj: dict, key: str, ctx: str):
    if key not in obj:
        raise SchemaError(f"{ctx}: missing required field '{key}'")
    return obj[key]


def _num(value, ctx: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{ctx}: expected a number, got {type(value).__name__}")
    return float(value)


def _reject_unknown(obj: dict, allowed: set, ctx: str):
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"{ctx}: unknown field(s) {sorted(unknown)}")


def _parse_actor(obj: dict, idx: int) -> ActorSpec:
    ctx = f"actors[{idx}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{ctx}: expected an object")
    _reject_unknown(obj, _ACTOR_KEYS, ctx)
    actor_id = _require(obj, "id", ctx)
    if not isinstance(actor_id, str) or not actor_id:
        raise SchemaError(f"{ctx}: 'id' must be a non-empty string")
    kind = _require(obj, "kind", ctx)
    if kind not in ACTOR_KINDS:
        raise SchemaError(f"{ctx}: kind '{kind}' not one of {ACTOR_KINDS}")
    ln_default, wd_default = DEFAULT_FOOTPRINTS[kind]
    waypoints = obj.get("waypoints", [])
    if not isinstance(waypoints, list):
        raise SchemaError(f"{ctx}: 'waypoints' must be a list of [x, y] pairs")
    wps = []
    for j, wp in enumerate(waypoints):
        if not (isinstance(wp, list) and len(wp) == 2):
            raise SchemaError(f"{ctx}.waypoints[{j}]: expected [x, y]")
        wps.append((_num(wp[0], ctx), _num(wp[1], ctx)))
    violation = obj.get("violation_s")
    if violation is not None:
        if not (isinstance(violation, list) and len(violation) == 2):
            raise SchemaError(f"{ctx}: 'violation_s' must be [start_s, end_s]")
        violation = (_num(violation[0], ctx), _num(violation[1], ctx))
    sensing = obj.get("sensing", kind != "pedestrian")
    if not isinstance(sensing, bool):
        raise SchemaError(f"{ctx}: 'sensing' must be a boolean")
    return ActorSpec(
        actor_id=actor_id,
        kind=kind,
        x=_num(_require(obj, "x", ctx), ctx),
        y=_num(_require(obj, "y", ctx), ctx),
        yaw=_num(obj.get("yaw", 0.0), ctx),
        speed_mps=_num(obj.get("speed_mps", 0.0), ctx),
        waypoints=tuple(wps),
        length=_num(obj.get("length", ln_default), ctx),
        width=_num(obj.get("width", wd_default), ctx),
        sensing=sensing,
        violation_s=violation,
    )


def _parse_rsu(obj: dict, idx: int) -> RsuSpec:
    ctx = f"rsus[{idx}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{ctx}: expected an object")
    _reject_unknown(obj, _RSU_KEYS, ctx)
    rsu_id = _require(obj, "id", ctx)
    if not isinstance(rsu_id, str) or not rsu_id:
        raise SchemaError(f"{ctx}: 'id' must be a non-empty string")
    sensor = obj.get("sensor", {})
    if not isinstance(sensor, dict):
        raise SchemaError(f"{ctx}: 'sensor' must be an object")
    # field names checked against the sensor model (late import: sensing
    # depends on this module)
    from .sensing import SENSOR_CONFIG_FIELDS

    _reject_unknown(sensor, SENSOR_CONFIG_FIELDS, f"{ctx}.sensor")
    return RsuSpec(
        rsu_id=rsu_id,
        x=_num(_require(obj, "x", ctx), ctx),
        y=_num(_require(obj, "y", ctx), ctx),
        yaw=_num(obj.get("yaw", 0.0), ctx),
        sensor=dict(sensor),
    )


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document (UTF-8 JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    _reject_unknown(doc, {"schema_version", "scenario"}, "document")
    version = _require(doc, "schema_version", "document")
    if version != 1:
        raise SchemaError(f"unsupported schema_version {version!r}")
    body = _require(doc, "scenario", "document")
    if not isinstance(body, dict):
        raise SchemaError("'scenario' must be an object")
    _reject_unknown(body, _SCENARIO_KEYS, "scenario")

    scenario_id = _require(body, "id", "scenario")
    if not isinstance(scenario_id, str) or not scenario_id:
        raise SchemaError("scenario: 'id' must be a non-empty string")
    actors_raw = _require(body, "actors", "scenario")
    if not isinstance(actors_raw, list):
        raise SchemaError("scenario: 'actors' must be a list")
    rsus_raw = body.get("rsus", [])
    if not isinstance(rsus_raw, list):
        raise SchemaError("scenario: 'rsus' must be a list")
    seed = body.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError("scenario: 'seed' must be an integer")

    scenario = Scenario(
        scenario_id=scenario_id,
        duration_s=_num(body.get("duration_s", 20.0), "scenario"),
        dt_s=_num(body.get("dt_s", 0.1), "scenario"),
        actors=tuple(_parse_actor(a, i) for i, a in enumerate(actors_raw)),
        rsus=tuple(_parse_rsu(r, i) for i, r in enumerate(rsus_raw)),
        seed=seed,
        map_extent_m=_num(body.get("map_extent_m", 100.0), "scenario"),
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(s: Scenario):
    if s.dt_s <= 0:
        raise ValidationError(f"dt_s must be positive, got {s.dt_s}")
    if s.duration_s < s.dt_s:
        raise ValidationError("duration_s must be at least one dt_s")
    if s.seed < 0:
        raise ValidationError("seed must be non-negative")
    if s.map_extent_m <= 0:
        raise ValidationError("map_extent_m must be positive")
    ids = [a.actor_id for a in s.actors] + [r.rsu_id for r in s.rsus]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise ValidationError(f"duplicate actor/rsu id(s): {sorted(dupes)}")
    for a in s.actors:
        if a.length <= 0 or a.width <= 0:
            raise ValidationError(f"actor {a.actor_id}: footprint must be positive")
        if a.speed_mps < 0:
            raise ValidationError(f"actor {a.actor_id}: speed_mps must be non-negative")
        if a.violation_s is not None and a.violation_s[1] < a.violation_s[0]:
            raise ValidationError(f"actor {a.actor_id}: violation window ends before it starts")


# ---------------------------------------------------------------------------
# stepping

def _polyline(spec: ActorSpec) -> list[tuple[float, float]]:
    return [(spec.x, spec.y), *spec.waypoints]


def _actor_state_at(spec: ActorSpec, time_s: float) -> ActorState:
    violating = bool(
        spec.violation_s is not None
        and spec.violation_s[0] <= time_s < spec.violation_s[1]
    )
    if not spec.waypoints:
        # straight-line at constant speed along the initial heading
        dist = spec.speed_mps * time_s
        x = spec.x + dist * math.cos(spec.yaw)
        y = spec.y + dist * math.sin(spec.yaw)
        return ActorState(spec.actor_id, spec.kind, x, y, spec.yaw, spec.speed_mps,
                          spec.length, spec.width, violating)

    pts = _polyline(spec)
    remaining = spec.speed_mps * time_s
    x, y = pts[0]
    yaw = spec.yaw
    moving = False
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        seg = math.hypot(x1 - x0, y1 - y0)
        if seg <= 0.0:
            continue
        yaw = math.atan2(y1 - y0, x1 - x0)
        if remaining < seg:
            f = remaining / seg
            x, y = x0 + f * (x1 - x0), y0 + f * (y1 - y0)
            moving = True
            break
        remaining -= seg
        x, y = x1, y1
    speed = spec.speed_mps if moving else 0.0
    return ActorState(spec.actor_id, spec.kind, x, y, yaw, speed,
                      spec.length, spec.width, violating)


def state_at_tick(scenario: Scenario, tick: int) -> WorldState:
    """World state at a tick, computed in closed form from the script."""
    time_s = tick * scenario.dt_s
    actors = tuple(_actor_state_at(a, time_s) for a in scenario.actors)
    return WorldState(tick=tick, time_s=time_s, actors=actors)


def initial_state(scenario: Scenario) -> WorldState:
    return state_at_tick(scenario, 0)


def step_world(state: WorldState, scenario: Scenario) -> WorldState:
    """Advance one tick; raises EndOfScenario at the duration boundary."""
    if state.tick * scenario.dt_s >= scenario.duration_s - _TIME_EPS:
        raise EndOfScenario(
            f"tick {state.tick} is at or past duration {scenario.duration_s}s"
        )
    return state_at_tick(scenario, state.tick + 1)


def world_states(scenario: Scenario):
    """All states of the scenario in tick order (ticks 0..num_ticks)."""
    state = initial_state(scenario)
    yield state
    while True:
        try:
            state = step_world(state, scenario)
        except EndOfScenario:
            return
        yield state


def detect_collisions(state: WorldState) -> list[CollisionEvent]:
    """One event per overlapping footprint pair, unordered pairs reported once."""
    events = []
    actors = state.actors
    for i in range(len(actors)):
        for j in range(i + 1, len(actors)):
            pen = obb_penetration(actors[i].footprint, actors[j].footprint)
            if pen > 0.0:
                events.append(CollisionEvent(
                    tick=state.tick,
                    actor_a=actors[i].actor_id,
                    actor_b=actors[j].actor_id,
                    overlap_m=pen,
                ))
    return events


# ---------------------------------------------------------------------------
# bundled fixtures

def bundled_scenario_text(name: str) -> str:
    ref = resources.files("sentinel") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled scenario named '{name}'")
    return ref.read_text(encoding="utf-8")


def bundled_scenario(name: str) -> Scenario:
    return load_scenario(bundled_scenario_text(name))


def bundled_scenario_names() -> list[str]:
    root = resources.files("sentinel") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
