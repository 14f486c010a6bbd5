"""Per-agent sensor model: FoV/occlusion gating, noisy detections, local BEV.

Stands in for a camera perception stack: detections are ground truth pushed
through range-dependent Gaussian noise, Bernoulli dropouts and Poisson
clutter, all driven by a generator derived from (seed, tick, agent), so any
frame can be reproduced bit-for-bit.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import OutOfGrid, ValidationError
from .geometry import Pose, segment_hits_obb, wrap_angle
from .world import DEFAULT_FOOTPRINTS, ACTOR_KINDS, ActorState, WorldState

# three-valued local occupancy encoding
P_OCCUPIED = 0.9
P_FREE = 0.3
P_UNKNOWN = 0.5

CONFIDENCE_FLOOR = 0.05


@dataclass(frozen=True)
class SensorConfig:
    max_range_m: float = 60.0
    num_cameras: int = 6
    fov_deg: float = 60.0
    sigma_pos_base_m: float = 0.2
    sigma_pos_range_coeff: float = 0.05  # per meter of range
    sigma_yaw_rad: float = 0.05
    drop_prob: float = 0.05
    false_pos_rate_per_frame: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValidationError(f"sensor config: {f.name} must be non-negative")
        if self.num_cameras * self.fov_deg > 360.0 + 1e-9:
            raise ValidationError("sensor config: camera FoV coverage exceeds 360 degrees")
        if self.drop_prob > 1.0:
            raise ValidationError("sensor config: drop_prob must be at most 1")


SENSOR_CONFIG_FIELDS = {f.name for f in fields(SensorConfig)}


@dataclass(frozen=True)
class GridSpec:
    cells_x: int = 100
    cells_y: int = 100
    resolution_m_per_cell: float = 0.5
    origin: Pose = field(default_factory=lambda: Pose(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.cells_x <= 0 or self.cells_y <= 0:
            raise ValidationError("grid dimensions must be positive")
        if self.resolution_m_per_cell <= 0:
            raise ValidationError("grid resolution must be positive")

    @property
    def extent_x_m(self) -> float:
        return self.cells_x * self.resolution_m_per_cell / 2.0

    @property
    def extent_y_m(self) -> float:
        return self.cells_y * self.resolution_m_per_cell / 2.0


@dataclass
class BevGrid:
    spec: GridSpec
    cells: np.ndarray  # shape (cells_y, cells_x), occupancy probability
    tick: int | None = None

    def __post_init__(self):
        if self.cells.shape != (self.spec.cells_y, self.spec.cells_x):
            raise ValidationError(
                f"grid shape {self.cells.shape} does not match spec "
                f"({self.spec.cells_y}, {self.spec.cells_x})"
            )

    def copy(self) -> "BevGrid":
        return BevGrid(self.spec, self.cells.copy(), self.tick)


def unknown_grid(spec: GridSpec, tick: int | None = None) -> BevGrid:
    return BevGrid(spec, np.full((spec.cells_y, spec.cells_x), P_UNKNOWN), tick)


@dataclass(frozen=True)
class Detection3D:
    kind: str
    x: float
    y: float
    yaw: float
    length: float
    width: float
    confidence: float
    speed: float | None = None
    peripheral: bool = False

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def footprint(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.yaw, self.length, self.width)


@dataclass(frozen=True)
class SensorAgent:
    """A sensing endpoint: a camera-equipped vehicle or a roadside unit."""
    agent_num: int
    pose: Pose
    config: SensorConfig = field(default_factory=SensorConfig)
    actor_id: str | None = None  # vehicle agents skip their own footprint


@dataclass(frozen=True)
class SensorFrame:
    agent_num: int
    tick: int
    ego_pose: Pose | None
    detections: tuple[Detection3D, ...]
    local_grid: BevGrid | None = None


# ---------------------------------------------------------------------------
# grid coordinate mapping
#
# Cell (col, row) covers the half-open square
#   [ (col - cells_x/2) * res, +res ) x [ (row - cells_y/2) * res, +res )
# in the origin pose's local frame.

def world_to_cell(point: tuple[float, float], spec: GridSpec) -> tuple[int, int]:
    x, y = point
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValidationError(f"non-finite point {point}")
    lx, ly = spec.origin.invert_point(x, y)
    col = math.floor(spec.cells_x / 2 + lx / spec.resolution_m_per_cell)
    row = math.floor(spec.cells_y / 2 + ly / spec.resolution_m_per_cell)
    if not (0 <= col < spec.cells_x and 0 <= row < spec.cells_y):
        raise OutOfGrid(f"point {point} maps to cell ({col}, {row}) outside the grid")
    return col, row


def cell_corner_local(col: int, row: int, spec: GridSpec) -> tuple[float, float]:
    """Lower corner of a cell in the origin's local frame."""
    res = spec.resolution_m_per_cell
    return ((col - spec.cells_x / 2) * res, (row - spec.cells_y / 2) * res)


_CENTER_CACHE: dict[tuple[int, int, float], tuple[np.ndarray, np.ndarray]] = {}


def cell_centers_local(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """(X, Y) arrays of cell-center coordinates in the origin's local frame."""
    key = (spec.cells_x, spec.cells_y, spec.resolution_m_per_cell)
    cached = _CENTER_CACHE.get(key)
    if cached is None:
        res = spec.resolution_m_per_cell
        xs = (np.arange(spec.cells_x) - spec.cells_x / 2 + 0.5) * res
        ys = (np.arange(spec.cells_y) - spec.cells_y / 2 + 0.5) * res
        cached = np.meshgrid(xs, ys)
        _CENTER_CACHE[key] = cached
    return cached


# ---------------------------------------------------------------------------
# visibility

def _bearing_in_fov(bearing_rel: float, cfg: SensorConfig) -> bool:
    half = math.radians(cfg.fov_deg) / 2.0
    step = 2.0 * math.pi / cfg.num_cameras
    for i in range(cfg.num_cameras):
        if abs(wrap_angle(bearing_rel - i * step)) <= half + 1e-12:
            return True
    return False


def _near_segment(x0, y0, x1, y1, box) -> bool:
    """Bounding-circle gate: can the box possibly touch the segment?"""
    cx, cy = box[0], box[1]
    r = math.hypot(box[3], box[4]) / 2.0
    dx, dy = x1 - x0, y1 - y0
    den = dx * dx + dy * dy
    t = 0.0 if den == 0 else max(0.0, min(1.0, ((cx - x0) * dx + (cy - y0) * dy) / den))
    return math.hypot(cx - (x0 + t * dx), cy - (y0 + t * dy)) <= r


def visible(
    origin: Pose,
    target: ActorState,
    occluders: list[tuple[float, float, float, float, float]],
    cfg: SensorConfig,
) -> bool:
    """Range gate, camera FoV gate, then sightline against occluder boxes."""
    dx, dy = target.x - origin.x, target.y - origin.y
    rng = math.hypot(dx, dy)
    if rng > cfg.max_range_m:
        return False
    bearing_rel = wrap_angle(math.atan2(dy, dx) - origin.yaw)
    if not _bearing_in_fov(bearing_rel, cfg):
        return False
    for box in occluders:
        if _near_segment(origin.x, origin.y, target.x, target.y, box) \
                and segment_hits_obb(origin.x, origin.y, target.x, target.y, box):
            return False
    return True


# ---------------------------------------------------------------------------
# sensing

def _frame_rng(seed: int, tick: int, agent_num: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{tick}:{agent_num}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _range_confidence(rng_m: float, cfg: SensorConfig) -> float:
    if cfg.max_range_m <= 0:
        return CONFIDENCE_FLOOR
    return min(1.0, max(CONFIDENCE_FLOOR, 1.0 - rng_m / cfg.max_range_m))


def sense_frame(world: WorldState, agent: SensorAgent, seed: int) -> SensorFrame:
    """Noisy detections of visible actors, in the agent's frame.

    Deterministic for a given (seed, tick, agent_num): the generator is
    re-derived per frame, so agents can be evaluated in any order.
    """
    cfg = agent.config
    rng = _frame_rng(seed, world.tick, agent.agent_num)
    dets: list[Detection3D] = []

    for actor in world.actors:
        if agent.actor_id is not None and actor.actor_id == agent.actor_id:
            continue
        occluders = [
            other.footprint
            for other in world.actors
            if other.actor_id not in (actor.actor_id, agent.actor_id)
        ]
        if not visible(agent.pose, actor, occluders, cfg):
            continue
        if rng.uniform() < cfg.drop_prob:
            continue
        lx, ly = agent.pose.invert_point(actor.x, actor.y)
        dist = math.hypot(lx, ly)
        sigma = cfg.sigma_pos_base_m * (1.0 + dist * cfg.sigma_pos_range_coeff)
        nx, ny, nyaw = rng.normal(0.0, 1.0, size=3)
        dets.append(Detection3D(
            kind=actor.kind,
            x=lx + sigma * nx,
            y=ly + sigma * ny,
            yaw=wrap_angle(actor.yaw - agent.pose.yaw + cfg.sigma_yaw_rad * nyaw),
            length=actor.length,
            width=actor.width,
            confidence=_range_confidence(dist, cfg),
        ))

    # clutter: uniform over the covered field of view
    n_false = int(rng.poisson(cfg.false_pos_rate_per_frame))
    half = math.radians(cfg.fov_deg) / 2.0
    step = 2.0 * math.pi / cfg.num_cameras
    for _ in range(n_false):
        cam = int(rng.integers(cfg.num_cameras))
        bearing = cam * step + rng.uniform(-half, half)
        dist = rng.uniform(0.0, cfg.max_range_m)
        kind = ACTOR_KINDS[int(rng.integers(len(ACTOR_KINDS)))]
        length, width = DEFAULT_FOOTPRINTS[kind]
        dets.append(Detection3D(
            kind=kind,
            x=dist * math.cos(bearing),
            y=dist * math.sin(bearing),
            yaw=wrap_angle(rng.uniform(-math.pi, math.pi)),
            length=length,
            width=width,
            confidence=_range_confidence(dist, cfg),
        ))

    return SensorFrame(
        agent_num=agent.agent_num,
        tick=world.tick,
        ego_pose=agent.pose,
        detections=tuple(dets),
    )


def attach_grid(frame: SensorFrame, grid: BevGrid) -> SensorFrame:
    return replace(frame, local_grid=grid)


# ---------------------------------------------------------------------------
# local BEV rasterization (agent frame; sensor sits at the grid anchor)

_FOV_CACHE: dict[tuple, np.ndarray] = {}


def _fov_mask(spec: GridSpec, cfg: SensorConfig) -> np.ndarray:
    key = (spec.cells_x, spec.cells_y, spec.resolution_m_per_cell,
           cfg.num_cameras, cfg.fov_deg, cfg.max_range_m)
    cached = _FOV_CACHE.get(key)
    if cached is not None:
        return cached
    X, Y = cell_centers_local(spec)
    ranges = np.hypot(X, Y)
    bearings = np.arctan2(Y, X)
    mask = np.zeros(X.shape, dtype=bool)
    half = math.radians(cfg.fov_deg) / 2.0
    step = 2.0 * math.pi / cfg.num_cameras
    for i in range(cfg.num_cameras):
        rel = np.mod(bearings - i * step + math.pi, 2.0 * math.pi) - math.pi
        mask |= np.abs(rel) <= half + 1e-12
    mask &= ranges <= cfg.max_range_m
    _FOV_CACHE[key] = mask
    return mask


def _inside_obb_mask(X, Y, box) -> np.ndarray:
    cx, cy, yaw, length, width = box
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = X - cx, Y - cy
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return (np.abs(lx) <= length / 2.0) & (np.abs(ly) <= width / 2.0)


def _shadow_mask(X, Y, box) -> np.ndarray:
    """Cells whose sightline from the sensor (at the local origin) crosses the box."""
    from .geometry import obb_corners

    corners = obb_corners(*box)
    shadow = np.zeros(X.shape, dtype=bool)
    for i in range(4):
        p1 = corners[i]
        p2 = corners[(i + 1) % 4]
        # orientation of edge endpoints against the sensor->cell segment
        o1 = X * p1[1] - Y * p1[0]
        o2 = X * p2[1] - Y * p2[0]
        # orientation of segment endpoints against the edge
        ex, ey = p2[0] - p1[0], p2[1] - p1[1]
        o3 = ex * (0.0 - p1[1]) - ey * (0.0 - p1[0])
        o4 = ex * (Y - p1[1]) - ey * (X - p1[0])
        shadow |= ((o1 > 0) != (o2 > 0)) & ((o3 > 0) != (o4 > 0))
    return shadow | _inside_obb_mask(X, Y, box)


def occupancy_mask(footprint: tuple[float, float, float, float, float],
                   spec: GridSpec) -> np.ndarray:
    """Boolean mask of cells whose center lies inside a world-frame box."""
    X, Y = cell_centers_local(spec)
    o = spec.origin
    c, s = math.cos(o.yaw), math.sin(o.yaw)
    WX = o.x + c * X - s * Y
    WY = o.y + s * X + c * Y
    return _inside_obb_mask(WX, WY, footprint)


def ground_truth_grid(footprints: list, spec: GridSpec, tick: int | None = None) -> BevGrid:
    """Occupancy raster of exact footprints: occupied cells, free elsewhere."""
    cells = np.full((spec.cells_y, spec.cells_x), P_FREE)
    for fp in footprints:
        cells[occupancy_mask(fp, spec)] = P_OCCUPIED
    return BevGrid(spec, cells, tick)


def rasterize_local_bev(frame: SensorFrame, spec: GridSpec, cfg: SensorConfig | None = None) -> BevGrid:
    """Three-valued occupancy raster of one frame in the agent's own frame.

    Detection footprints become occupied, observed-free space (inside the
    FoV, not behind a detection) becomes free, everything else stays unknown.
    """
    if spec.resolution_m_per_cell <= 0:
        raise ValidationError("grid resolution must be positive")
    cfg = cfg or SensorConfig()
    X, Y = cell_centers_local(spec)

    observed = _fov_mask(spec, cfg)
    occupied = np.zeros(X.shape, dtype=bool)
    shadowed = np.zeros(X.shape, dtype=bool)
    for det in frame.detections:
        occupied |= _inside_obb_mask(X, Y, det.footprint)
        shadowed |= _shadow_mask(X, Y, det.footprint)

    cells = np.full(X.shape, P_UNKNOWN)
    cells[observed & ~shadowed] = P_FREE
    cells[occupied] = P_OCCUPIED
    return BevGrid(spec=spec, cells=cells, tick=frame.tick)
