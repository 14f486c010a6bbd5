"""Fusion center: common-frame alignment, grid fusion, tracking, forecasting.

Everything here is deterministic given its inputs; the only state lives in
FusionCenter (track list and per-agent grid history), which one consumer
advances tick by tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyInput, SpecMismatch, TickMismatch, ValidationError
from .geometry import Pose, wrap_angle
from .sensing import (
    P_UNKNOWN,
    BevGrid,
    Detection3D,
    GridSpec,
    SensorFrame,
)
from .world import DEFAULT_FOOTPRINTS

LOGIT_CLAMP = (0.01, 0.99)


@dataclass(frozen=True)
class EgoMotion:
    """Rigid displacement of one agent between two ticks, in the old frame."""
    agent_num: int
    from_tick: int
    to_tick: int
    dx: float
    dy: float
    dyaw: float

    def __post_init__(self):
        if self.to_tick <= self.from_tick:
            raise ValidationError("ego motion must span a positive tick gap")
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dyaw)):
            raise ValidationError("non-finite ego motion")


def ego_motion_between(agent_num: int, from_tick: int, to_tick: int,
                       pose_from: Pose, pose_to: Pose) -> EgoMotion:
    dx, dy = pose_from.invert_point(pose_to.x, pose_to.y)
    return EgoMotion(agent_num, from_tick, to_tick, dx, dy,
                     wrap_angle(pose_to.yaw - pose_from.yaw))


@dataclass(frozen=True)
class Track:
    track_id: int
    kind: str
    x: float
    y: float
    vx: float
    vy: float
    yaw: float
    yaw_rate: float
    history: tuple[tuple[int, float, float], ...]
    age: int = 0
    hits: int = 1

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class TrajectoryForecast:
    track_id: int
    kind: str
    points: tuple[tuple[float, float, float], ...]  # (t_s from now, x, y)
    model: str = "CV"


@dataclass(frozen=True)
class CollisionPrediction:
    track_a: int
    track_b: int
    ttc_s: float
    closest_point: tuple[float, float]


@dataclass(frozen=True)
class PerceptionProduct:
    tick: int
    fused_grid: BevGrid
    detections: tuple[Detection3D, ...]
    forecasts: tuple[TrajectoryForecast, ...]
    collisions: tuple[CollisionPrediction, ...]


# ---------------------------------------------------------------------------
# frame transforms

def to_global_frame(det: Detection3D, pose: Pose) -> Detection3D:
    if not all(math.isfinite(v) for v in (det.x, det.y, det.yaw)):
        raise ValidationError(f"non-finite detection {det}")
    gx, gy = pose.apply(det.x, det.y)
    return replace(det, x=gx, y=gy, yaw=wrap_angle(det.yaw + pose.yaw))


_CORNER_CACHE: dict[tuple[int, int, float], tuple[np.ndarray, np.ndarray]] = {}


def _cell_corners(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    key = (spec.cells_x, spec.cells_y, spec.resolution_m_per_cell)
    cached = _CORNER_CACHE.get(key)
    if cached is None:
        res = spec.resolution_m_per_cell
        cols = (np.arange(spec.cells_x) - spec.cells_x / 2) * res
        rows = (np.arange(spec.cells_y) - spec.cells_y / 2) * res
        cached = np.meshgrid(cols, rows)
        _CORNER_CACHE[key] = cached
    return cached


def _resample(src: BevGrid, dst_spec: GridSpec, to_src_local) -> np.ndarray:
    """Nearest-neighbor pull: each destination cell reads the source cell its
    corner lands in; corners outside the source become unknown."""
    DX, DY = _cell_corners(dst_spec)
    sx, sy = to_src_local(DX, DY)
    res_s = src.spec.resolution_m_per_cell
    # nudge against trig round-off pulling exact corners across cell edges
    sc = np.floor(src.spec.cells_x / 2 + sx / res_s + 1e-9).astype(int)
    sr = np.floor(src.spec.cells_y / 2 + sy / res_s + 1e-9).astype(int)
    inside = (sc >= 0) & (sc < src.spec.cells_x) & (sr >= 0) & (sr < src.spec.cells_y)
    out = np.full(DX.shape, P_UNKNOWN)
    out[inside] = src.cells[sr[inside], sc[inside]]
    return out


def ego_align(past: BevGrid, motion: EgoMotion) -> BevGrid:
    """Re-express a past agent-frame grid in the agent's current frame."""
    if past.tick is not None and past.tick != motion.from_tick:
        raise TickMismatch(
            f"grid is for tick {past.tick}, motion starts at {motion.from_tick}"
        )
    c, s = math.cos(motion.dyaw), math.sin(motion.dyaw)

    def to_src(DX, DY):
        return (c * DX - s * DY + motion.dx, s * DX + c * DY + motion.dy)

    ox, oy = past.spec.origin.apply(motion.dx, motion.dy)
    new_origin = Pose(ox, oy, wrap_angle(past.spec.origin.yaw + motion.dyaw))
    new_spec = replace(past.spec, origin=new_origin)
    return BevGrid(new_spec, _resample(past, new_spec, to_src), tick=motion.to_tick)


def align_to_spec(grid: BevGrid, dst_spec: GridSpec) -> BevGrid:
    """Resample a world-anchored grid into another world-anchored spec."""
    if grid.spec == dst_spec:
        return BevGrid(dst_spec, grid.cells.copy(), grid.tick)
    src_origin = grid.spec.origin
    dst_origin = dst_spec.origin

    def to_src(DX, DY):
        wx = dst_origin.x + math.cos(dst_origin.yaw) * DX - math.sin(dst_origin.yaw) * DY
        wy = dst_origin.y + math.sin(dst_origin.yaw) * DX + math.cos(dst_origin.yaw) * DY
        c, s = math.cos(src_origin.yaw), math.sin(src_origin.yaw)
        rx, ry = wx - src_origin.x, wy - src_origin.y
        return (c * rx + s * ry, -s * rx + c * ry)

    return BevGrid(dst_spec, _resample(grid, dst_spec, to_src), tick=grid.tick)


def fuse_grids(grids: list[BevGrid]) -> BevGrid:
    """Per-cell log-odds sum of occupancy evidence."""
    if not grids:
        raise EmptyInput("fuse_grids needs at least one grid")
    spec = grids[0].spec
    for g in grids[1:]:
        if g.spec != spec:
            raise SpecMismatch("all grids must share one spec")
    lo, hi = LOGIT_CLAMP
    total = np.zeros_like(grids[0].cells)
    for g in grids:
        p = np.clip(g.cells, lo, hi)
        total += np.log(p / (1.0 - p))
    fused = 1.0 / (1.0 + np.exp(-total))
    return BevGrid(spec, fused, tick=grids[0].tick)


# ---------------------------------------------------------------------------
# detection association

def _clusters_single_linkage(dets: list[Detection3D], gate_m: float) -> list[list[int]]:
    parent = list(range(len(dets)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(dets)):
        for j in range(i + 1, len(dets)):
            if dets[i].kind != dets[j].kind:
                continue
            if math.hypot(dets[i].x - dets[j].x, dets[i].y - dets[j].y) <= gate_m:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups: dict[int, list[int]] = {}
    for i in range(len(dets)):
        groups.setdefault(find(i), []).append(i)
    return [groups[r] for r in sorted(groups, key=lambda r: min(groups[r]))]


def _merge_cluster(cluster: list[Detection3D]) -> Detection3D:
    wsum = sum(d.confidence for d in cluster)
    if wsum <= 0:
        wsum = float(len(cluster))
        weights = [1.0] * len(cluster)
    else:
        weights = [d.confidence for d in cluster]
    x = sum(w * d.x for w, d in zip(weights, cluster)) / wsum
    y = sum(w * d.y for w, d in zip(weights, cluster)) / wsum
    length = sum(w * d.length for w, d in zip(weights, cluster)) / wsum
    width = sum(w * d.width for w, d in zip(weights, cluster)) / wsum
    yaw = math.atan2(
        sum(w * math.sin(d.yaw) for w, d in zip(weights, cluster)),
        sum(w * math.cos(d.yaw) for w, d in zip(weights, cluster)),
    )
    speeds = [(w, d.speed) for w, d in zip(weights, cluster) if d.speed is not None]
    speed = None
    if speeds:
        sw = sum(w for w, _ in speeds)
        speed = sum(w * s for w, s in speeds) / sw if sw > 0 else speeds[0][1]
    return Detection3D(
        kind=cluster[0].kind,
        x=x, y=y, yaw=wrap_angle(yaw),
        length=length, width=width,
        confidence=max(d.confidence for d in cluster),
        speed=speed,
        peripheral=any(d.peripheral for d in cluster),
    )


def associate_and_merge(dets: list[Detection3D], gate_m: float) -> list[Detection3D]:
    """Cluster same-class detections within the gate and merge each cluster.

    Iterates to a fixpoint so a second pass over the output is a no-op.
    """
    if gate_m <= 0:
        raise ValidationError("gate_m must be positive")
    current = list(dets)
    while True:
        clusters = _clusters_single_linkage(current, gate_m)
        if len(clusters) == len(current):
            return current
        current = [_merge_cluster([current[i] for i in idxs]) for idxs in clusters]


# ---------------------------------------------------------------------------
# tracking

@dataclass(frozen=True)
class TrackerConfig:
    gate_m: float = 2.0
    max_age: int = 5
    alpha: float = 0.6
    beta: float = 0.4
    history_cap: int = 50


@dataclass(frozen=True)
class TrackUpdate:
    tracks: tuple[Track, ...]
    matches: dict  # det index -> track_id


def update_tracks(
    tracks: list[Track],
    dets: list[Detection3D],
    dt_s: float,
    now_tick: int = 0,
    cfg: TrackerConfig = TrackerConfig(),
) -> TrackUpdate:
    """Greedy nearest-neighbor association plus alpha-beta filtering."""
    preds = [(t.x + t.vx * dt_s, t.y + t.vy * dt_s) for t in tracks]
    candidates = []
    for ti, t in enumerate(tracks):
        for di, d in enumerate(dets):
            if d.kind != t.kind:
                continue
            dist = math.hypot(preds[ti][0] - d.x, preds[ti][1] - d.y)
            if dist <= cfg.gate_m:
                candidates.append((dist, ti, di))
    candidates.sort()
    track_match: dict[int, int] = {}
    det_match: dict[int, int] = {}
    for dist, ti, di in candidates:
        if ti in track_match or di in det_match:
            continue
        track_match[ti] = di
        det_match[di] = ti

    out: list[Track] = []
    matches: dict[int, int] = {}
    for ti, t in enumerate(tracks):
        px, py = preds[ti]
        pyaw = wrap_angle(t.yaw + t.yaw_rate * dt_s)
        if ti in track_match:
            d = dets[track_match[ti]]
            rx, ry = d.x - px, d.y - py
            ryaw = wrap_angle(d.yaw - pyaw)
            nt = replace(
                t,
                x=px + cfg.alpha * rx,
                y=py + cfg.alpha * ry,
                vx=t.vx + (cfg.beta / dt_s) * rx,
                vy=t.vy + (cfg.beta / dt_s) * ry,
                yaw=wrap_angle(pyaw + cfg.alpha * ryaw),
                yaw_rate=t.yaw_rate + (cfg.beta / dt_s) * ryaw,
                age=0,
                hits=t.hits + 1,
            )
            nt = replace(nt, history=(t.history + ((now_tick, nt.x, nt.y),))[-cfg.history_cap:])
            out.append(nt)
            matches[track_match[ti]] = t.track_id
        else:
            if t.age + 1 > cfg.max_age:
                continue
            out.append(replace(t, x=px, y=py, yaw=pyaw, age=t.age + 1))

    next_id = max((t.track_id for t in tracks), default=0) + 1
    for di, d in enumerate(dets):
        if di in det_match:
            continue
        out.append(Track(
            track_id=next_id, kind=d.kind,
            x=d.x, y=d.y, vx=0.0, vy=0.0,
            yaw=d.yaw, yaw_rate=0.0,
            history=((now_tick, d.x, d.y),),
            age=0,
        ))
        matches[di] = next_id
        next_id += 1
    return TrackUpdate(tracks=tuple(out), matches=matches)


# ---------------------------------------------------------------------------
# forecasting and collision prediction

def forecast_trajectories(
    tracks: list[Track],
    horizon_s: float,
    dt_s: float,
    model: str = "CV",
) -> list[TrajectoryForecast]:
    """CV: straight line at current velocity. CTRV: constant-turn-rate arc."""
    if horizon_s < 0:
        raise ValidationError("horizon_s must be non-negative")
    if model not in ("CV", "CTRV"):
        raise ValidationError(f"unknown forecast model '{model}'")
    n = int(math.floor(horizon_s / dt_s + 1e-9))
    forecasts = []
    for t in tracks:
        pts = []
        for k in range(1, n + 1):
            tau = k * dt_s
            if model == "CV" or abs(t.yaw_rate) < 1e-6:
                if model == "CV":
                    x, y = t.x + t.vx * tau, t.y + t.vy * tau
                else:
                    x = t.x + t.speed * tau * math.cos(t.yaw)
                    y = t.y + t.speed * tau * math.sin(t.yaw)
            else:
                w = t.yaw_rate
                v = t.speed
                x = t.x + (v / w) * (math.sin(t.yaw + w * tau) - math.sin(t.yaw))
                y = t.y - (v / w) * (math.cos(t.yaw + w * tau) - math.cos(t.yaw))
            pts.append((tau, x, y))
        forecasts.append(TrajectoryForecast(t.track_id, t.kind, tuple(pts), model))
    return forecasts


def class_radius(kind: str) -> float:
    """Collision radius: half the footprint diagonal (circumscribed circle)."""
    length, width = DEFAULT_FOOTPRINTS[kind]
    return math.hypot(length, width) / 2.0


def _segment_contact(p0, p1, t0, t1, radius_sq) -> float | None:
    """Earliest time in [t0, t1] where |p(t)| <= radius, p linear in t."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    a = dx * dx + dy * dy
    b = 2.0 * (p0[0] * dx + p0[1] * dy)
    c = p0[0] * p0[0] + p0[1] * p0[1] - radius_sq
    if c <= 0.0:
        return t0
    if a <= 1e-18:
        return None
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    s = (-b - math.sqrt(disc)) / (2.0 * a)
    if 0.0 <= s <= 1.0:
        return t0 + s * (t1 - t0)
    return None


def _paths_may_touch(pa, pb, n, reach: float) -> bool:
    """Axis-aligned envelope gate over the shared point range."""
    axs = [p[1] for p in pa[:n]]; ays = [p[2] for p in pa[:n]]
    bxs = [p[1] for p in pb[:n]]; bys = [p[2] for p in pb[:n]]
    return not (
        max(axs) + reach < min(bxs) or max(bxs) + reach < min(axs)
        or max(ays) + reach < min(bys) or max(bys) + reach < min(ays)
    )


def predict_collisions(
    forecasts: list[TrajectoryForecast],
    radii_by_class: dict[str, float] | None = None,
    horizon_s: float = 5.0,
) -> list[CollisionPrediction]:
    """Earliest pairwise entry into contact on the piecewise-linear forecasts.

    Pairs already inside their combined radius at the forecast start are
    current state, not a prediction (and would otherwise make duplicate
    tracks of one object alarm forever); the search starts once they are
    apart.
    """
    out = []
    for i in range(len(forecasts)):
        for j in range(i + 1, len(forecasts)):
            fa, fb = forecasts[i], forecasts[j]
            ra = (radii_by_class or {}).get(fa.kind, class_radius(fa.kind))
            rb = (radii_by_class or {}).get(fb.kind, class_radius(fb.kind))
            r_sq = (ra + rb) ** 2
            n = min(len(fa.points), len(fb.points))
            if n and not _paths_may_touch(fa.points, fb.points, n, ra + rb):
                continue
            hit_t = None
            armed = True
            if n:
                _, ax, ay = fa.points[0]
                _, bx, by = fb.points[0]
                armed = (ax - bx) ** 2 + (ay - by) ** 2 > r_sq
            for k in range(n - 1):
                t0, ax0, ay0 = fa.points[k]
                t1, ax1, ay1 = fa.points[k + 1]
                _, bx0, by0 = fb.points[k]
                _, bx1, by1 = fb.points[k + 1]
                if not armed:
                    armed = (ax1 - bx1) ** 2 + (ay1 - by1) ** 2 > r_sq
                    continue
                t = _segment_contact(
                    (ax0 - bx0, ay0 - by0), (ax1 - bx1, ay1 - by1), t0, t1, r_sq
                )
                if t is not None:
                    hit_t = t
                    break
            if hit_t is None or hit_t > horizon_s:
                continue
            pa = _interp_point(fa.points, hit_t)
            pb = _interp_point(fb.points, hit_t)
            a_id, b_id = sorted((fa.track_id, fb.track_id))
            out.append(CollisionPrediction(
                track_a=a_id, track_b=b_id, ttc_s=hit_t,
                closest_point=((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0),
            ))
    out.sort(key=lambda c: (c.ttc_s, c.track_a, c.track_b))
    return out


def _interp_point(points, t):
    for k in range(len(points) - 1):
        t0, x0, y0 = points[k]
        t1, x1, y1 = points[k + 1]
        if t0 <= t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
    t0, x0, y0 = points[0]
    return (x0, y0)


# ---------------------------------------------------------------------------
# fusion center

@dataclass(frozen=True)
class FusionConfig:
    merge_gate_m: float = 3.0
    temporal_window: int = 3
    horizon_s: float = 5.0
    forecast_model: str = "CV"
    confirm_hits: int = 2
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    radii_by_class: dict | None = None


class FusionCenter:
    """Consumes per-agent frames for one tick and emits the fused product."""

    def __init__(self, common_spec: GridSpec, dt_s: float, cfg: FusionConfig | None = None):
        self.common_spec = common_spec
        self.dt_s = dt_s
        self.cfg = cfg or FusionConfig()
        self.tracks: tuple[Track, ...] = ()
        # (agent_num, tick) -> (common-frame grid, its clamped logit cells).
        # Past frames re-enter fusion from here: the common-frame resample of
        # a past agent-frame grid equals ego-aligning it first (the rigid
        # transforms compose), with one fewer nearest-neighbor pass.
        self._common_cache: dict[tuple[int, int], tuple[BevGrid, np.ndarray]] = {}

    def run_heads(self, tick: int, frames: list[SensorFrame]) -> PerceptionProduct:
        if not frames:
            raise EmptyInput("no frames buffered for this tick")
        frames = sorted(frames, key=lambda f: f.agent_num)

        global_dets: list[Detection3D] = []
        for f in frames:
            if f.ego_pose is None:
                raise ValidationError(f"frame from agent {f.agent_num} has no ego pose")
            for d in f.detections:
                global_dets.append(to_global_frame(d, f.ego_pose))
            if f.local_grid is not None:
                aligned = align_to_spec(f.local_grid, self.common_spec)
                p = np.clip(aligned.cells, *LOGIT_CLAMP)
                self._common_cache[(f.agent_num, f.tick)] = (aligned, np.log(p / (1.0 - p)))

        low = tick - self.cfg.temporal_window
        for key in [k for k in self._common_cache if k[1] < low]:
            del self._common_cache[key]
        window = sorted(k for k in self._common_cache if low <= k[1] <= tick)

        if window:
            # log-odds sum over the window, from the cached logits
            total = np.zeros((self.common_spec.cells_y, self.common_spec.cells_x))
            for k in window:
                total += self._common_cache[k][1]
            fused = BevGrid(self.common_spec, 1.0 / (1.0 + np.exp(-total)), tick)
        else:
            from .sensing import unknown_grid

            fused = unknown_grid(self.common_spec, tick)

        merged = associate_and_merge(global_dets, self.cfg.merge_gate_m)
        upd = update_tracks(list(self.tracks), merged, self.dt_s, tick, self.cfg.tracker)
        self.tracks = upd.tracks
        by_id = {t.track_id: t for t in upd.tracks}
        stamped = []
        for di, d in enumerate(merged):
            track = by_id.get(upd.matches.get(di, -1))
            speed = track.speed if track is not None else d.speed
            peripheral = (
                abs(d.x - self.common_spec.origin.x) > self.common_spec.extent_x_m
                or abs(d.y - self.common_spec.origin.y) > self.common_spec.extent_y_m
            )
            stamped.append(replace(d, speed=speed, peripheral=peripheral))

        # clutter suppression: only tracks seen at least twice drive the
        # forecasting and collision heads
        confirmed = [t for t in self.tracks if t.hits >= self.cfg.confirm_hits]
        forecasts = forecast_trajectories(
            confirmed, self.cfg.horizon_s, self.dt_s, self.cfg.forecast_model
        )
        collisions = predict_collisions(forecasts, self.cfg.radii_by_class, self.cfg.horizon_s)

        return PerceptionProduct(
            tick=tick,
            fused_grid=fused,
            detections=tuple(stamped),
            forecasts=tuple(forecasts),
            collisions=tuple(collisions),
        )
