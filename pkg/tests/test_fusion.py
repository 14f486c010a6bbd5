import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentinel.errors import EmptyInput, SpecMismatch, TickMismatch, ValidationError
from sentinel.fusion import (
    CollisionPrediction,
    EgoMotion,
    FusionCenter,
    FusionConfig,
    Track,
    TrajectoryForecast,
    associate_and_merge,
    class_radius,
    ego_align,
    ego_motion_between,
    forecast_trajectories,
    fuse_grids,
    predict_collisions,
    to_global_frame,
    update_tracks,
)
from sentinel.geometry import Pose
from sentinel.sensing import (
    BevGrid,
    Detection3D,
    GridSpec,
    SensorAgent,
    attach_grid,
    rasterize_local_bev,
    sense_frame,
    unknown_grid,
)
from sentinel.world import WorldState
from tests.test_sensing import NOISELESS
from tests.test_world import make_actor


def det(x=0.0, y=0.0, yaw=0.0, kind="car", conf=0.9, length=4.0, width=2.0, speed=None):
    return Detection3D(kind=kind, x=x, y=y, yaw=yaw, length=length, width=width,
                       confidence=conf, speed=speed)


def track(tid=1, x=0.0, y=0.0, vx=0.0, vy=0.0, yaw=0.0, yaw_rate=0.0, kind="car",
          age=0, hits=2):
    return Track(track_id=tid, kind=kind, x=x, y=y, vx=vx, vy=vy, yaw=yaw,
                 yaw_rate=yaw_rate, history=((0, x, y),), age=age, hits=hits)


# ---------------------------------------------------------------------------
# frame transforms

def test_to_global_identity():
    d = det(1.0, 2.0, 0.3)
    assert to_global_frame(d, Pose(0, 0, 0)) == d


def test_to_global_rigid_transform():
    d = det(1.0, 0.0, 0.0)
    g = to_global_frame(d, Pose(5.0, 0.0, math.pi / 2))
    assert g.x == pytest.approx(5.0, abs=1e-12)
    assert g.y == pytest.approx(1.0, abs=1e-12)
    assert g.yaw == pytest.approx(math.pi / 2)


def test_to_global_nan_rejected():
    with pytest.raises(ValidationError):
        to_global_frame(det(float("nan"), 0.0), Pose(0, 0, 0))


# ---------------------------------------------------------------------------
# ego alignment

def grid_with(cells_val=0.5, spec=None, tick=0):
    spec = spec or GridSpec()
    return BevGrid(spec, np.full((spec.cells_y, spec.cells_x), cells_val), tick)


def test_ego_align_zero_motion_identity():
    g = grid_with(0.5)
    g.cells[40, 60] = 0.9
    g.cells[10, 20] = 0.3
    out = ego_align(g, EgoMotion(0, 0, 1, 0.0, 0.0, 0.0))
    assert np.array_equal(out.cells, g.cells)


def test_ego_align_translation_shift():
    g = grid_with(0.5)
    g.cells[50, 60] = 0.9
    out = ego_align(g, EgoMotion(0, 0, 1, 1.0, 0.0, 0.0))  # +1 m x = 2 columns
    assert out.cells[50, 58] == 0.9
    assert out.cells[50, 60] == 0.5
    # vacated far-edge columns become unknown
    assert np.all(out.cells[:, 98:] == 0.5)


def test_ego_align_half_turn():
    g = grid_with(0.5)
    g.cells[50, 60] = 0.9
    out = ego_align(g, EgoMotion(0, 0, 1, 0.0, 0.0, math.pi))
    assert out.cells[50, 40] == 0.9


def test_ego_align_tick_mismatch():
    g = grid_with(0.5, tick=4)
    with pytest.raises(TickMismatch):
        ego_align(g, EgoMotion(0, 5, 6, 0.0, 0.0, 0.0))


def test_ego_motion_between_inverts_pose_step():
    a = Pose(3.0, -2.0, 0.4)
    b = Pose(3.5, -1.0, 0.9)
    m = ego_motion_between(0, 1, 3, a, b)
    # applying the motion in a's frame lands on b
    assert a.apply(m.dx, m.dy) == pytest.approx((b.x, b.y))
    assert (a.yaw + m.dyaw) % (2 * math.pi) == pytest.approx(b.yaw % (2 * math.pi))


# ---------------------------------------------------------------------------
# grid fusion

def test_fuse_neutral():
    out = fuse_grids([grid_with(0.5), grid_with(0.5)])
    assert np.allclose(out.cells, 0.5)


def test_fuse_closed_form():
    out = fuse_grids([grid_with(0.8), grid_with(0.8)])
    assert np.allclose(out.cells, 16.0 / 17.0)


def test_fuse_empty_input():
    with pytest.raises(EmptyInput):
        fuse_grids([])


def test_fuse_spec_mismatch():
    with pytest.raises(SpecMismatch):
        fuse_grids([grid_with(0.5), grid_with(0.5, GridSpec(cells_x=50, cells_y=100))])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5),
       st.randoms(use_true_random=False))
def test_fuse_permutation_invariant(values, rnd):
    grids = [grid_with(v) for v in values]
    a = fuse_grids(grids)
    shuffled = grids[:]
    rnd.shuffle(shuffled)
    b = fuse_grids(shuffled)
    assert np.allclose(a.cells, b.cells, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=4))
def test_fuse_unknown_padding_neutral(values):
    grids = [grid_with(v) for v in values]
    a = fuse_grids(grids)
    b = fuse_grids(grids + [grid_with(0.5), grid_with(0.5)])
    assert np.allclose(a.cells, b.cells, atol=1e-12)


# ---------------------------------------------------------------------------
# association

def test_merge_duplicates():
    merged = associate_and_merge([det(0, 0, conf=0.7), det(0, 0, conf=0.9)], 2.0)
    assert len(merged) == 1
    assert merged[0].confidence == 0.9


def test_outside_gate_stays_separate():
    merged = associate_and_merge([det(0, 0), det(3.0, 0)], 2.0)
    assert len(merged) == 2


def test_confidence_weighted_mean():
    dets = [det(0.0, 0, conf=0.9), det(1.0, 0, conf=0.6), det(2.0, 0, conf=0.3)]
    merged = associate_and_merge(dets, 2.0)
    assert len(merged) == 1
    assert merged[0].x == pytest.approx(0.6 / 0.9, abs=1e-12)  # 0.6666...
    assert merged[0].confidence == 0.9


def test_classes_do_not_merge():
    merged = associate_and_merge([det(0, 0), det(0.5, 0, kind="truck")], 2.0)
    assert len(merged) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(
    st.tuples(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.05, 1.0),
              st.sampled_from(["car", "pedestrian"])),
    min_size=0, max_size=8,
))
def test_merge_idempotent_and_contracts(items):
    dets = [det(x, y, conf=c, kind=k) for x, y, c, k in items]
    once = associate_and_merge(dets, 2.0)
    twice = associate_and_merge(once, 2.0)
    assert len(once) <= len(dets)
    assert twice == once


# ---------------------------------------------------------------------------
# tracking

def test_new_detection_spawns_track():
    upd = update_tracks([], [det(1.0, 2.0)], 0.1, now_tick=4)
    assert len(upd.tracks) == 1
    t = upd.tracks[0]
    assert (t.x, t.y, t.age, t.hits) == (1.0, 2.0, 0, 1)
    assert t.history == ((4, 1.0, 2.0),)


def test_association_against_predicted_position():
    t = track(tid=1, x=0.0, y=0.0, vx=1.0, vy=0.0)
    upd = update_tracks([t], [det(0.1, 0.0)], 0.1, now_tick=1)
    assert len(upd.tracks) == 1
    assert upd.tracks[0].track_id == 1
    assert upd.matches == {0: 1}
    assert upd.tracks[0].hits == 3


def test_stale_track_dropped():
    t = track(tid=1, age=6)
    upd = update_tracks([t], [], 0.1)
    assert upd.tracks == ()


def test_coasting_track_kept_until_max_age():
    t = track(tid=1, x=0.0, vx=2.0, age=0)
    upd = update_tracks([t], [], 0.1)
    assert len(upd.tracks) == 1
    assert upd.tracks[0].age == 1
    assert upd.tracks[0].x == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# forecasting

def test_zero_speed_forecast_stays_put():
    f = forecast_trajectories([track(x=3.0, y=4.0)], 1.0, 0.1)[0]
    assert len(f.points) == 10
    assert all((x, y) == (3.0, 4.0) for _, x, y in f.points)


def test_cv_forecast_points():
    t = track(x=0.0, y=0.0, vx=2.0, vy=0.0)
    f = forecast_trajectories([t], 2.0, 0.5, "CV")[0]
    assert [(x, y) for _, x, y in f.points] == [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]
    assert [t for t, _, _ in f.points] == pytest.approx([0.5, 1.0, 1.5, 2.0])


def test_zero_horizon_empty():
    assert forecast_trajectories([track()], 0.0, 0.1)[0].points == ()


def test_ctrv_arc():
    # quarter turn: speed 1, yaw_rate pi/2 over 1 s traces a circle of radius 2/pi
    t = track(x=0.0, y=0.0, vx=1.0, vy=0.0, yaw=0.0, yaw_rate=math.pi / 2)
    f = forecast_trajectories([t], 1.0, 0.5, "CTRV")[0]
    r = 1.0 / (math.pi / 2)
    _, x, y = f.points[-1]
    assert (x, y) == pytest.approx((r, r), abs=1e-12)


def test_forecast_model_validation():
    with pytest.raises(ValidationError):
        forecast_trajectories([], 1.0, 0.1, "banana")


# ---------------------------------------------------------------------------
# collision prediction

def fc(tid, points, kind="car"):
    return TrajectoryForecast(track_id=tid, kind=kind, points=tuple(points))


def line(tid, x0, y0, vx, vy, dt=0.1, n=50, kind="car"):
    return fc(tid, [((k + 1) * dt, x0 + vx * (k + 1) * dt, y0 + vy * (k + 1) * dt)
                    for k in range(n)], kind)


def test_parallel_tracks_no_collision():
    out = predict_collisions([line(1, 0, 0, 5, 0), line(2, 0, 10, 5, 0)],
                             {"car": 1.0}, 5.0)
    assert out == []


def test_head_on_ttc():
    out = predict_collisions([line(1, 0, 0, 10, 0), line(2, 20, 0, 0, 0)],
                             {"car": 1.0}, 5.0)
    assert len(out) == 1
    assert out[0].ttc_s == pytest.approx(1.8, abs=1e-9)
    assert out[0].closest_point[0] == pytest.approx(19.0, abs=1e-6)


def test_horizon_cut():
    out = predict_collisions([line(1, 0, 0, 2.0, 0, n=80), line(2, 20, 0, 0, 0, n=80)],
                             {"car": 1.0}, 5.0)
    # contact at (20-2)/2 = 9 s > horizon
    assert out == []


def test_pair_order_symmetric():
    a = line(1, 0, 0, 10, 0)
    b = line(2, 20, 0, 0, 0)
    out1 = predict_collisions([a, b], {"car": 1.0}, 5.0)
    out2 = predict_collisions([b, a], {"car": 1.0}, 5.0)
    assert out1 == out2


def test_already_interpenetrating_not_reported():
    out = predict_collisions([line(1, 0, 0, 1, 0), line(2, 1.0, 0, 1, 0)],
                             {"car": 1.0}, 5.0)
    assert out == []


def test_class_radius_is_half_diagonal():
    assert class_radius("pedestrian") == pytest.approx(math.hypot(0.6, 0.6) / 2)
    assert class_radius("car") == pytest.approx(math.hypot(4.5, 1.9) / 2)


# ---------------------------------------------------------------------------
# run_heads

def noiseless_frame(world, agent_num, pose, actor_id=None):
    agent = SensorAgent(agent_num=agent_num, pose=pose, config=NOISELESS,
                        actor_id=actor_id)
    frame = sense_frame(world, agent, seed=0)
    spec = GridSpec(origin=pose)
    return attach_grid(frame, rasterize_local_bev(frame, spec, NOISELESS))


def test_run_heads_single_agent_recovers_ground_truth():
    world = WorldState(0, 0.0, (
        make_actor("a", x=5.0, y=2.0, yaw=0.2),
        make_actor("b", kind="van", x=-6.0, y=-3.0),
    ))
    center = FusionCenter(GridSpec(cells_x=200, cells_y=200), dt_s=0.1)
    product = center.run_heads(0, [noiseless_frame(world, 0, Pose(0.5, 0.5, 0.3))])
    assert len(product.detections) == 2
    by_kind = {d.kind: d for d in product.detections}
    assert by_kind["car"].x == pytest.approx(5.0, abs=1e-9)
    assert by_kind["car"].y == pytest.approx(2.0, abs=1e-9)
    assert by_kind["van"].yaw == pytest.approx(0.0, abs=1e-9)


def test_run_heads_union_of_disjoint_views():
    world = WorldState(0, 0.0, (
        make_actor("east", x=40.0),
        make_actor("west", x=-40.0),
    ))
    cfg = NOISELESS  # max range 60: each agent sees only its side
    a = noiseless_frame(world, 0, Pose(45.0, 0.0, 0.0))
    b = noiseless_frame(world, 1, Pose(-45.0, 0.0, 0.0))
    assert len(a.detections) == 1 and len(b.detections) == 1
    center = FusionCenter(GridSpec(cells_x=200, cells_y=200), dt_s=0.1)
    product = center.run_heads(0, [a, b])
    assert len(product.detections) == 2


def test_run_heads_empty_buffer():
    center = FusionCenter(GridSpec(), dt_s=0.1)
    with pytest.raises(EmptyInput):
        center.run_heads(0, [])


def test_run_heads_peripheral_flag():
    world = WorldState(0, 0.0, (make_actor("far", x=40.0),))
    center = FusionCenter(GridSpec(), dt_s=0.1)  # common grid only +-25 m
    product = center.run_heads(0, [noiseless_frame(world, 0, Pose(0, 0, 0))])
    assert product.detections[0].peripheral


def test_occlusion_recovery_on_t_junction(t_junction_trace):
    """At some tick every single agent misses an actor the fused set has."""
    trace = t_junction_trace
    gt_by_tick = {tr.tick: tr.gt_actors for tr in trace.ticks}

    def matched(dets, actor):
        return any(d.kind == actor.kind and
                   math.hypot(d.x - actor.x, d.y - actor.y) <= 2.0 for d in dets)

    hit = 0
    for i, tr in enumerate(trace.ticks):
        if tr.product is None or tr.product.tick not in gt_by_tick:
            continue
        actors = gt_by_tick[tr.product.tick]
        fused_set = {a.actor_id for a in actors if matched(tr.product.detections, a)}
        ok = True
        for dets in trace.agent_detections[i].values():
            agent_set = {a.actor_id for a in tr.gt_actors if matched(dets, a)}
            if not (fused_set - agent_set):
                ok = False
                break
        if ok:
            hit += 1
    assert hit > 0
