import math

import numpy as np
import pytest

from gapbench.scenario import (ConvexRegion, Position, SceneError,
                               ScenarioParams, condition_values,
                               estimate_t_brake, estimate_t_underline_C,
                               make_scenario)
from scene_factory import crossing_scene

EXACT = ScenarioParams(inflation_radius=0.0)


def test_position_rejects_non_finite():
    with pytest.raises(SceneError):
        Position(float("nan"), 0.0)


def test_region_orientation_does_not_matter():
    ccw = ConvexRegion([[-1, -1], [1, -1], [1, 1], [-1, 1]])
    cw = ConvexRegion([[-1, 1], [1, 1], [1, -1], [-1, -1]])
    pts = np.array([[0.0, 0.0], [1.5, 0.0], [0.0, -1.4]])
    assert np.array_equal(ccw.contains(pts), cw.contains(pts))
    assert list(ccw.contains(pts)) == [True, False, False]
    assert list(ccw.contains(pts, radius=0.5)) == [True, True, True]


def test_region_distance():
    r = ConvexRegion([[-1, -1], [1, -1], [1, 1], [-1, 1]])
    assert r.distance([0.0, 0.0]) == 0.0
    assert r.distance([3.0, 0.0]) == pytest.approx(2.0)
    assert r.distance([2.0, 2.0]) == pytest.approx(math.sqrt(2.0))


def test_ray_interval_through_square():
    r = ConvexRegion([[-2.5, -2.5], [2.5, -2.5], [2.5, 2.5], [-2.5, 2.5]])
    lo, hi = r.ray_interval([-10.0, 0.0], [1.0, 0.0])
    assert (lo, hi) == (7.5, 12.5)
    lo, hi = r.ray_interval([-10.0, 0.0], [1.0, 0.0], radius=1.0)
    assert (lo, hi) == (6.5, 13.5)
    assert r.ray_interval([-10.0, 5.0], [1.0, 0.0]) is None


def test_entry_estimate_is_distance_over_speed():
    scene = crossing_scene(ego_x0=-102.5, ego_v=10.0, tgt_y0=-998.5, tgt_v=0.0,
                           duration=15.0)
    scenario = make_scenario("intersection", EXACT)
    assert estimate_t_underline_C(scene, 0.0, scenario) == pytest.approx(10.0)
    # two seconds in: 80 m left at 10 m/s
    assert estimate_t_underline_C(scene, 2.0, scenario) == pytest.approx(10.0)


def test_entry_estimate_nonpositive_once_inside():
    scene = crossing_scene(ego_x0=-40.0, ego_v=10.0, tgt_y0=-900.0, tgt_v=0.0,
                           duration=10.0)
    scenario = make_scenario("intersection", EXACT)
    t_inside = 5.0  # ego at x=10, past the region
    assert estimate_t_underline_C(scene, t_inside, scenario) <= t_inside


def test_entry_estimate_clamps_for_parked_ego():
    scene = crossing_scene(ego_x0=-102.5, ego_v=0.0, tgt_y0=-900.0, tgt_v=0.0,
                           duration=10.0)
    scenario = make_scenario("intersection", EXACT)
    assert estimate_t_underline_C(scene, 0.0, scenario) == pytest.approx(3600.0)
    assert estimate_t_underline_C(scene, 4.0, scenario) == pytest.approx(3604.0)


def test_braking_time_examples():
    scene = crossing_scene(ego_v=10.0, duration=8.0)
    assert estimate_t_brake(scene, 1.0) == pytest.approx(2.5)
    fast = crossing_scene(ego_x0=-150.0, ego_v=20.0, duration=6.0)
    scenario5 = make_scenario("intersection", ScenarioParams(a_safe=5.0))
    assert estimate_t_brake(fast, 1.0, scenario5) == pytest.approx(4.0)
    parked = crossing_scene(ego_x0=-50.0, ego_v=0.0, duration=6.0)
    assert estimate_t_brake(parked, 1.0) == pytest.approx(0.0)


def test_braking_time_monotone_in_speed():
    speeds = [2.0, 6.0, 11.0, 17.0]
    braking = [estimate_t_brake(crossing_scene(ego_v=v, duration=5.0), 1.0)
               for v in speeds]
    assert all(b1 < b2 for b1, b2 in zip(braking, braking[1:]))
    assert all(b >= 0 for b in braking)


def test_conditions_flip_at_known_entry():
    # target crosses the inflated edge y=-3.5 exactly at t=5.0
    scene = crossing_scene(tgt_y0=-28.5, tgt_v=5.0)
    _, _, before = condition_values(scene, 4.9)
    _, _, after = condition_values(scene, 5.0)
    assert not before and after


def test_conditions_are_pure():
    scene = crossing_scene()
    for t in (0.0, 3.3, 7.0):
        assert condition_values(scene, t) == condition_values(scene, t)


def test_ego_never_entering_keeps_c_c_false():
    scene = crossing_scene(ego_x0=-500.0, ego_v=1.0, duration=10.0)
    scenario = make_scenario("intersection")
    grid = scenario.condition_grid(scene, scene.sample_times)
    assert not grid.c_c.any()


def test_blocked_gap_condition_tracks_preceding_vehicle():
    # blocker ahead of the ego clears the inflated far edge x=3.5 at t=4.0
    scene = crossing_scene(ego_x0=-73.5, ego_v=10.0, blocker=(-44.5, 12.0),
                           duration=12.0)
    scenario = make_scenario("intersection")
    assert scenario.c_s(scene, 3.9)
    assert not scenario.c_s(scene, 4.1)
    grid = scenario.condition_grid(scene, scene.sample_times)
    last_blocked = scene.sample_times[grid.c_s].max()
    assert last_blocked == pytest.approx(4.0, abs=0.1 + 1e-9)


def test_entry_sign_condition_on_generated_scenes(intersection_batch):
    scenes, truths = intersection_batch
    scenario = make_scenario("intersection")
    tmap = {t.scene_id: t for t in truths}
    for scene in scenes[:60]:
        t_c = tmap[scene.scene_id].t_c
        grid = scenario.condition_grid(scene, scene.sample_times)
        before = grid.times < t_c - 1e-9
        after = grid.times > t_c + 1e-9
        assert np.all(grid.t_underline_c[before] > grid.times[before])
        assert np.all(grid.t_underline_c[after] <= grid.times[after])


def test_grid_matches_pointwise_handles():
    scene = crossing_scene(blocker=(-44.5, 12.0))
    scenario = make_scenario("intersection")
    grid = scenario.condition_grid(scene, scene.sample_times)
    for i in range(0, len(grid.times), 17):
        t = float(grid.times[i])
        assert grid.c_s[i] == scenario.c_s(scene, t)
        assert grid.c_c[i] == scenario.c_c(scene, t)
        assert grid.c_a[i] == scenario.c_a(scene, t)
        assert grid.t_underline_c[i] == pytest.approx(scenario.t_underline_c(scene, t))
        assert grid.t_brake[i] == pytest.approx(scenario.t_brake(scene, t))


def test_lane_change_region_translates_then_freezes(lane_change_batch):
    scenes, truths = lane_change_batch
    tmap = {t.scene_id: t for t in truths}
    scenario = make_scenario("lane_change")
    scene = next(s for s in scenes if tmap[s.scene_id].a == 1)
    t_entry = tmap[scene.scene_id].t_a
    early = scenario.contested_space(scene, 0.5)
    assert early.mobile
    later = scenario.contested_space(scene, min(t_entry - 0.5, 1.5))
    # pre-entry the region follows the moving target downstream
    assert later.region.vertices[:, 0].mean() > early.region.vertices[:, 0].mean()
    frozen_a = scenario.contested_space(scene, t_entry + 0.5)
    frozen_b = scenario.contested_space(scene, t_entry + 1.0)
    assert np.allclose(frozen_a.region.vertices, frozen_b.region.vertices)


def test_undefined_position_is_an_error():
    scene = crossing_scene(duration=5.0)
    with pytest.raises(SceneError):
        scene.ego.position_at(9.0)


def test_scene_requires_one_ego_and_one_target():
    from gapbench.scenario import AgentTrack, Scene
    times = np.arange(0.0, 1.0, 0.1)
    trk = lambda aid, role: AgentTrack(aid, role, times,
                                       np.zeros((len(times), 2)))
    with pytest.raises(SceneError):
        Scene("bad", [trk("a", "ego"), trk("b", "ego"), trk("c", "target")],
              "intersection")
