import math
from dataclasses import replace

import numpy as np
import pytest

from gapbench.extraction import (CharacteristicTimes, Excluded,
                                 RejectedT0, T0Policy, build_sample,
                                 compute_t_crit, extract_characteristic_times,
                                 extract_dataset, select_t0)
from gapbench.scenario import ScenarioParams, SceneError, make_scenario
from gapbench.scene_io import save_dataset
from scene_factory import crossing_scene

EXACT = make_scenario("intersection", ScenarioParams(inflation_radius=0.0))
DEFAULT = make_scenario("intersection")


def timeline(scene, scenario=DEFAULT):
    times = extract_characteristic_times(scene, scenario)
    assert isinstance(times, CharacteristicTimes)
    return replace(times, t_crit=compute_t_crit(scene, times, scenario))


def test_known_entry_times_recovered():
    # ego enters the inflated region at 7.0, target at 5.0
    scene = crossing_scene(ego_x0=-73.5, ego_v=10.0, tgt_y0=-28.5, tgt_v=5.0)
    times = extract_characteristic_times(scene, DEFAULT)
    assert times.a == 1
    assert times.t_a == pytest.approx(5.0, abs=0.1)
    assert times.t_c == pytest.approx(7.0, abs=0.1)
    assert times.t_s == 0.0  # no blocker: gap open from the recording start


def test_target_entering_after_ego_is_rejected_gap():
    scene = crossing_scene(ego_x0=-43.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0)
    times = extract_characteristic_times(scene, DEFAULT)
    assert times.a == 0 and times.t_c < times.t_a


def test_no_observable_decision_is_excluded():
    scene = crossing_scene(ego_x0=-100.0, ego_v=0.0, tgt_y0=-50.0, tgt_v=0.0,
                           duration=5.0)
    out = extract_characteristic_times(scene, DEFAULT)
    assert isinstance(out, Excluded)


def test_blocker_sets_the_gap_opening():
    scene = crossing_scene(ego_x0=-73.5, ego_v=10.0, blocker=(-44.5, 12.0))
    times = extract_characteristic_times(scene, DEFAULT)
    assert times.t_s == pytest.approx(4.0, abs=0.1 + 1e-9)


def test_t_a_fallback_when_target_never_enters():
    scene = crossing_scene(ego_x0=-43.5, ego_v=10.0, tgt_y0=-60.0, tgt_v=0.0,
                           duration=8.0)
    times = extract_characteristic_times(scene, DEFAULT)
    assert times.t_a == pytest.approx(8.0 + 0.5)
    assert times.a == 0


def test_t_crit_closed_form():
    # constant 10 m/s, 100 m from the (uninflated) boundary, a_safe=4:
    # margin(t) = (10 - t) - 2.5 crosses zero at 7.5 s
    scene = crossing_scene(ego_x0=-102.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=12.0)
    times = timeline(scene, EXACT)
    assert times.t_crit == pytest.approx(7.5, abs=1e-6)


def test_t_crit_at_opening_when_already_critical():
    scene = crossing_scene(ego_x0=-12.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=10.0)
    times = timeline(scene, EXACT)
    assert times.t_crit == times.t_s == 0.0


def test_t_crit_fallback_when_never_critical():
    # slow far ego (margin stays positive), target enters early
    scene = crossing_scene(ego_x0=-102.5, ego_v=5.0, tgt_y0=-13.5, tgt_v=5.0,
                           duration=15.0)
    times = timeline(scene, EXACT)
    assert times.t_crit == pytest.approx(times.t_a + 0.5)


def test_select_t0_initial_is_the_opening():
    scene = crossing_scene()
    times = timeline(scene)
    assert select_t0(T0Policy.initial(), scene, times, DEFAULT) == times.t_s


def test_select_t0_fixed_gap_solves_the_crossing():
    # constant approach: entry estimate is identically 10, so gap(t) = 10 - t
    scene = crossing_scene(ego_x0=-102.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=12.0)
    times = timeline(scene, EXACT)
    t_0 = select_t0(T0Policy.fixed_gap(4.0), scene, times, EXACT)
    assert t_0 == pytest.approx(6.0, abs=1e-9)


def test_select_t0_fixed_gap_rejects_when_never_matched():
    scene = crossing_scene(ego_x0=-12.5, ego_v=5.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=10.0)
    times = timeline(scene, EXACT)
    out = select_t0(T0Policy.fixed_gap(40.0), scene, times, EXACT)
    assert isinstance(out, RejectedT0)


def test_select_t0_critical_rejects_at_critical_opening():
    scene = crossing_scene(ego_x0=-12.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=10.0)
    times = timeline(scene, EXACT)
    assert times.t_crit == times.t_s
    out = select_t0(T0Policy.critical(), scene, times, EXACT)
    assert isinstance(out, RejectedT0)


def test_build_sample_windows():
    scene = crossing_scene(ego_x0=-102.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=12.0)
    times = timeline(scene, EXACT)
    sample = build_sample(scene, 6.0, 2, 0.5, times, EXACT)
    assert np.allclose(sample.t_i, [5.5, 6.0])
    assert len(sample.t_o) == 8  # ceil((10 - 6) / 0.5)
    assert sample.t_o[-1] >= times.t_c > sample.t_o[-1] - 0.5
    assert sample.gap_at_t0 == pytest.approx(4.0, abs=1e-9)


def test_interpolated_positions_exact_on_linear_motion():
    # native 4 Hz; window timestamps fall between native samples
    scene = crossing_scene(ego_x0=-102.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           rate=4.0, duration=12.0)
    times = timeline(scene, EXACT)
    sample = build_sample(scene, 6.0, 4, 0.3, times, EXACT)
    ego_row = sample.roles.index("ego")
    expected_x = -102.5 + 10.0 * sample.t_i
    assert np.max(np.abs(sample.x_i[ego_row, :, 0] - expected_x)) < 1e-6
    expected_y = -48.5 + 5.0 * sample.t_o
    assert np.max(np.abs(sample.x_o[:, 1] - expected_y)) < 1e-6


def test_window_back_extrapolates_before_recording_start():
    scene = crossing_scene(ego_x0=-102.5, ego_v=10.0, tgt_y0=-48.5, tgt_v=5.0,
                           duration=12.0)
    times = timeline(scene, EXACT)
    sample = build_sample(scene, 0.0, 4, 0.5, times, EXACT)
    assert sample.t_i[0] == pytest.approx(-1.5)
    ego_row = sample.roles.index("ego")
    assert sample.x_i[ego_row, 0, 0] == pytest.approx(-102.5 - 15.0, abs=1e-9)


def test_build_sample_outside_recording_errors():
    scene = crossing_scene(duration=8.0)
    times = timeline(scene)
    with pytest.raises(SceneError):
        build_sample(scene, 9.5, 2, 0.5, times, DEFAULT)


def test_empty_batch_gives_empty_dataset():
    ds = extract_dataset([], T0Policy.initial(), 2, 0.5, DEFAULT)
    assert len(ds) == 0 and ds.excluded == {} and ds.rejected == {}


def test_dataset_invariants(intersection_dataset):
    ds = intersection_dataset
    assert len(ds) > 100
    for s in ds.samples:
        assert s.t_s <= s.t_0 < min(s.t_a, s.t_crit)
        assert (s.a == 1) == (s.t_a < s.t_c)
        assert len(s.t_i) == 2
        assert len(s.t_o) == math.ceil((s.t_c - s.t_0) / s.dt - 1e-9)
        assert s.t_o[-1] >= s.t_c - 1e-6 > s.t_o[-1] - s.dt


def test_dataset_order_and_reasons(intersection_dataset, intersection_batch):
    ds = intersection_dataset
    ids = [s.scene_id for s in ds.samples]
    assert ids == sorted(ids)
    scenes, _ = intersection_batch
    counted = len(ds) + sum(ds.excluded.values()) + sum(ds.rejected.values()) \
        + len(ds.errors)
    assert counted == len(scenes)


def test_fixed_gap_threshold_monotone(intersection_batch):
    # monotone above the braking-time regime: raising the requested gap only
    # removes scenes whose initial gap was too small.  Below the braking time
    # the window filter rejects everything instead (t_0 would land past
    # t_crit), so tiny gap requests are not comparable.
    scenes, _ = intersection_batch
    sizes = [len(extract_dataset(scenes[:300], T0Policy.fixed_gap(g), 2, 0.5,
                                 DEFAULT)) for g in (3.5, 5.0, 6.5)]
    assert sizes[0] >= sizes[1] >= sizes[2] > 0
    below_braking = extract_dataset(scenes[:300], T0Policy.fixed_gap(0.5), 2,
                                    0.5, DEFAULT)
    assert len(below_braking) == 0


def test_extraction_is_deterministic(tmp_path, intersection_batch):
    scenes, _ = intersection_batch
    a = extract_dataset(scenes[:50], T0Policy.initial(), 2, 0.5, DEFAULT)
    b = extract_dataset(scenes[:50], T0Policy.initial(), 2, 0.5, DEFAULT)
    assert a.provenance == b.provenance
    pa, _ = save_dataset(a, tmp_path / "a")
    pb, _ = save_dataset(b, tmp_path / "b")
    assert pa.read_bytes() == pb.read_bytes()


def test_bad_scene_is_reported_not_raised(intersection_batch):
    scenes, _ = intersection_batch
    broken = crossing_scene(scene_id="zzz-broken")
    broken.geometry.pop("conflict_region")
    ds = extract_dataset(list(scenes[:5]) + [broken], T0Policy.initial(), 2,
                         0.5, DEFAULT)
    assert "zzz-broken" in ds.errors
    assert len(ds) + sum(ds.rejected.values()) == 5
