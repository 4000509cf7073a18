import json

import numpy as np
import pytest

from gapbench.extraction import T0Policy, extract_dataset
from gapbench.scenario import SceneError, make_scenario
from gapbench.scene_io import (load_dataset, load_manifest, load_scene,
                               load_scenes, save_dataset, write_manifest,
                               write_scene)


def test_scene_write_read_roundtrip(tmp_path, intersection_batch):
    scenes, _ = intersection_batch
    for scene in scenes[:5]:
        path = write_scene(scene, tmp_path)
        back = load_scene(path)
        assert back.scene_id == scene.scene_id
        assert back.scenario_kind == scene.scenario_kind
        assert back.domain_info == scene.domain_info
        for a, b in zip(scene.tracks, back.tracks):
            assert a.agent_id == b.agent_id and a.role == b.role
            assert np.max(np.abs(a.times - b.times)) < 1e-9
            assert np.max(np.abs(a.xy - b.xy)) < 1e-9


def test_load_scenes_directory(tmp_path, intersection_batch):
    scenes, _ = intersection_batch
    for scene in scenes[:3]:
        write_scene(scene, tmp_path)
    loaded = load_scenes(tmp_path)
    assert [s.scene_id for s in loaded] == sorted(s.scene_id for s in scenes[:3])
    with pytest.raises(SceneError):
        load_scenes(tmp_path / "empty")


def test_bad_header_is_reported(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b,c\n1,2,3\n")
    (tmp_path / "bad.json").write_text(json.dumps(
        {"scene_id": "bad", "scenario_kind": "intersection"}))
    with pytest.raises(SceneError, match="header"):
        load_scene(tmp_path / "bad.csv")


def test_duplicate_timestamp_is_reported(tmp_path):
    rows = ["agent_id,role,t,x,y",
            "e,ego,0.0,0.0,0.0", "e,ego,0.0,1.0,0.0", "e,ego,0.2,2.0,0.0",
            "t,target,0.0,0.0,-5.0", "t,target,0.1,0.0,-4.0",
            "t,target,0.2,0.0,-3.0"]
    (tmp_path / "dup.csv").write_text("\n".join(rows) + "\n")
    (tmp_path / "dup.json").write_text(json.dumps(
        {"scene_id": "dup", "scenario_kind": "intersection",
         "geometry": {"conflict_region": [[-1, -1], [1, -1], [1, 1], [-1, 1]]}}))
    with pytest.raises(SceneError, match="duplicate"):
        load_scene(tmp_path / "dup.csv")


def test_missing_sidecar_is_reported(tmp_path):
    (tmp_path / "lonely.csv").write_text("agent_id,role,t,x,y\n")
    with pytest.raises(SceneError, match="sidecar"):
        load_scene(tmp_path / "lonely.csv")


def test_manifest_roundtrip(tmp_path, intersection_batch):
    _, truths = intersection_batch
    path = write_manifest(truths[:10], tmp_path)
    assert load_manifest(path) == truths[:10]


def test_dataset_roundtrip(tmp_path, intersection_batch):
    scenes, _ = intersection_batch
    ds = extract_dataset(scenes[:40], T0Policy.initial(), 2, 0.5,
                         make_scenario("intersection"))
    save_dataset(ds, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert back.provenance == ds.provenance
    assert len(back) == len(ds)
    for a, b in zip(ds.samples, back.samples):
        assert a.scene_id == b.scene_id and a.a == b.a and a.k == b.k
        assert a.roles == b.roles
        for field in ("t_a", "t_0", "t_s", "t_c", "t_crit", "gap_at_t0",
                      "d_target", "dtd", "dt"):
            assert getattr(a, field) == getattr(b, field)
        assert np.array_equal(a.t_i, b.t_i) and np.array_equal(a.t_o, b.t_o)
        assert np.array_equal(a.x_i, b.x_i) and np.array_equal(a.x_o, b.x_o)
