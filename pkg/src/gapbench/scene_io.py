"""File formats: scene CSVs with JSON sidecars, truth manifests, dataset
serialization, and split persistence.

Scene CSV contract: header ``agent_id,role,t,x,y`` with t in seconds and x/y
in meters; the sidecar ``<stem>.json`` carries scene_id, scenario_kind,
domain_info, and geometry.  Floats are written with nine decimals so repeated
writes of the same scene are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import hashlib
from pathlib import Path

import numpy as np

from .scenario import AgentTrack, Scene, SceneError
from .generator import SceneTruth

_FLOAT_FMT = "%.9f"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % float(x)


def write_scene(scene: Scene, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{scene.scene_id}.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["agent_id", "role", "t", "x", "y"])
    for track in scene.tracks:
        for t, (x, y) in zip(track.times, track.xy):
            writer.writerow([track.agent_id, track.role, _fmt(t), _fmt(x), _fmt(y)])
    csv_path.write_text(buf.getvalue())
    meta = {
        "scene_id": scene.scene_id,
        "scenario_kind": scene.scenario_kind,
        "domain_info": scene.domain_info,
        "geometry": scene.geometry,
    }
    (out_dir / f"{scene.scene_id}.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path


def load_scene(csv_path: str | Path) -> Scene:
    csv_path = Path(csv_path)
    meta_path = csv_path.with_suffix(".json")
    if not meta_path.exists():
        raise SceneError(f"{csv_path.name}: missing sidecar {meta_path.name}")
    meta = json.loads(meta_path.read_text())
    rows: dict[str, dict] = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["agent_id", "role", "t", "x", "y"]:
            raise SceneError(f"{csv_path.name}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise SceneError(f"{csv_path.name}: row {lineno}: expected 5 columns")
            agent_id, role = row[0], row[1]
            try:
                t, x, y = float(row[2]), float(row[3]), float(row[4])
            except ValueError as exc:
                raise SceneError(f"{csv_path.name}: row {lineno}: {exc}") from None
            entry = rows.setdefault(agent_id, {"role": role, "t": [], "xy": []})
            if entry["role"] != role:
                raise SceneError(
                    f"{csv_path.name}: row {lineno}: agent {agent_id!r} changes role")
            entry["t"].append(t)
            entry["xy"].append((x, y))
    tracks = []
    for agent_id, entry in rows.items():
        order = np.argsort(entry["t"], kind="stable")
        t = np.asarray(entry["t"], dtype=float)[order]
        if np.any(np.diff(t) <= 0):
            raise SceneError(
                f"{csv_path.name}: agent {agent_id!r} has duplicate timestamps")
        tracks.append(AgentTrack(agent_id, entry["role"], t,
                                 np.asarray(entry["xy"], dtype=float)[order]))
    scene = Scene(meta["scene_id"], tracks, meta["scenario_kind"],
                  meta.get("domain_info"), meta.get("geometry"))
    return _clip_common_interval(scene)


def _clip_common_interval(scene: Scene) -> Scene:
    t_lo, t_hi = scene.interval
    clipped = []
    for tr in scene.tracks:
        m = (tr.times >= t_lo - 1e-9) & (tr.times <= t_hi + 1e-9)
        if m.sum() < 2:
            raise SceneError(
                f"scene {scene.scene_id!r}: agent {tr.agent_id!r} has fewer than "
                f"two samples in the common interval")
        clipped.append(AgentTrack(tr.agent_id, tr.role, tr.times[m], tr.xy[m]))
    return Scene(scene.scene_id, clipped, scene.scenario_kind,
                 scene.domain_info, scene.geometry)


def load_scenes(path: str | Path) -> list[Scene]:
    """Load every scene CSV under a directory (or a single file path)."""
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob("*.csv"))
    if not files:
        raise SceneError(f"no scene files under {path}")
    return [load_scene(f) for f in files]


def write_manifest(truths: list[SceneTruth], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    payload = [
        {"scene_id": tr.scene_id, "a": tr.a, "t_a": tr.t_a, "t_c": tr.t_c,
         "t_s": tr.t_s, "gap": tr.gap, "p_accept": tr.p_accept}
        for tr in truths
    ]
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> list[SceneTruth]:
    payload = json.loads(Path(path).read_text())
    return [SceneTruth(**row) for row in payload]


# -- dataset serialization ----------------------------------------------------

def _pack(arr: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(arr, dtype=float).ravel())


def _unpack(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split()], dtype=float) if text else np.array([])


DATASET_COLUMNS = [
    "scene_id", "k", "a", "t_a", "t_0", "t_s", "t_c", "t_crit", "gap_at_t0",
    "d_target", "dtd", "dt", "roles", "t_i", "x_i", "t_o", "x_o",
]


def save_dataset(dataset, base_path: str | Path) -> tuple[Path, Path]:
    """Write one row per sample plus an index JSON with provenance and the
    per-reason exclusion/rejection counters."""
    from .extraction import Dataset  # local import to avoid a cycle

    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_COLUMNS)
    for s in dataset.samples:
        writer.writerow([
            s.scene_id, s.k, s.a, repr(s.t_a), repr(s.t_0), repr(s.t_s),
            repr(s.t_c), repr(s.t_crit), repr(s.gap_at_t0), repr(s.d_target),
            repr(s.dtd), repr(s.dt), ";".join(s.roles),
            _pack(s.t_i), _pack(s.x_i), _pack(s.t_o), _pack(s.x_o),
        ])
    csv_path.write_text(buf.getvalue())
    index_path = base.with_suffix(".json")
    index = {
        "provenance": dataset.provenance,
        "n_samples": len(dataset.samples),
        "excluded": dataset.excluded,
        "rejected": dataset.rejected,
        "errors": dataset.errors,
    }
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return csv_path, index_path


def load_dataset(base_path: str | Path):
    from .extraction import Dataset, Sample

    base = Path(base_path)
    index = json.loads(base.with_suffix(".json").read_text())
    samples = []
    with open(base.with_suffix(".csv"), newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            roles = tuple(row["roles"].split(";"))
            t_i = _unpack(row["t_i"])
            x_i = _unpack(row["x_i"]).reshape(len(roles), len(t_i), 2)
            t_o = _unpack(row["t_o"])
            x_o = _unpack(row["x_o"]).reshape(len(t_o), 2)
            samples.append(Sample(
                scene_id=row["scene_id"], k=row["k"], roles=roles,
                t_i=t_i, x_i=x_i, t_o=t_o, x_o=x_o,
                a=int(row["a"]), t_a=float(row["t_a"]), t_0=float(row["t_0"]),
                t_s=float(row["t_s"]), t_c=float(row["t_c"]),
                t_crit=float(row["t_crit"]), gap_at_t0=float(row["gap_at_t0"]),
                d_target=float(row["d_target"]), dtd=float(row["dtd"]),
                dt=float(row["dt"]),
            ))
    return Dataset(samples=samples, provenance=index["provenance"],
                   excluded=index.get("excluded", {}),
                   rejected=index.get("rejected", {}),
                   errors=index.get("errors", {}))


def save_split(split, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "method": split.method,
        "seed": split.seed,
        "train_idx": list(split.train_idx),
        "test_idx": list(split.test_idx),
        "zeta": list(split.zeta) if split.zeta is not None else None,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_split(path: str | Path):
    from .splitting import SplitResult

    payload = json.loads(Path(path).read_text())
    zeta = payload.get("zeta")
    return SplitResult(
        train_idx=tuple(payload["train_idx"]),
        test_idx=tuple(payload["test_idx"]),
        zeta=tuple(zeta) if zeta is not None else None,
        method=payload["method"],
        seed=payload["seed"],
    )


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
