"""Scenario-independent extraction of prediction samples from scenes.

Pipeline per scene: determine the characteristic times from the condition
sets on the native grid, locate the last safe-braking instant, pick the
prediction time according to the configured policy, and cut the input/output
windows.  Scenes without an observable decision are excluded; prediction
times outside the admissible window reject the scene.  Both outcomes are
counted per reason, not raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .scenario import ConditionGrid, Scene, SceneError, ScenarioDefinition, make_scenario
from .scene_io import config_hash

T_EPS_DEFAULT = 0.5  # headroom reserved for computing a prediction, s


@dataclass(frozen=True)
class CharacteristicTimes:
    """Gap timeline of one scene: opening, closing, acceptance, criticality.

    a == 1 iff the target entered first (t_a < t_c).  t_crit is nan until
    compute_t_crit has run.
    """
    t_s: float
    t_c: float
    t_a: float
    t_crit: float
    a: int


@dataclass(frozen=True)
class Excluded:
    scene_id: str
    reason: str


@dataclass(frozen=True)
class RejectedT0:
    scene_id: str
    reason: str


@dataclass(frozen=True)
class T0Policy:
    """How the prediction time is chosen: at the gap opening, at a fixed gap
    duration, or just before the last useful instant."""
    kind: str
    gap: float | None = None
    t_eps: float = T_EPS_DEFAULT

    def __post_init__(self):
        if self.kind not in ("initial", "fixed_gap", "critical"):
            raise ValueError(f"unknown t0 policy {self.kind!r}")
        if self.kind == "fixed_gap" and (self.gap is None or self.gap <= 0):
            raise ValueError("fixed_gap policy needs a positive gap duration")
        if self.t_eps <= 0:
            raise ValueError("t_eps must be positive")

    @classmethod
    def initial(cls) -> "T0Policy":
        return cls("initial")

    @classmethod
    def fixed_gap(cls, gap: float) -> "T0Policy":
        return cls("fixed_gap", gap=gap)

    @classmethod
    def critical(cls, t_eps: float = T_EPS_DEFAULT) -> "T0Policy":
        return cls("critical", t_eps=t_eps)

    @property
    def label(self) -> str:
        if self.kind == "fixed_gap":
            return f"fixed_gap_{self.gap:g}"
        return self.kind


@dataclass
class Sample:
    """One prediction task: input window for all agents, output window for the
    target, and the context scalars models and metrics need."""
    scene_id: str
    k: str
    roles: tuple[str, ...]
    t_i: np.ndarray          # (n_i,)
    x_i: np.ndarray          # (n_agents, n_i, 2), rows ordered per `roles`
    t_o: np.ndarray          # (n_o,)
    x_o: np.ndarray          # (n_o, 2) target positions
    a: int
    t_a: float
    t_0: float
    t_s: float
    t_c: float
    t_crit: float
    gap_at_t0: float
    d_target: float
    dtd: float
    dt: float

    def __post_init__(self):
        if not (self.t_s <= self.t_0 < min(self.t_a, self.t_crit)):
            raise SceneError(
                f"scene {self.scene_id!r}: t_0={self.t_0} outside "
                f"[{self.t_s}, min({self.t_a}, {self.t_crit}))")


@dataclass
class Dataset:
    samples: list[Sample]
    provenance: str
    excluded: dict[str, int]
    rejected: dict[str, int]
    errors: dict[str, str]

    def __len__(self) -> int:
        return len(self.samples)


def extract_characteristic_times(scene: Scene, scenario: ScenarioDefinition | None = None,
                                 t_eps: float = T_EPS_DEFAULT,
                                 grid: ConditionGrid | None = None):
    """Characteristic times from the condition sets on the native grid.

    Fallbacks when a condition never fires: the gap opens at the recording
    start, the closing time is the entry estimate at the last sample, and the
    acceptance time is pushed just past the recording end.  A scene where
    neither vehicle ever enters the contested space carries no observable
    decision and is excluded.
    """
    scenario = scenario or make_scenario(scene.scenario_kind)
    if grid is None:
        grid = scenario.condition_grid(scene, scene.sample_times)
    times = grid.times
    t_cs = times[grid.c_s]
    t_cc = times[grid.c_c]
    t_ca = times[grid.c_a]
    if t_cc.size == 0 and t_ca.size == 0:
        return Excluded(scene.scene_id, "no decision observed")
    t_s = float(times[0]) if t_cs.size == 0 else float(t_cs.max())
    t_c = float(grid.t_underline_c[-1]) if t_cc.size == 0 else float(t_cc.min())
    t_a = float(times[-1]) + t_eps if t_ca.size == 0 else float(t_ca.min())
    return CharacteristicTimes(t_s, t_c, t_a, math.nan, int(t_a < t_c))


def _safety_margin(scenario: ScenarioDefinition, scene: Scene, t: float) -> float:
    return scenario.t_underline_c(scene, t) - t - scenario.t_brake(scene, t)


def compute_t_crit(scene: Scene, times: CharacteristicTimes,
                   scenario: ScenarioDefinition | None = None,
                   t_eps: float = T_EPS_DEFAULT,
                   grid: ConditionGrid | None = None) -> float:
    """Last instant the ego could still brake comfortably before entry.

    The safety margin t_underline_c(t) - t - t_brake(t) is evaluated at the
    gap opening and on the native grid below the acceptance time; its first
    zero crossing is refined by linear interpolation between grid points.
    """
    scenario = scenario or make_scenario(scene.scenario_kind)
    if grid is None:
        grid = scenario.condition_grid(scene, scene.sample_times)
    margin_s = _safety_margin(scenario, scene, times.t_s)
    if margin_s <= 0:
        return times.t_s
    mask = (grid.times > times.t_s) & (grid.times < times.t_a)
    ts = np.concatenate([[times.t_s], grid.times[mask]])
    vals = np.concatenate([[margin_s],
                           grid.t_underline_c[mask] - grid.times[mask] - grid.t_brake[mask]])
    below = np.flatnonzero(vals <= 0)
    if below.size == 0:
        return times.t_a + t_eps
    i = int(below[0])
    t_prev, v_prev = ts[i - 1], vals[i - 1]
    t_i, v_i = ts[i], vals[i]
    if v_prev == v_i:
        return float(t_i)
    return float(t_prev + v_prev * (t_i - t_prev) / (v_prev - v_i))


def select_t0(policy: T0Policy, scene: Scene, times: CharacteristicTimes,
              scenario: ScenarioDefinition | None = None,
              grid: ConditionGrid | None = None):
    """Prediction time per policy, or RejectedT0 when it falls outside
    [t_s, min(t_a, t_crit)).  The gap duration is evaluated without hindsight
    (entry estimates only use data up to each candidate time)."""
    scenario = scenario or make_scenario(scene.scenario_kind)
    if policy.kind == "initial":
        t_0 = times.t_s
    elif policy.kind == "critical":
        t_0 = times.t_crit - policy.t_eps
    else:
        if grid is None:
            grid = scenario.condition_grid(scene, scene.sample_times)
        g = grid.t_underline_c - grid.times - policy.gap
        t_0 = None
        for i in range(len(g) - 1):
            if g[i] == 0.0:
                t_0 = float(grid.times[i])
                break
            if g[i] * g[i + 1] < 0:
                frac = g[i] / (g[i] - g[i + 1])
                t_0 = float(grid.times[i] + frac * (grid.times[i + 1] - grid.times[i]))
                break
        else:
            if g[-1] == 0.0:
                t_0 = float(grid.times[-1])
        if t_0 is None:
            return RejectedT0(scene.scene_id, "gap never matches the requested duration")
    limit = min(times.t_a, times.t_crit)
    # strict upper bound with a dust guard: t_crit = t_a + t_eps fallbacks put
    # t_0 at t_a up to rounding, which must not slip through
    if not (times.t_s <= t_0 < limit - 1e-9):
        return RejectedT0(scene.scene_id,
                          "prediction time outside the admissible window")
    return float(t_0)


def build_sample(scene: Scene, t_0: float, n_i: int, dt: float,
                 times: CharacteristicTimes,
                 scenario: ScenarioDefinition | None = None) -> Sample:
    """Cut the input/output windows around t_0.

    The output horizon covers ceil((t_c - t_0)/dt) steps so the outcome of the
    gap is always visible.  Positions are linearly interpolated from the
    native samples; timestamps outside the recording are extrapolated at
    constant velocity from the nearest native pair.
    """
    scenario = scenario or make_scenario(scene.scenario_kind)
    t_lo, t_hi = scene.interval
    if not (t_lo - 1e-9 <= t_0 <= t_hi + 1e-9):
        raise SceneError(f"scene {scene.scene_id!r}: t_0={t_0} outside the recording")
    if n_i < 1:
        raise SceneError("n_i must be at least 1")
    n_o = int(math.ceil((times.t_c - t_0) / dt - 1e-9))
    if n_o < 1:
        raise SceneError(
            f"scene {scene.scene_id!r}: empty output horizon (t_c={times.t_c}, t_0={t_0})")
    t_i = t_0 + dt * np.arange(-n_i + 1, 1)
    t_o = t_0 + dt * np.arange(1, n_o + 1)

    ordered = [scene.ego, scene.target] + scene.others()
    roles = tuple(tr.role for tr in ordered)
    x_i = np.stack([tr.positions_at(t_i, extrapolate=True) for tr in ordered])
    x_o = scene.target.positions_at(t_o, extrapolate=True)

    gap = scenario.t_underline_c(scene, t_0) - t_0
    return Sample(
        scene_id=scene.scene_id, k=scene.domain_key, roles=roles,
        t_i=t_i, x_i=x_i, t_o=t_o, x_o=x_o,
        a=times.a, t_a=times.t_a, t_0=float(t_0),
        t_s=times.t_s, t_c=times.t_c, t_crit=times.t_crit,
        gap_at_t0=float(gap),
        d_target=float(scenario.target_distance(scene, t_0)),
        dtd=float(gap - scenario.t_brake(scene, t_0)),
        dt=float(dt),
    )


def extract_dataset(scenes: list[Scene], policy: T0Policy, n_i: int, dt: float,
                    scenario: ScenarioDefinition | None = None,
                    t_eps: float = T_EPS_DEFAULT) -> Dataset:
    """Run the full per-scene pipeline over a batch.

    Output order follows scene_id; excluded and rejected scenes are counted by
    reason and per-scene failures are recorded without aborting the batch.
    """
    samples: list[Sample] = []
    excluded: dict[str, int] = {}
    rejected: dict[str, int] = {}
    errors: dict[str, str] = {}
    for scene in sorted(scenes, key=lambda s: s.scene_id):
        scn = scenario or make_scenario(scene.scenario_kind)
        try:
            grid = scn.condition_grid(scene, scene.sample_times)
            times = extract_characteristic_times(scene, scn, t_eps=t_eps, grid=grid)
            if isinstance(times, Excluded):
                excluded[times.reason] = excluded.get(times.reason, 0) + 1
                continue
            t_crit = compute_t_crit(scene, times, scn, t_eps=t_eps, grid=grid)
            times = replace(times, t_crit=t_crit)
            t_0 = select_t0(policy, scene, times, scn, grid=grid)
            if isinstance(t_0, RejectedT0):
                rejected[t_0.reason] = rejected.get(t_0.reason, 0) + 1
                continue
            samples.append(build_sample(scene, t_0, n_i, dt, times, scn))
        except Exception as exc:  # a bad scene must not sink the batch
            errors[scene.scene_id] = f"{type(exc).__name__}: {exc}"
    provenance = config_hash({
        "policy": policy.label, "t_eps_policy": policy.t_eps, "n_i": n_i, "dt": dt,
        "t_eps": t_eps, "scene_ids": [s.scene_id for s in sorted(scenes, key=lambda s: s.scene_id)],
    })
    return Dataset(samples=samples, provenance=provenance,
                   excluded=excluded, rejected=rejected, errors=errors)
