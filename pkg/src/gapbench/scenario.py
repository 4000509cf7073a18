"""Domain types and scenario handles for gap-acceptance scenes.

A scene records timed 2D positions of an ego vehicle (has right of way), a
target vehicle (decides whether to cross in front of the ego), and optional
other agents.  Everything scenario-specific (where the contested space is,
when each vehicle counts as inside it, how the ego predicts its own entry
time) lives behind a ScenarioDefinition so the downstream pipeline stays
scenario-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

# Shared defaults
T_MAX = 3600.0            # entry-time clamp when the ego approach has stalled, s
V_MIN = 0.1               # speed below which the approach counts as stalled, m/s
A_SAFE_DEFAULT = 4.0      # comfortable braking deceleration, m/s^2
INFLATION_DEFAULT = 1.0   # agent inflation radius for containment tests, m
REGION_HALFLENGTH = 5.0   # longitudinal half-extent of the mobile region, m
LANE_WIDTH_DEFAULT = 3.5

ROLES = ("ego", "target", "other")
SCENARIO_KINDS = ("intersection", "lane_change", "roundabout")


class SceneError(ValueError):
    """Raised for malformed scenes (bad roles, times, or geometry)."""


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise SceneError(f"non-finite position ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


class AgentTrack:
    """One agent's timed positions; timestamps must be strictly increasing."""

    def __init__(self, agent_id: str, role: str, times, xy):
        if role not in ROLES:
            raise SceneError(f"unknown role {role!r} for agent {agent_id!r}")
        times = np.asarray(times, dtype=float)
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if times.ndim != 1 or times.size != xy.shape[0]:
            raise SceneError(f"agent {agent_id!r}: times/positions shape mismatch")
        if times.size < 2:
            raise SceneError(f"agent {agent_id!r}: needs at least two samples")
        if not np.all(np.diff(times) > 0):
            raise SceneError(f"agent {agent_id!r}: timestamps not strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(xy))):
            raise SceneError(f"agent {agent_id!r}: non-finite samples")
        self.agent_id = agent_id
        self.role = role
        self.times = times
        self.xy = xy

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def positions_at(self, t, extrapolate: bool = False) -> np.ndarray:
        """Linearly interpolated positions, shape (len(t), 2).

        Outside the recorded window, constant-velocity extrapolation from the
        first (respectively last) pair of native samples is used when
        ``extrapolate`` is set; otherwise querying there is an error.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not extrapolate and (t.min() < self.t_min - 1e-9 or t.max() > self.t_max + 1e-9):
            raise SceneError(
                f"agent {self.agent_id!r}: position undefined at t outside "
                f"[{self.t_min}, {self.t_max}]"
            )
        out = np.column_stack([
            np.interp(t, self.times, self.xy[:, 0]),
            np.interp(t, self.times, self.xy[:, 1]),
        ])
        if extrapolate:
            before = t < self.t_min
            if np.any(before):
                v0 = (self.xy[1] - self.xy[0]) / (self.times[1] - self.times[0])
                out[before] = self.xy[0] + np.outer(t[before] - self.t_min, v0)
            after = t > self.t_max
            if np.any(after):
                v1 = (self.xy[-1] - self.xy[-2]) / (self.times[-1] - self.times[-2])
                out[after] = self.xy[-1] + np.outer(t[after] - self.t_max, v1)
        return out

    def position_at(self, t: float, extrapolate: bool = False) -> np.ndarray:
        return self.positions_at([t], extrapolate=extrapolate)[0]

    def velocities_at(self, t) -> np.ndarray:
        """Velocity vectors from the backward difference over the native step
        that ends at (or just before) each query time; causal except at the
        very first sample, which reuses the first step."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = np.searchsorted(self.times, t + 1e-12, side="right") - 1
        j = np.clip(j, 1, len(self.times) - 1)
        dt = (self.times[j] - self.times[j - 1])[:, None]
        return (self.xy[j] - self.xy[j - 1]) / dt

    def velocity_at(self, t: float) -> np.ndarray:
        return self.velocities_at([t])[0]


class Scene:
    """One recorded interaction: tracks plus declared scenario geometry."""

    def __init__(self, scene_id: str, tracks: Sequence[AgentTrack],
                 scenario_kind: str, domain_info: dict | None = None,
                 geometry: dict | None = None):
        if scenario_kind not in SCENARIO_KINDS:
            raise SceneError(f"unknown scenario kind {scenario_kind!r}")
        tracks = list(tracks)
        egos = [tr for tr in tracks if tr.role == "ego"]
        targets = [tr for tr in tracks if tr.role == "target"]
        if len(egos) != 1 or len(targets) != 1:
            raise SceneError(
                f"scene {scene_id!r}: needs exactly one ego and one target track "
                f"(got {len(egos)} ego, {len(targets)} target)"
            )
        ids = [tr.agent_id for tr in tracks]
        if len(set(ids)) != len(ids):
            raise SceneError(f"scene {scene_id!r}: duplicate agent ids")
        t_lo = max(tr.t_min for tr in tracks)
        t_hi = min(tr.t_max for tr in tracks)
        if t_hi <= t_lo:
            raise SceneError(f"scene {scene_id!r}: tracks share no common interval")
        self.scene_id = scene_id
        self.tracks = tracks
        self.scenario_kind = scenario_kind
        self.domain_info = dict(domain_info or {})
        self.geometry = dict(geometry or {})
        self.interval = (t_lo, t_hi)

    @property
    def ego(self) -> AgentTrack:
        return next(tr for tr in self.tracks if tr.role == "ego")

    @property
    def target(self) -> AgentTrack:
        return next(tr for tr in self.tracks if tr.role == "target")

    def others(self) -> list[AgentTrack]:
        return sorted((tr for tr in self.tracks if tr.role == "other"),
                      key=lambda tr: tr.agent_id)

    @cached_property
    def sample_times(self) -> np.ndarray:
        """Native grid: union of track timestamps inside the common interval."""
        t_lo, t_hi = self.interval
        all_t = np.unique(np.concatenate([tr.times for tr in self.tracks]))
        return all_t[(all_t >= t_lo - 1e-9) & (all_t <= t_hi + 1e-9)]

    @property
    def domain_key(self) -> str:
        return "|".join(f"{k}={v}" for k, v in sorted(self.domain_info.items()))


class ConvexRegion:
    """Convex polygon with half-plane containment and ray clipping.

    Inflation by a radius r is implemented by offsetting every half-plane
    outward by r (slightly generous near corners, which is irrelevant for the
    straight approach paths used here).
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float).reshape(-1, 2)
        if v.shape[0] < 3:
            raise SceneError("region needs at least three vertices")
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if abs(area2) < 1e-12:
            raise SceneError("region has no area")
        if area2 < 0:  # enforce counter-clockwise order
            v = v[::-1]
        edges = np.roll(v, -1, axis=0) - v
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        self.vertices = v
        self.normals = normals
        self.offsets = np.sum(normals * v, axis=1)

    def contains(self, points, radius: float = 0.0):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        inside = np.all(pts @ self.normals.T <= self.offsets + radius + 1e-12, axis=1)
        return bool(inside[0]) if single else inside

    def distance(self, point) -> float:
        """Euclidean distance from a point to the polygon (0 if inside)."""
        p = np.asarray(point, dtype=float)
        if self.contains(p):
            return 0.0
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        d = w - v
        tt = np.clip(np.sum((p - v) * d, axis=1) / np.sum(d * d, axis=1), 0.0, 1.0)
        proj = v + tt[:, None] * d
        return float(np.min(np.linalg.norm(proj - p, axis=1)))

    def ray_interval(self, origin, direction, radius: float = 0.0):
        """Parameter interval [s_lo, s_hi] along origin + s*direction that lies
        inside the region inflated by ``radius``; None if the line misses it."""
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        s_lo, s_hi = -math.inf, math.inf
        for n, off in zip(self.normals, self.offsets):
            denom = float(n @ d)
            num = off + radius - float(n @ o)
            if abs(denom) < 1e-12:
                if num < 0:
                    return None
                continue
            bound = num / denom
            if denom > 0:
                s_hi = min(s_hi, bound)
            else:
                s_lo = max(s_lo, bound)
        if s_lo > s_hi:
            return None
        return s_lo, s_hi


@dataclass(frozen=True)
class ContestedSpace:
    region: ConvexRegion
    mobile: bool = False


@dataclass(frozen=True)
class ScenarioParams:
    """Tunables shared by every scenario handle."""
    a_safe: float = A_SAFE_DEFAULT
    inflation_radius: float = INFLATION_DEFAULT
    v_min: float = V_MIN
    t_max: float = T_MAX
    region_halflength: float = REGION_HALFLENGTH


@dataclass
class ConditionGrid:
    """Scenario quantities evaluated on a shared time grid."""
    times: np.ndarray
    c_s: np.ndarray
    c_c: np.ndarray
    c_a: np.ndarray
    t_underline_c: np.ndarray
    t_brake: np.ndarray


def _frame(path_geom: dict):
    origin = np.asarray(path_geom.get("origin", (0.0, 0.0)), dtype=float)
    direction = np.asarray(path_geom.get("direction", (1.0, 0.0)), dtype=float)
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        raise SceneError("path direction must be nonzero")
    direction = direction / norm
    normal = np.array([-direction[1], direction[0]])
    return origin, direction, normal


def _refined_entry(times: np.ndarray, margins: np.ndarray) -> float:
    """First time a sampled margin-to-region signal reaches zero; the crossing
    is refined by linear interpolation between the bracketing samples so an
    entry inside the final interval stays strictly below the last timestamp."""
    inside = margins <= 1e-12
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        return math.inf
    j = int(idx[0])
    if j == 0:
        return float(times[0])
    g0, g1 = float(margins[j - 1]), float(margins[j])
    frac = g0 / (g0 - g1) if g0 != g1 else 1.0
    return float(times[j - 1] + frac * (times[j] - times[j - 1]))


def _entry_estimate(t, s_gap, v, params: ScenarioParams):
    """Predicted entry time honoring the open/closed sign convention:
    strictly later than t while the gap is still open, at or before t once
    the boundary has been crossed.  A stalled approach (v <= v_min with the
    boundary still ahead) clamps to t + t_max so the gap counts as open."""
    if s_gap > 0:
        if v > params.v_min:
            return t + s_gap / v
        return t + params.t_max
    return t + s_gap / max(v, params.v_min)


class ScenarioDefinition:
    """Handles supplying every scenario-dependent quantity.

    Subclasses implement the contested space and the three conditions:
    C_S true while the gap is still blocked by a preceding vehicle,
    C_C/C_A true while ego/target overlap the contested space.
    """

    kind: str = ""

    def __init__(self, params: ScenarioParams | None = None):
        self.params = params or ScenarioParams()

    # -- scenario-specific ---------------------------------------------------
    def contested_space(self, scene: Scene, t: float) -> ContestedSpace:
        raise NotImplementedError

    def target_entry_time(self, scene: Scene, times, xy) -> float:
        """First time a (possibly hypothetical) target trajectory overlaps the
        contested space; inf if it never does."""
        raise NotImplementedError

    def condition_grid(self, scene: Scene, times) -> ConditionGrid:
        raise NotImplementedError

    # -- generic handles ------------------------------------------------------
    def _ego_frame(self, scene: Scene):
        raise NotImplementedError

    def c_s(self, scene: Scene, t: float) -> bool:
        origin, direction, normal = self._ego_frame(scene)
        region = self.contested_space(scene, t).region
        interval = region.ray_interval(origin, direction, self.params.inflation_radius)
        if interval is None:
            return False
        u_e = float((scene.ego.position_at(t) - origin) @ direction)
        half_lane = self._ego_halfwidth(scene)
        for other in scene.others():
            xy = other.position_at(t, extrapolate=True)
            lat = abs(float((xy - origin) @ normal))
            u_o = float((xy - origin) @ direction)
            if lat <= half_lane and u_e < u_o <= interval[1]:
                return True
        return False

    def c_c(self, scene: Scene, t: float) -> bool:
        region = self.contested_space(scene, t).region
        return bool(region.contains(scene.ego.position_at(t), self.params.inflation_radius))

    def c_a(self, scene: Scene, t: float) -> bool:
        region = self.contested_space(scene, t).region
        return bool(region.contains(scene.target.position_at(t), self.params.inflation_radius))

    def t_underline_c(self, scene: Scene, t: float) -> float:
        origin, direction, _ = self._ego_frame(scene)
        ego = scene.ego
        u = float((ego.position_at(t) - origin) @ direction)
        v = float(ego.velocity_at(t) @ direction)
        region = self.contested_space(scene, t).region
        interval = region.ray_interval(origin, direction, self.params.inflation_radius)
        if interval is None:
            return t + self.params.t_max
        return _entry_estimate(t, interval[0] - u, v, self.params)

    def t_brake(self, scene: Scene, t: float) -> float:
        origin, direction, _ = self._ego_frame(scene)
        v = float(scene.ego.velocity_at(t) @ direction)
        return max(v, 0.0) / self.params.a_safe

    def target_distance(self, scene: Scene, t: float) -> float:
        region = self.contested_space(scene, t).region
        return region.distance(scene.target.position_at(t))

    def _ego_halfwidth(self, scene: Scene) -> float:
        return LANE_WIDTH_DEFAULT / 2.0


class FixedRegionScenario(ScenarioDefinition):
    """Conflict area declared as a fixed polygon (intersections, roundabouts)."""

    def __init__(self, kind: str, params: ScenarioParams | None = None):
        super().__init__(params)
        self.kind = kind

    def _region(self, scene: Scene) -> ConvexRegion:
        try:
            return ConvexRegion(scene.geometry["conflict_region"])
        except KeyError:
            raise SceneError(f"scene {scene.scene_id!r}: geometry lacks conflict_region")

    def _ego_frame(self, scene: Scene):
        return _frame(scene.geometry.get("ego_path", {}))

    def _ego_halfwidth(self, scene: Scene) -> float:
        return scene.geometry.get("ego_path", {}).get("lane_width", LANE_WIDTH_DEFAULT) / 2.0

    def contested_space(self, scene: Scene, t: float) -> ContestedSpace:
        return ContestedSpace(self._region(scene), mobile=False)

    def target_entry_time(self, scene: Scene, times, xy) -> float:
        region = self._region(scene)
        pts = np.atleast_2d(np.asarray(xy, dtype=float))
        margins = (pts @ region.normals.T - region.offsets
                   - self.params.inflation_radius).max(axis=1)
        return _refined_entry(np.asarray(times, dtype=float), margins)

    def condition_grid(self, scene: Scene, times) -> ConditionGrid:
        times = np.asarray(times, dtype=float)
        p = self.params
        region = self._region(scene)
        origin, direction, normal = self._ego_frame(scene)
        interval = region.ray_interval(origin, direction, p.inflation_radius)

        ego_xy = scene.ego.positions_at(times)
        tgt_xy = scene.target.positions_at(times)
        u_e = (ego_xy - origin) @ direction
        v_e = scene.ego.velocities_at(times) @ direction

        c_c = region.contains(ego_xy, p.inflation_radius)
        c_a = region.contains(tgt_xy, p.inflation_radius)

        c_s = np.zeros(times.shape, dtype=bool)
        if interval is not None:
            half_lane = self._ego_halfwidth(scene)
            for other in scene.others():
                xy = other.positions_at(times, extrapolate=True)
                lat = np.abs((xy - origin) @ normal)
                u_o = (xy - origin) @ direction
                c_s |= (lat <= half_lane) & (u_e < u_o) & (u_o <= interval[1])

        if interval is None:
            tuc = times + p.t_max
        else:
            s_gap = interval[0] - u_e
            safe_v = np.where(v_e > p.v_min, v_e, 1.0)
            tuc = np.where(
                s_gap > 0,
                np.where(v_e > p.v_min, times + s_gap / safe_v, times + p.t_max),
                times + s_gap / np.maximum(v_e, p.v_min),
            )
        t_brake = np.maximum(v_e, 0.0) / p.a_safe
        return ConditionGrid(times, c_s, c_c, c_a, tuc, t_brake)


class LaneChangeScenario(ScenarioDefinition):
    """Mobile contested space on the ego lane.

    The region spans the target's longitudinal position plus a margin and
    translates with the target until the target first overlaps the ego lane,
    then stays frozen at that position.  The freeze time is determined from
    track data up to the query time only.
    """

    kind = "lane_change"

    def _lane(self, scene: Scene) -> dict:
        try:
            return scene.geometry["ego_lane"]
        except KeyError:
            raise SceneError(f"scene {scene.scene_id!r}: geometry lacks ego_lane")

    def _ego_frame(self, scene: Scene):
        return _frame(self._lane(scene))

    def _ego_halfwidth(self, scene: Scene) -> float:
        return self._lane(scene).get("width", LANE_WIDTH_DEFAULT) / 2.0

    def _halflength(self, scene: Scene) -> float:
        return scene.geometry.get("region_halflength", self.params.region_halflength)

    def _target_frame_coords(self, scene: Scene, times):
        origin, direction, normal = self._ego_frame(scene)
        xy = scene.target.positions_at(np.atleast_1d(times))
        return (xy - origin) @ direction, (xy - origin) @ normal

    def _freeze_index(self, scene: Scene, lat: np.ndarray) -> int:
        """Index on the native grid where the target first overlaps the ego
        lane laterally; len(grid) if it never does."""
        halfw = self._ego_halfwidth(scene)
        hit = np.flatnonzero(np.abs(lat) <= halfw + self.params.inflation_radius + 1e-12)
        return int(hit[0]) if hit.size else len(lat)

    def _center_at(self, scene: Scene, t: float) -> float:
        grid = scene.sample_times
        upto = grid[grid <= t + 1e-9]
        u, lat = self._target_frame_coords(scene, upto)
        f = self._freeze_index(scene, lat)
        if f < len(upto):
            return float(u[f])
        u_t, _ = self._target_frame_coords(scene, [t])
        return float(u_t[0])

    def contested_space(self, scene: Scene, t: float) -> ContestedSpace:
        origin, direction, normal = self._ego_frame(scene)
        c = self._center_at(scene, t)
        halfw = self._ego_halfwidth(scene)
        half_len = self._halflength(scene)
        lo, hi = c - half_len, c + half_len
        corners = [
            origin + direction * lo - normal * halfw,
            origin + direction * hi - normal * halfw,
            origin + direction * hi + normal * halfw,
            origin + direction * lo + normal * halfw,
        ]
        return ContestedSpace(ConvexRegion(corners), mobile=True)

    def target_entry_time(self, scene: Scene, times, xy) -> float:
        # The region tracks the (hypothetical) target longitudinally until it
        # enters, so entry reduces to lateral overlap with the ego lane.
        origin, _, normal = self._ego_frame(scene)
        lat = (np.atleast_2d(np.asarray(xy, dtype=float)) - origin) @ normal
        halfw = self._ego_halfwidth(scene)
        margins = np.abs(lat) - (halfw + self.params.inflation_radius)
        return _refined_entry(np.asarray(times, dtype=float), margins)

    def condition_grid(self, scene: Scene, times) -> ConditionGrid:
        times = np.asarray(times, dtype=float)
        p = self.params
        origin, direction, normal = self._ego_frame(scene)
        halfw = self._ego_halfwidth(scene)
        half_len = self._halflength(scene)
        r = p.inflation_radius

        ego_xy = scene.ego.positions_at(times)
        u_e = (ego_xy - origin) @ direction
        lat_e = (ego_xy - origin) @ normal
        v_e = scene.ego.velocities_at(times) @ direction
        u_t, lat_t = self._target_frame_coords(scene, times)

        f = self._freeze_index(scene, lat_t)
        center = u_t.copy()
        if f < len(times):
            center[f:] = u_t[f]

        lat_ok_t = np.abs(lat_t) <= halfw + r + 1e-12
        c_a = lat_ok_t & (np.abs(u_t - center) <= half_len + r + 1e-12)
        c_c = (np.abs(lat_e) <= halfw + r + 1e-12) & (np.abs(u_e - center) <= half_len + r + 1e-12)

        c_s = np.zeros(times.shape, dtype=bool)
        u_exit = center + half_len + r
        for other in scene.others():
            xy = other.positions_at(times, extrapolate=True)
            lat_o = np.abs((xy - origin) @ normal)
            u_o = (xy - origin) @ direction
            c_s |= (lat_o <= halfw) & (u_e < u_o) & (u_o <= u_exit)

        s_gap = (center - half_len - r) - u_e
        safe_v = np.where(v_e > p.v_min, v_e, 1.0)
        tuc = np.where(
            s_gap > 0,
            np.where(v_e > p.v_min, times + s_gap / safe_v, times + p.t_max),
            times + s_gap / np.maximum(v_e, p.v_min),
        )
        t_brake = np.maximum(v_e, 0.0) / p.a_safe
        return ConditionGrid(times, c_s, c_c, c_a, tuc, t_brake)


def make_scenario(kind: str, params: ScenarioParams | None = None) -> ScenarioDefinition:
    if kind in ("intersection", "roundabout"):
        return FixedRegionScenario(kind, params)
    if kind == "lane_change":
        return LaneChangeScenario(params)
    raise SceneError(f"unknown scenario kind {kind!r}")


# Module-level handles with the scenario built from the scene's own metadata.

def estimate_t_underline_C(scene: Scene, t: float,
                           scenario: ScenarioDefinition | None = None) -> float:
    """Hindsight-free estimate of the ego's entry time into the contested
    space: t + s_gap / v_E under constant-velocity path extrapolation."""
    scenario = scenario or make_scenario(scene.scenario_kind)
    return scenario.t_underline_c(scene, t)


def estimate_t_brake(scene: Scene, t: float,
                     scenario: ScenarioDefinition | None = None) -> float:
    """Time a comfortable constant deceleration needs to stop the ego."""
    scenario = scenario or make_scenario(scene.scenario_kind)
    return scenario.t_brake(scene, t)


def condition_values(scene: Scene, t: float,
                     scenario: ScenarioDefinition | None = None) -> tuple[bool, bool, bool]:
    """(C_S, C_C, C_A) at time t: gap blocked, ego inside, target inside."""
    scenario = scenario or make_scenario(scene.scenario_kind)
    return scenario.c_s(scene, t), scenario.c_c(scene, t), scenario.c_a(scene, t)
