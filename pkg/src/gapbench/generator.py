"""Deterministic kinematic generator for labeled gap-acceptance scenes.

Two layouts are produced: a perpendicular intersection crossing and a highway
lane change.  Each agent follows a piecewise-constant-acceleration profile,
so sampled positions are exact integrals of the profile and every event time
(entries into the contested space, gap opening) has a closed-form root that
is recorded as ground truth alongside the scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .scenario import AgentTrack, Scene

CONFLICT_HALF = 2.5      # intersection conflict square is 5 m x 5 m
LANE_WIDTH = 3.5
REGION_HALFLEN = 5.0     # lane-change region half extent
STOP_MARGIN = 2.0        # rejected targets stop this far before the region, m
EXIT_BUFFER = 0.5        # clearance past the far edge when planning a crossing, m


class GenerationError(ValueError):
    """Raised when a configuration cannot produce physically valid scenes."""


@dataclass(frozen=True)
class GeneratorConfig:
    scenario_kind: str = "intersection"
    n_scenes: int = 100
    seed: int = 0
    sample_rate_hz: float = 10.0
    ego_speed: tuple[float, float] = (8.0, 14.0)
    ego_distance: tuple[float, float] = (20.0, 70.0)
    target_distance: tuple[float, float] = (8.0, 20.0)
    target_speed: tuple[float, float] = (0.0, 6.0)
    idle_start: bool = False
    decision_slope: float = 2.0        # logistic slope on the gap duration, 1/s
    decision_threshold: float = 4.0    # gap duration with 50% acceptance, s
    decision_noise: float = 0.0        # sd of extra noise on the decision logit
    crossing_margin: float = 1.5      # planned clearance before the ego arrives, s
    accel_limit: float = 3.0
    blocker_prob: float = 0.0          # chance of a preceding vehicle on the ego path
    inflation_radius: float = 1.0      # must match the containment inflation downstream
    max_duration: float = 90.0

    def __post_init__(self):
        if self.scenario_kind not in ("intersection", "lane_change"):
            raise GenerationError(f"unsupported scenario kind {self.scenario_kind!r}")
        if self.n_scenes < 0 or self.sample_rate_hz <= 0:
            raise GenerationError("n_scenes must be >= 0 and sample_rate_hz > 0")
        for name in ("ego_speed", "ego_distance", "target_distance", "target_speed"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise GenerationError(f"empty range for {name}")
        if self.idle_start and self.scenario_kind != "intersection":
            raise GenerationError("idle_start is only meaningful for intersection scenes")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SceneTruth:
    """Realized event times straight from the kinematic profiles."""
    scene_id: str
    a: int
    t_a: float
    t_c: float
    t_s: float
    gap: float        # gap duration the decision rule saw
    p_accept: float   # acceptance probability the rule assigned


@dataclass(frozen=True)
class Segment:
    """p(t) = p0 + v0 (t - t0) + a/2 (t - t0)^2 on [t0, t1]."""
    t0: float
    t1: float
    p0: float
    v0: float
    a: float

    def pos(self, t):
        dt = np.asarray(t, dtype=float) - self.t0
        return self.p0 + self.v0 * dt + 0.5 * self.a * dt * dt

    def vel(self, t):
        return self.v0 + self.a * (np.asarray(t, dtype=float) - self.t0)


class Profile1D:
    """Contiguous piecewise-constant-acceleration motion along one axis."""

    def __init__(self, segments: list[Segment]):
        if not segments:
            raise GenerationError("profile needs at least one segment")
        self.segments = segments

    @classmethod
    def from_phases(cls, t_start: float, p_start: float, v_start: float,
                    phases: list[tuple[float, float]]) -> "Profile1D":
        """Build from (duration, acceleration) phases; the last phase is
        extended to infinity implicitly by querying past its end."""
        segs = []
        t, p, v = t_start, p_start, v_start
        for dur, a in phases:
            if dur < 0:
                raise GenerationError("negative phase duration")
            segs.append(Segment(t, t + dur, p, v, a))
            p = segs[-1].pos(t + dur)
            v = segs[-1].vel(t + dur)
            t += dur
        segs.append(Segment(t, math.inf, p, v, 0.0))  # coast forever
        return cls(segs)

    def pos(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        for seg in self.segments:
            m = (t >= seg.t0 - 1e-12) & (t <= seg.t1 + 1e-12) if math.isfinite(seg.t1) \
                else (t >= seg.t0 - 1e-12)
            out[m] = seg.pos(t[m])
        first = self.segments[0]
        m = t < first.t0 - 1e-12
        out[m] = first.pos(t[m])  # extrapolate before start (not normally queried)
        return out

    def vel_end(self) -> float:
        return float(self.segments[-1].v0)

    def first_time_at(self, value: float, t_from: float = -math.inf) -> float:
        """Earliest t >= t_from with pos(t) == value; inf if never reached."""
        for seg in self.segments:
            hi = seg.t1 if math.isfinite(seg.t1) else 1e12
            lo = max(seg.t0, t_from)
            if lo > hi:
                continue
            roots = _quad_roots(0.5 * seg.a, seg.v0, seg.p0 - value)
            for r in roots:
                t = seg.t0 + r
                if lo - 1e-9 <= t <= hi + 1e-9:
                    return max(t, t_from)
        return math.inf


def _quad_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a x^2 + b x + c = 0, ascending (x measured from segment start)."""
    if abs(a) < 1e-14:
        if abs(b) < 1e-14:
            return []
        return [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    r1, r2 = (-b - sq) / (2 * a), (-b + sq) / (2 * a)
    return sorted((r1, r2))


def first_meeting(lead: Profile1D, follow: Profile1D, offset: float,
                  t_from: float = 0.0, t_until: float = math.inf) -> float:
    """Earliest t in [t_from, t_until] with follow.pos(t) == lead.pos(t) + offset."""
    bounds = sorted({t_from, t_until} | {
        s.t0 for p in (lead, follow) for s in p.segments if t_from < s.t0 < t_until
    })
    for lo, hi in zip(bounds, bounds[1:]):
        sl = _segment_at(lead, lo)
        sf = _segment_at(follow, lo)
        # relative polynomial in tau = t - lo
        dl, df = lo - sl.t0, lo - sf.t0
        a = 0.5 * (sf.a - sl.a)
        b = (sf.v0 + sf.a * df) - (sl.v0 + sl.a * dl)
        c = sf.pos(lo) - sl.pos(lo) - offset
        for r in _quad_roots(a, b, c):
            t = lo + r
            if lo - 1e-9 <= t <= hi + 1e-9:
                return min(max(t, lo), hi)
    return math.inf


def _segment_at(profile: Profile1D, t: float) -> Segment:
    """Segment active going forward from t (boundaries resolve to the later one)."""
    for seg in profile.segments:
        if t < seg.t1 - 1e-12:
            return seg
    return profile.segments[-1]


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return float(lo) if hi <= lo else float(rng.uniform(lo, hi))


def _accept_probability(gap: float, cfg: GeneratorConfig, rng) -> float:
    logit = cfg.decision_slope * (gap - cfg.decision_threshold)
    if cfg.decision_noise > 0:
        logit += float(rng.normal(0.0, cfg.decision_noise))
    return 1.0 / (1.0 + math.exp(-np.clip(logit, -500.0, 500.0)))


def _intersection_scene(index: int, cfg: GeneratorConfig, rng) -> tuple[Scene, SceneTruth]:
    r = cfg.inflation_radius
    v_e = _uniform(rng, cfg.ego_speed)
    d_e = _uniform(rng, cfg.ego_distance)      # ego distance to the near region edge
    d_t = _uniform(rng, cfg.target_distance)   # target distance to the near region edge
    v_t0 = 0.0 if cfg.idle_start else _uniform(rng, cfg.target_speed)
    if v_e <= 0:
        raise GenerationError("ego speed range must be positive for generation")

    gap = d_e / v_e
    p_accept = _accept_probability(gap, cfg, rng)
    intent_accept = bool(rng.random() < p_accept)
    has_blocker = bool(rng.random() < cfg.blocker_prob)
    blocker_frac = float(rng.uniform(0.3, 0.8))
    blocker_speedup = float(rng.uniform(1.15, 1.35))

    # Ego: constant speed along +x, starting left of the conflict square.
    ego_x = Profile1D.from_phases(0.0, -(CONFLICT_HALF + d_e), v_e, [])
    t_c_true = ego_x.first_time_at(-(CONFLICT_HALF + r))

    # Target: along +y, starting below the square.
    y0 = -(CONFLICT_HALF + d_t)
    y_exit = CONFLICT_HALF + EXIT_BUFFER
    crosses_first = intent_accept
    target_y = None
    if intent_accept:
        # Plan to clear the far edge `crossing_margin` seconds before the ego
        # arrives.  Acceleration is capped; a driver who cannot clear at least
        # half the margin aborts and yields instead of provoking a near-tie.
        # Idling targets sit still for a beat first (motion onset is the tell).
        onset = float(rng.uniform(0.3, 1.0)) if cfg.idle_start else 0.0
        t_plan = max(t_c_true - cfg.crossing_margin - onset, 0.5)
        dist = y_exit - y0
        a_need = 2.0 * (dist - v_t0 * t_plan) / (t_plan * t_plan)
        a_cross = float(np.clip(a_need, 0.0, cfg.accel_limit))
        if a_cross <= 0 and v_t0 <= 0:
            a_cross = min(1.0, cfg.accel_limit)
        probe = Profile1D.from_phases(0.0, y0, v_t0,
                                      [(onset, 0.0), (1e6, a_cross)])
        t_exit = probe.first_time_at(y_exit)
        if not math.isfinite(t_exit):
            raise GenerationError(f"scene {index}: target cannot physically cross")
        if t_exit > t_c_true - 0.5 * cfg.crossing_margin:
            crosses_first = False
        else:
            target_y = Profile1D.from_phases(
                0.0, y0, v_t0, [(onset, 0.0), (t_exit - onset, a_cross)])
    if not crosses_first:
        dist_to_stop = d_t - STOP_MARGIN
        if dist_to_stop <= 0:
            raise GenerationError(
                f"scene {index}: target_distance too small for a stop before the region")
        phases = []
        t_cursor = 0.0
        if v_t0 > 0:
            a_exact = v_t0 * v_t0 / (2.0 * dist_to_stop)
            if a_exact > cfg.accel_limit:
                raise GenerationError(
                    f"scene {index}: rejecting target cannot brake within "
                    f"{cfg.accel_limit} m/s^2")
            a_stop = max(a_exact, 0.8)  # brake at least mildly, stopping short is fine
            t_stop = v_t0 / a_stop
            phases.append((t_stop, -a_stop))
            t_cursor = t_stop
        t_go = (d_e + 2 * CONFLICT_HALF + 2.0) / v_e + 0.3  # ego fully past, plus buffer
        phases.append((max(t_go - t_cursor, 0.0), 0.0))
        a_go = min(2.0, cfg.accel_limit)
        probe = Profile1D.from_phases(0.0, y0, v_t0, phases + [(1e6, a_go)])
        t_exit = probe.first_time_at(y_exit)
        target_y = Profile1D.from_phases(0.0, y0, v_t0, phases + [(t_exit - t_go, a_go)])

    t_a_true = target_y.first_time_at(-(CONFLICT_HALF + r))
    if not math.isfinite(t_a_true):
        raise GenerationError(f"scene {index}: target never reaches the region")

    t_s_true = 0.0
    blocker = None
    if has_blocker:
        d_b = blocker_frac * d_e
        v_b = blocker_speedup * v_e
        blocker = Profile1D.from_phases(0.0, -(CONFLICT_HALF + d_b), v_b, [])
        t_s_true = blocker.first_time_at(CONFLICT_HALF + r)

    t_end = max(t_c_true, t_a_true, t_s_true) + 1.0
    if t_end > cfg.max_duration:
        raise GenerationError(f"scene {index}: events unresolved within max_duration")

    dt = 1.0 / cfg.sample_rate_hz
    times = np.arange(0.0, t_end + dt / 2, dt)
    tracks = [
        AgentTrack("ego", "ego", times,
                   np.column_stack([ego_x.pos(times), np.zeros_like(times)])),
        AgentTrack("target", "target", times,
                   np.column_stack([np.zeros_like(times), target_y.pos(times)])),
    ]
    if blocker is not None:
        tracks.append(AgentTrack("lead", "other", times,
                                 np.column_stack([blocker.pos(times), np.zeros_like(times)])))

    scene_id = f"i{index:05d}"
    geometry = {
        "conflict_region": [[-CONFLICT_HALF, -CONFLICT_HALF], [CONFLICT_HALF, -CONFLICT_HALF],
                            [CONFLICT_HALF, CONFLICT_HALF], [-CONFLICT_HALF, CONFLICT_HALF]],
        "ego_path": {"origin": [0.0, 0.0], "direction": [1.0, 0.0], "lane_width": LANE_WIDTH},
        "target_path": {"origin": [0.0, 0.0], "direction": [0.0, 1.0], "lane_width": LANE_WIDTH},
    }
    scene = Scene(scene_id, tracks, "intersection",
                  domain_info={"location": "sim-intersection", "cohort": f"c{index % 4}"},
                  geometry=geometry)
    truth = SceneTruth(scene_id, int(t_a_true < t_c_true), t_a_true, t_c_true,
                       t_s_true, gap, p_accept)
    return scene, truth


def _lane_change_scene(index: int, cfg: GeneratorConfig, rng) -> tuple[Scene, SceneTruth]:
    r = cfg.inflation_radius
    halfw = LANE_WIDTH / 2.0
    v_e = _uniform(rng, cfg.ego_speed)
    v_t = _uniform(rng, cfg.target_speed)
    if v_e <= v_t:
        v_e = v_t + max(4.0, 0.25 * v_t)  # the ego lane must be the faster one
    d0 = _uniform(rng, cfg.ego_distance)  # ego longitudinal deficit behind the target

    gap = (d0 - REGION_HALFLEN) / (v_e - v_t)
    p_accept = _accept_probability(gap, cfg, rng)
    intent_accept = bool(rng.random() < p_accept)

    ego_x = Profile1D.from_phases(0.0, -d0, v_e, [])
    lat_start = -LANE_WIDTH  # target lane center sits one lane width below
    a_lat = float(rng.uniform(1.2, 2.0))
    t_half = math.sqrt(LANE_WIDTH / a_lat)  # half of the S-curve duration

    def merge_profiles(t_merge: float, a_lon: float, t_lon: float):
        lon = Profile1D.from_phases(0.0, 0.0, v_t,
                                    [(t_merge, 0.0), (t_lon, a_lon)])
        lat = Profile1D.from_phases(0.0, lat_start, 0.0,
                                    [(t_merge, 0.0), (t_half, a_lat), (t_half, -a_lat)])
        return lon, lat

    t_merge_front = float(rng.uniform(0.3, 1.0))
    # lateral travel until the lane overlap threshold, measured from merge start
    lane_entry_delay = t_merge_front + math.sqrt(
        2.0 * (LANE_WIDTH - (halfw + r)) / a_lat)
    # abort a front merge that would reach the lane with less than 0.4 s of
    # headway before the ego closes the (receding) gap
    crosses_first = intent_accept and gap > lane_entry_delay + 0.4
    if crosses_first:
        a_lon = float(rng.uniform(1.0, min(2.5, cfg.accel_limit)))
        tgt_x, tgt_y = merge_profiles(t_merge_front, a_lon, 2 * t_half)
    else:
        # Merge behind: wait until the ego front is well past, then move over.
        t_pass = first_meeting(Profile1D.from_phases(0.0, 0.0, v_t, []), ego_x,
                               REGION_HALFLEN + 3.0)
        if not math.isfinite(t_pass):
            raise GenerationError(f"scene {index}: ego never overtakes the target")
        t_merge = t_pass + float(rng.uniform(0.3, 0.8))
        tgt_x, tgt_y = merge_profiles(t_merge, 0.0, 0.0)

    t_a_true = tgt_y.first_time_at(-(halfw + r))
    if not math.isfinite(t_a_true):
        raise GenerationError(f"scene {index}: target never enters the ego lane")

    # Region center: follows the target longitudinally until lane entry is
    # first observed on the sampling grid, then stays frozen there (mirrors
    # how conditions are evaluated on recorded data).
    dt = 1.0 / cfg.sample_rate_hz
    t_freeze = dt * math.ceil(t_a_true / dt - 1e-9)
    center = Profile1D(
        [Segment(s.t0, min(s.t1, t_freeze), s.p0, s.v0, s.a)
         for s in tgt_x.segments if s.t0 < t_freeze]
        + [Segment(t_freeze, math.inf, float(tgt_x.pos(t_freeze)), 0.0, 0.0)]
    )
    t_c_true = first_meeting(center, ego_x, -(REGION_HALFLEN + r))
    if not math.isfinite(t_c_true):
        raise GenerationError(f"scene {index}: ego never reaches the contested space")

    t_end = max(t_c_true, t_a_true) + 1.0
    if t_end > cfg.max_duration:
        raise GenerationError(f"scene {index}: events unresolved within max_duration")

    times = np.arange(0.0, t_end + dt / 2, dt)
    tracks = [
        AgentTrack("ego", "ego", times,
                   np.column_stack([ego_x.pos(times), np.zeros_like(times)])),
        AgentTrack("target", "target", times,
                   np.column_stack([tgt_x.pos(times), tgt_y.pos(times)])),
    ]
    scene_id = f"l{index:05d}"
    geometry = {
        "ego_lane": {"origin": [0.0, 0.0], "direction": [1.0, 0.0], "width": LANE_WIDTH},
        "target_lane": {"origin": [0.0, -LANE_WIDTH], "direction": [1.0, 0.0],
                        "width": LANE_WIDTH},
        "region_halflength": REGION_HALFLEN,
    }
    scene = Scene(scene_id, tracks, "lane_change",
                  domain_info={"location": "sim-lane-change", "cohort": f"c{index % 4}"},
                  geometry=geometry)
    truth = SceneTruth(scene_id, int(t_a_true < t_c_true), t_a_true, t_c_true,
                       0.0, gap, p_accept)
    return scene, truth


def generate(config: GeneratorConfig) -> tuple[list[Scene], list[SceneTruth]]:
    """Generate labeled scenes; per-scene seeds derive from (seed, index) so
    output is independent of evaluation order."""
    build = _intersection_scene if config.scenario_kind == "intersection" else _lane_change_scene
    scenes, truths = [], []
    for i in range(config.n_scenes):
        rng = np.random.default_rng([config.seed, i])
        scene, truth = build(i, config, rng)
        scenes.append(scene)
        truths.append(truth)
    return scenes, truths
