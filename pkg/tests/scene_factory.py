"""Hand-built constant-velocity scenes with closed-form event times."""

import numpy as np

from gapbench.scenario import AgentTrack, Scene

CONFLICT = [[-2.5, -2.5], [2.5, -2.5], [2.5, 2.5], [-2.5, 2.5]]


def crossing_scene(scene_id="s0", ego_x0=-73.5, ego_v=10.0, tgt_y0=-28.5,
                   tgt_v=5.0, rate=10.0, duration=12.0, blocker=None):
    """Perpendicular crossing: ego along +x on y=0, target along +y on x=0.

    With the default inflation radius 1.0 the inflated region edge sits at
    -3.5, so ego_x0=-73.5 at 10 m/s enters at t=7.0 and tgt_y0=-28.5 at
    5 m/s enters at t=5.0.
    """
    times = np.arange(0.0, duration + 1e-9, 1.0 / rate)
    tracks = [
        AgentTrack("ego", "ego", times,
                   np.column_stack([ego_x0 + ego_v * times, np.zeros_like(times)])),
        AgentTrack("tgt", "target", times,
                   np.column_stack([np.zeros_like(times), tgt_y0 + tgt_v * times])),
    ]
    if blocker is not None:
        bx0, bv = blocker
        tracks.append(AgentTrack("blk", "other", times,
                                 np.column_stack([bx0 + bv * times, np.zeros_like(times)])))
    geometry = {
        "conflict_region": CONFLICT,
        "ego_path": {"origin": [0.0, 0.0], "direction": [1.0, 0.0], "lane_width": 3.5},
        "target_path": {"origin": [0.0, 0.0], "direction": [0.0, 1.0], "lane_width": 3.5},
    }
    return Scene(scene_id, tracks, "intersection", {"location": "unit"}, geometry)
