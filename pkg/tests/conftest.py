import pytest

from gapbench.extraction import T0Policy, extract_dataset
from gapbench.generator import GeneratorConfig, generate
from gapbench.scenario import make_scenario

# shared mid-size batch: balanced labels, blockers exercise the gap-opening
# condition, slope 3 keeps the decision learnable from the gap duration
INTERSECTION_CFG = GeneratorConfig(
    scenario_kind="intersection", n_scenes=1000, seed=42,
    blocker_prob=0.25, decision_slope=3.0,
)

LANE_CHANGE_CFG = GeneratorConfig(
    scenario_kind="lane_change", n_scenes=300, seed=7,
    ego_speed=(18.0, 28.0), target_speed=(8.0, 14.0),
    ego_distance=(120.0, 320.0), decision_threshold=15.0, decision_slope=0.4,
)


@pytest.fixture(scope="session")
def intersection_batch():
    return generate(INTERSECTION_CFG)


@pytest.fixture(scope="session")
def intersection_dataset(intersection_batch):
    scenes, _ = intersection_batch
    return extract_dataset(scenes, T0Policy.initial(), 2, 0.5,
                           make_scenario("intersection"))


@pytest.fixture(scope="session")
def intersection_scene_map(intersection_batch):
    return {s.scene_id: s for s in intersection_batch[0]}


@pytest.fixture(scope="session")
def lane_change_batch():
    return generate(LANE_CHANGE_CFG)
