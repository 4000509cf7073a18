"""gapbench: benchmarking behavior prediction models in gap-acceptance scenes."""

__version__ = "0.1.0"

from .extraction import (CharacteristicTimes, Dataset, Excluded, RejectedT0,
                         Sample, T0Policy, build_sample, compute_t_crit,
                         extract_characteristic_times, extract_dataset,
                         select_t0)
from .generator import GeneratorConfig, SceneTruth, generate
from .metrics import (MetricResult, accuracy, ade_beta, auc, fde_beta,
                      miss_rate, random_baseline, tnr_pr)
from .models import (BinaryPrediction, Prediction, TimingPrediction,
                     TrajectoryPrediction, ensemble_mean, featurize,
                     logreg_predict, logreg_train, noisy_cv_predict,
                     retrieval_predict, retrieval_train)
from .scenario import (AgentTrack, ContestedSpace, ConvexRegion, Position,
                       Scene, SceneError, ScenarioDefinition, ScenarioParams,
                       condition_values, estimate_t_brake,
                       estimate_t_underline_C, make_scenario)
from .splitting import SplitResult, split_extreme, split_random_stratified
from .transforms import (TransformContext, auto_chain, f_a, q9, t1, t2, t3,
                         weighted_selection)
from .experiment import ExperimentConfig, emit_report, run_experiment
