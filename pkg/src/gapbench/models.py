"""Prediction forms, built-in baseline models, and the model-plugin contract.

Predictions come in three forms: an acceptance probability, that probability
plus nine decile values of the acceptance-time distribution, or a set of n_p
equally likely target trajectories over the output window.  Models plug into
the harness through a tiny contract (fit on training samples, predict one
sample); the registry maps config names to factories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .extraction import Sample
from .scene_io import config_hash

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BinaryPrediction:
    a_pred: float

    def __post_init__(self):
        if not (0.0 <= self.a_pred <= 1.0):
            raise ValueError(f"a_pred={self.a_pred} outside [0, 1]")


@dataclass(frozen=True)
class TimingPrediction:
    """Acceptance probability plus deciles of the acceptance time; the deciles
    are absent when no acceptance mass exists (degenerates to binary)."""
    a_pred: float
    t_a_deciles: np.ndarray | None

    def __post_init__(self):
        if not (0.0 <= self.a_pred <= 1.0):
            raise ValueError(f"a_pred={self.a_pred} outside [0, 1]")
        if self.t_a_deciles is not None:
            q = np.asarray(self.t_a_deciles, dtype=float)
            if q.shape != (9,):
                raise ValueError("timing prediction needs exactly 9 deciles")
            if np.any(np.diff(q) < -1e-9):
                raise ValueError("deciles must be non-decreasing")
            object.__setattr__(self, "t_a_deciles", q)


@dataclass(frozen=True)
class TrajectoryPrediction:
    trajs: np.ndarray  # (n_p, n_o, 2)

    def __post_init__(self):
        t = np.asarray(self.trajs, dtype=float)
        if t.ndim != 3 or t.shape[2] != 2 or t.shape[0] < 1:
            raise ValueError(f"trajectory set has bad shape {t.shape}")
        object.__setattr__(self, "trajs", t)


Prediction = BinaryPrediction | TimingPrediction | TrajectoryPrediction


def prediction_form(pred: Prediction) -> str:
    if isinstance(pred, BinaryPrediction):
        return "binary"
    if isinstance(pred, TimingPrediction):
        return "timing"
    if isinstance(pred, TrajectoryPrediction):
        return "trajectory"
    raise TypeError(f"not a prediction: {pred!r}")


# -- features ------------------------------------------------------------------

FEATURE_SCALARS = ("gap_at_t0", "d_target", "v_target", "v_ego", "dtd")


def featurize(sample: Sample) -> np.ndarray:
    """Deterministic feature vector: gap duration at t_0, target distance to
    the contested space, target/ego speeds from the last input step, the
    safety margin at t_0, and the recent target positions relative to its
    t_0 pose (2 * n_i values)."""
    tgt = sample.x_i[sample.roles.index("target")]
    ego = sample.x_i[sample.roles.index("ego")]
    if len(sample.t_i) >= 2:
        v_t = float(np.linalg.norm(tgt[-1] - tgt[-2]) / sample.dt)
        v_e = float(np.linalg.norm(ego[-1] - ego[-2]) / sample.dt)
    else:
        v_t = v_e = 0.0
    rel = (tgt - tgt[-1]).ravel()
    return np.concatenate([
        [sample.gap_at_t0, sample.d_target, v_t, v_e, sample.dtd], rel])


# -- logistic regression ---------------------------------------------------------

@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray
    hyper: dict


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def logreg_loss_and_grad(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray,
                         l2: float) -> tuple[float, np.ndarray, float]:
    """Mean L2-regularized logistic loss and its gradient (bias unpenalized)."""
    z = x @ w + b
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
                 + 0.5 * l2 * float(w @ w))
    g_w = x.T @ (p - y) / len(y) + l2 * w
    g_b = float(np.mean(p - y))
    return loss, g_w, g_b


def logreg_train(features: np.ndarray, labels, lr: float = 0.5,
                 epochs: int = 2000, l2: float = 1e-4) -> LogRegModel:
    """Full-batch gradient descent from zero weights on standardized features.

    Standardization statistics come from the training set only and travel
    with the model.  Deterministic: no randomness anywhere.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features must be (N, d) with one label per row")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training set contains a single class")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0
    xs = (x - mean) / std
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(epochs):
        _, g_w, g_b = logreg_loss_and_grad(w, b, xs, y, l2)
        w -= lr * g_w
        b -= lr * g_b
    return LogRegModel(w, b, mean, std, {"lr": lr, "epochs": epochs, "l2": l2})


def logreg_predict(model: LogRegModel, feature: np.ndarray) -> BinaryPrediction:
    z = (np.asarray(feature, dtype=float) - model.mean) / model.std
    p = float(_sigmoid(z @ model.weights + model.bias))
    # keep strictly inside (0, 1) so downstream thresholds stay well defined
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return BinaryPrediction(p)


def ensemble_mean(preds: list[BinaryPrediction]) -> BinaryPrediction:
    if not preds:
        raise ValueError("ensemble needs at least one prediction")
    return BinaryPrediction(float(np.mean([p.a_pred for p in preds])))


# -- noisy constant-velocity sampler ---------------------------------------------

def noisy_cv_predict(sample: Sample, n_p: int, sigma_a: float,
                     seed: int) -> TrajectoryPrediction:
    """n_p rollouts: constant velocity from the last input step plus zero-mean
    Gaussian acceleration noise accumulated per output step."""
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    tgt = sample.x_i[sample.roles.index("target")]
    if len(sample.t_i) >= 2:
        v0 = (tgt[-1] - tgt[-2]) / sample.dt
    else:
        v0 = np.zeros(2)
    n_o = len(sample.t_o)
    rng = np.random.default_rng(seed)
    accel = rng.normal(0.0, sigma_a, size=(n_p, n_o, 2)) if sigma_a > 0 \
        else np.zeros((n_p, n_o, 2))
    v = v0[None, None, :] + np.cumsum(accel * sample.dt, axis=1)
    x = tgt[-1][None, None, :] + np.cumsum(v * sample.dt, axis=1)
    return TrajectoryPrediction(x)


# -- trajectory retrieval ----------------------------------------------------------

@dataclass
class RetrievalModel:
    """k-nearest-neighbor lookup in feature space returning stored output
    trajectories, translated to start from the query target's t_0 pose."""
    features: np.ndarray          # (m, d) standardized
    mean: np.ndarray
    std: np.ndarray
    t0_pose: np.ndarray           # (m, 2) target position at t_0
    trajectories: list[np.ndarray]
    steps: np.ndarray             # (m,) native step of each stored trajectory
    cls: int | None

    @property
    def size(self) -> int:
        return len(self.trajectories)

    def predict_trajectories(self, sample: Sample, n_p: int,
                             seed: int = 0) -> TrajectoryPrediction:
        return retrieval_predict(self, sample, n_p, seed)


def retrieval_train(samples: list[Sample], cls: int | None) -> RetrievalModel:
    """Fit on the samples with decision ``cls`` (1 accepted, 0 rejected,
    None for no class conditioning)."""
    subset = [s for s in samples if cls is None or s.a == cls]
    if not subset:
        raise ValueError(f"no training samples with decision {cls!r}")
    feats = np.stack([featurize(s) for s in subset])
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std < 1e-12] = 1.0
    return RetrievalModel(
        features=(feats - mean) / std,
        mean=mean, std=std,
        t0_pose=np.stack([s.x_i[s.roles.index("target")][-1] for s in subset]),
        trajectories=[s.x_o.copy() for s in subset],
        steps=np.array([s.dt for s in subset]),
        cls=cls,
    )


def _align_horizon(traj: np.ndarray, n_o: int) -> np.ndarray:
    """Truncate, or extend at constant velocity, to exactly n_o steps."""
    if len(traj) >= n_o:
        return traj[:n_o]
    v = traj[-1] - traj[-2] if len(traj) >= 2 else np.zeros(2)
    tail = traj[-1] + np.outer(np.arange(1, n_o - len(traj) + 1), v)
    return np.vstack([traj, tail])


def retrieval_predict(model: RetrievalModel, sample: Sample, n_p: int,
                      seed: int = 0) -> TrajectoryPrediction:
    """The n_p nearest stored trajectories (Euclidean distance on standardized
    features, ties broken by training order), each shifted so it starts at the
    query target's t_0 pose.  Deterministic; the seed is accepted only to
    satisfy the plugin contract shared with stochastic models."""
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    if n_p > model.size:
        raise ValueError(f"n_p={n_p} exceeds the stored class size {model.size}")
    f = (featurize(sample) - model.mean) / model.std
    d = np.linalg.norm(model.features - f, axis=1)
    nearest = np.argsort(d, kind="stable")[:n_p]
    query_pose = sample.x_i[sample.roles.index("target")][-1]
    n_o = len(sample.t_o)
    out = np.stack([
        _align_horizon(model.trajectories[i] - model.t0_pose[i] + query_pose, n_o)
        for i in nearest
    ])
    return TrajectoryPrediction(out)


# -- plugin layer ------------------------------------------------------------------

class PredictionModel:
    """Contract the harness trains and queries; subclass per model family."""

    name = "model"
    output_form = "binary"

    def fit(self, train: list[Sample]) -> None:
        raise NotImplementedError

    def predict(self, sample: Sample) -> Prediction:
        raise NotImplementedError

    def state_dict(self) -> dict:
        raise NotImplementedError


class LogisticRegressionModel(PredictionModel):
    output_form = "binary"

    def __init__(self, name: str = "logreg", lr: float = 0.5,
                 epochs: int = 2000, l2: float = 1e-4):
        self.name = name
        self.hyper = {"lr": lr, "epochs": epochs, "l2": l2}
        self.model: LogRegModel | None = None

    def fit(self, train: list[Sample]) -> None:
        feats = np.stack([featurize(s) for s in train])
        labels = [s.a for s in train]
        self.model = logreg_train(feats, labels, **self.hyper)

    def predict(self, sample: Sample) -> BinaryPrediction:
        if self.model is None:
            raise RuntimeError("model not fitted")
        return logreg_predict(self.model, featurize(sample))

    def state_dict(self) -> dict:
        if self.model is None:
            raise RuntimeError("model not fitted")
        return {
            "weights": self.model.weights.tolist(),
            "bias": self.model.bias,
            "mean": self.model.mean.tolist(),
            "std": self.model.std.tolist(),
            "hyper": self.model.hyper,
        }


class EnsembleMeanModel(PredictionModel):
    """Arithmetic mean over member binary models, trained side by side."""

    output_form = "binary"

    def __init__(self, name: str = "ensemble",
                 members: list[PredictionModel] | None = None):
        self.name = name
        self.members = members or [
            LogisticRegressionModel("m0"),
            LogisticRegressionModel("m1", lr=0.2, epochs=3000, l2=1e-3),
        ]
        if any(m.output_form != "binary" for m in self.members):
            raise ValueError("ensemble members must produce binary predictions")

    def fit(self, train: list[Sample]) -> None:
        for m in self.members:
            m.fit(train)

    def predict(self, sample: Sample) -> BinaryPrediction:
        return ensemble_mean([m.predict(sample) for m in self.members])

    def state_dict(self) -> dict:
        return {"members": [m.state_dict() for m in self.members]}


class NoisyConstantVelocityModel(PredictionModel):
    output_form = "trajectory"

    def __init__(self, name: str = "noisy_cv", n_p: int = 20,
                 sigma_a: float = 0.5, seed: int = 0):
        self.name = name
        self.n_p = n_p
        self.sigma_a = sigma_a
        self.seed = seed

    def fit(self, train: list[Sample]) -> None:
        pass  # nothing to learn

    def predict(self, sample: Sample) -> TrajectoryPrediction:
        seed = int.from_bytes(
            f"{self.seed}:{sample.scene_id}".encode(), "little") % (2 ** 63)
        return noisy_cv_predict(sample, self.n_p, self.sigma_a, seed)

    def state_dict(self) -> dict:
        return {"n_p": self.n_p, "sigma_a": self.sigma_a, "seed": self.seed}


class RetrievalTrajectoryModel(PredictionModel):
    output_form = "trajectory"

    def __init__(self, name: str = "retrieval", n_p: int = 20,
                 cls: int | None = None, seed: int = 0):
        self.name = name
        self.n_p = n_p
        self.cls = cls
        self.seed = seed
        self.model: RetrievalModel | None = None

    def fit(self, train: list[Sample]) -> None:
        self.model = retrieval_train(train, self.cls)

    def predict(self, sample: Sample) -> TrajectoryPrediction:
        if self.model is None:
            raise RuntimeError("model not fitted")
        return retrieval_predict(self.model, sample, self.n_p, self.seed)

    def state_dict(self) -> dict:
        if self.model is None:
            raise RuntimeError("model not fitted")
        return {
            "cls": self.cls, "n_p": self.n_p,
            "n_stored": self.model.size,
        }


MODEL_REGISTRY = {
    "logistic_regression": LogisticRegressionModel,
    "ensemble_mean": EnsembleMeanModel,
    "noisy_cv": NoisyConstantVelocityModel,
    "retrieval": RetrievalTrajectoryModel,
}


def build_model(cfg: dict) -> PredictionModel:
    cfg = dict(cfg)
    kind = cfg.pop("type")
    try:
        factory = MODEL_REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown model type {kind!r}; "
                         f"known: {sorted(MODEL_REGISTRY)}") from None
    return factory(**cfg)


def save_model(model: PredictionModel, path: str | Path) -> Path:
    path = Path(path)
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "name": model.name,
        "output_form": model.output_form,
        "state": model.state_dict(),
    }
    payload["config_hash"] = config_hash(payload["state"])
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_model_state(path: str | Path) -> dict:
    payload = json.loads(Path(path).read_text())
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
    return payload
