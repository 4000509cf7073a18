"""Evaluation metrics for binary and trajectory predictions.

Binary metrics score predicted acceptance probabilities against the recorded
decision; trajectory metrics score sets of equally likely trajectories
against the recorded target path.  Each metric is admissible only at certain
prediction-time policies: symmetric scores are meaningful well before the
last safe instant, while the perfect-recall true negative rate is designed
for predictions made at that instant.  Running a metric at an inadmissible
policy produces a warning flag, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARLY_POLICIES = ("initial", "fixed_gap")
R_MISS_DEFAULT = 2.0

#: metric name -> (required prediction form, admissible policy kinds)
METRIC_SPECS = {
    "accuracy": ("binary", EARLY_POLICIES),
    "auc": ("binary", EARLY_POLICIES),
    "ade": ("trajectory", EARLY_POLICIES),
    "fde": ("trajectory", EARLY_POLICIES),
    "miss_rate": ("trajectory", EARLY_POLICIES),
    "tnr_pr": ("binary", ("critical",)),
}


@dataclass
class MetricResult:
    name: str
    value: float
    per_sample: np.ndarray | None = None
    policy_check: str = "pass"
    note: str = ""


def required_form(metric_name: str) -> str:
    base = metric_name.split("_b")[0] if metric_name.startswith(("ade", "fde")) else metric_name
    try:
        return METRIC_SPECS[base][0]
    except KeyError:
        raise ValueError(f"unknown metric {metric_name!r}") from None


def _policy_check(metric: str, policy: str | None) -> tuple[str, str]:
    if policy is None:
        return "pass", ""
    kind = policy.split("_")[0] if policy.startswith("fixed") else policy
    kind = "fixed_gap" if kind == "fixed" else kind
    allowed = METRIC_SPECS[metric][1]
    if kind in allowed:
        return "pass", ""
    return "warn", f"{metric} is meant for t0 policies {allowed}, got {policy!r}"


def _check_binary(scores, truths):
    scores = np.asarray(scores, dtype=float)
    truths = np.asarray(truths, dtype=int)
    if scores.shape != truths.shape or scores.ndim != 1:
        raise ValueError("scores and truths must be 1-D and of equal length")
    if scores.size == 0:
        raise ValueError("empty prediction list")
    return scores, truths


def accuracy(scores, truths, threshold: float = 0.5,
             policy: str | None = None) -> MetricResult:
    """Fraction of samples whose thresholded prediction matches the decision;
    scores at the threshold count as positive."""
    scores, truths = _check_binary(scores, truths)
    hits = ((scores >= threshold).astype(int) == truths).astype(float)
    check, note = _policy_check("accuracy", policy)
    return MetricResult("accuracy", float(hits.mean()), hits, check, note)


def auc(scores, truths, policy: str | None = None) -> MetricResult:
    """Area under the ROC curve via the rank (Mann-Whitney) statistic.

    Equals the fraction of (positive, negative) pairs ranked correctly, ties
    counted one half; computed from average ranks in O(N log N).
    """
    scores, truths = _check_binary(scores, truths)
    n_pos = int(truths.sum())
    n_neg = truths.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes in the test set")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=float)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[truths == 1].sum())
    value = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    check, note = _policy_check("auc", policy)
    return MetricResult("auc", float(value), None, check, note)


def _check_trajectories(pred_sets, truths):
    if len(pred_sets) != len(truths) or not pred_sets:
        raise ValueError("prediction sets and truths must be nonempty and equal length")
    for trajs, truth in zip(pred_sets, truths):
        trajs = np.asarray(trajs, dtype=float)
        truth = np.asarray(truth, dtype=float)
        if trajs.ndim != 3 or trajs.shape[1:] != truth.shape:
            raise ValueError(
                f"horizon mismatch: predictions {trajs.shape} vs truth {truth.shape}")


def _displacements(trajs, truth) -> np.ndarray:
    return np.linalg.norm(np.asarray(trajs, float) - np.asarray(truth, float)[None], axis=2)


def _best_subset_mean(errors: np.ndarray, beta: float) -> float:
    k = int(math.ceil(errors.size * beta))
    k = max(1, min(k, errors.size))
    return float(np.sort(errors)[:k].mean())


def ade_beta(pred_sets, truths, beta: float = 1.0,
             policy: str | None = None) -> MetricResult:
    """Average displacement error of the best n_p*beta trajectories per sample."""
    if not (0 < beta <= 1):
        raise ValueError("beta must be in (0, 1]")
    _check_trajectories(pred_sets, truths)
    per = np.array([
        _best_subset_mean(_displacements(trajs, truth).mean(axis=1), beta)
        for trajs, truth in zip(pred_sets, truths)
    ])
    check, note = _policy_check("ade", policy)
    return MetricResult(f"ade_b{beta:g}", float(per.mean()), per, check, note)


def fde_beta(pred_sets, truths, beta: float = 1.0,
             policy: str | None = None) -> MetricResult:
    """Final displacement error, same selection rule applied at the last step."""
    if not (0 < beta <= 1):
        raise ValueError("beta must be in (0, 1]")
    _check_trajectories(pred_sets, truths)
    per = np.array([
        _best_subset_mean(_displacements(trajs, truth)[:, -1], beta)
        for trajs, truth in zip(pred_sets, truths)
    ])
    check, note = _policy_check("fde", policy)
    return MetricResult(f"fde_b{beta:g}", float(per.mean()), per, check, note)


def miss_rate(pred_sets, truths, r_miss: float = R_MISS_DEFAULT,
              policy: str | None = None) -> MetricResult:
    """Fraction of samples where even the closest final point misses the true
    endpoint by more than r_miss meters."""
    _check_trajectories(pred_sets, truths)
    per = np.array([
        float(_displacements(trajs, truth)[:, -1].min() > r_miss)
        for trajs, truth in zip(pred_sets, truths)
    ])
    check, note = _policy_check("miss_rate", policy)
    return MetricResult("miss_rate", float(per.mean()), per, check, note)


def tnr_pr(scores, truths, policy: str | None = None) -> MetricResult:
    """True negative rate at the lowest threshold with perfect recall.

    The threshold is the smallest predicted probability among true positives,
    so every acceptance is caught; the score is the fraction of rejections
    still classified negative, i.e. the chance of avoiding needless braking
    while guaranteeing no missed acceptance.
    """
    scores, truths = _check_binary(scores, truths)
    pos = scores[truths == 1]
    neg = scores[truths == 0]
    if pos.size == 0:
        raise ValueError("TNR-PR undefined without positives (no threshold)")
    if neg.size == 0:
        raise ValueError("TNR-PR undefined without negatives")
    theta = float(pos.min())
    value = float((neg < theta).mean())
    check, note = _policy_check("tnr_pr", policy)
    return MetricResult("tnr_pr", value, None, check, note)


def random_baseline(metric_name: str, truths, seed: int = 0,
                    threshold: float = 0.5, n_draws: int = 10_000) -> float:
    """Expected score of a uniformly random binary predictor on this test set.

    Closed forms where they exist (AUC and threshold-0.5 accuracy are both
    one half); TNR-PR falls back to seeded Monte-Carlo draws.
    """
    truths = np.asarray(truths, dtype=int)
    if metric_name == "auc":
        return 0.5
    if metric_name == "accuracy":
        # uniform score clears the threshold with probability 1 - threshold
        pos_rate = float(truths.mean())
        return (1.0 - threshold) * pos_rate + threshold * (1.0 - pos_rate)
    if metric_name == "tnr_pr":
        rng = np.random.default_rng(seed)
        vals = np.empty(n_draws)
        n = truths.size
        pos_mask = truths == 1
        if pos_mask.all() or not pos_mask.any():
            raise ValueError("TNR-PR baseline needs both classes")
        for i in range(n_draws):
            s = rng.uniform(size=n)
            theta = s[pos_mask].min()
            vals[i] = (s[~pos_mask] < theta).mean()
        return float(vals.mean())
    raise ValueError(f"no random baseline for metric {metric_name!r}")
