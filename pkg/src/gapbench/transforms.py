"""Conversions between the three prediction forms.

A trajectory set collapses to timing/binary by classifying each trajectory
through its contested-space entry time (T1).  The reverse direction samples
trajectories from two class-conditional trajectory models, weighting accepted
candidates so the requested decile distribution of the acceptance time is
preserved (T2), with the deciles themselves synthesized from the
accepted-class model when only a probability is available (T3).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .extraction import Sample
from .models import (BinaryPrediction, Prediction, TimingPrediction,
                     TrajectoryPrediction, prediction_form)
from .scenario import Scene, ScenarioDefinition

MAX_POOL_QUERIES = 10


@dataclass
class TransformContext:
    """Everything a form conversion may need for one sample."""
    scene: Scene
    scenario: ScenarioDefinition
    sample: Sample
    m_a: object | None = None       # accepted-gap trajectory model
    m_not_a: object | None = None   # rejected-gap trajectory model
    n_p: int = 20
    seed: int = 0


def _child_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def entry_time(traj: np.ndarray, ctx: TransformContext) -> float:
    """First contested-space entry time of one trajectory over the output
    window; inf if it never enters."""
    return ctx.scenario.target_entry_time(ctx.scene, ctx.sample.t_o, traj)


def f_a(traj: np.ndarray, ctx: TransformContext) -> int:
    """Gap decision read off a single trajectory: accepted iff it enters the
    contested space before the output horizon ends."""
    return int(entry_time(traj, ctx) < float(ctx.sample.t_o[-1]))


def q9(values) -> np.ndarray:
    """Empirical deciles (p = 0.1 .. 0.9) with linear interpolation between
    order statistics."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ValueError("cannot take deciles of an empty set")
    return np.quantile(vals, np.arange(1, 10) / 10.0, method="linear")


def t1(trajset: TrajectoryPrediction, ctx: TransformContext) -> TimingPrediction:
    """Trajectory set -> timing: acceptance probability is the accepting
    fraction, deciles come from the accepting entry times (absent if none)."""
    times = np.array([entry_time(tr, ctx) for tr in trajset.trajs])
    horizon = float(ctx.sample.t_o[-1])
    accepting = times[times < horizon]
    a_pred = accepting.size / len(trajset.trajs)
    deciles = q9(accepting) if accepting.size else None
    return TimingPrediction(a_pred, deciles)


def weighted_selection(m: int, pool_size: int, weights, seed: int) -> np.ndarray:
    """Draw m indices from range(pool_size) with probability proportional to
    the weights: without replacement while m <= pool_size, with replacement
    beyond that.  Seeded and deterministic."""
    w = np.asarray(weights, dtype=float)
    if pool_size == 0 or w.shape != (pool_size,):
        raise ValueError("selection needs a nonempty pool with matching weights")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    rng = np.random.default_rng(seed)
    if m <= pool_size:
        if int(np.count_nonzero(w)) < m:
            raise ValueError("not enough positive-weight items for a draw "
                             "without replacement")
        # Efraimidis-Spirakis keys: u^(1/w) ranks a weighted draw without replacement
        u = rng.random(pool_size)
        keys = np.where(w > 0, u ** (1.0 / np.where(w > 0, w, 1.0)), -1.0)
        return np.argsort(-keys, kind="stable")[:m]
    return rng.choice(pool_size, size=m, replace=True, p=w / w.sum())


def decile_anchor_weights(times: np.ndarray, deciles: np.ndarray,
                          n_acc: int) -> np.ndarray:
    """0/1 candidate weights realizing the decile-preserving selection.

    Every half-open inter-decile bin (-inf, q1], (q1, q2], ..., (q9, inf)
    receives an equal share of the n_acc draws; inside a bin the share sits
    on the candidates nearest evenly spaced anchors ending at the bin edges.
    Edge-hugging candidates make the empirical deciles of the selection
    reproduce the requested ones down to the local spacing of the candidate
    pool; a bin without enough candidates donates its surplus to the nearest
    bin that still has spare ones.
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    if n == 0:
        raise ValueError("no candidates to weight")
    if n_acc > n:
        raise ValueError(f"cannot anchor {n_acc} draws on {n} candidates")
    deciles = np.asarray(deciles, dtype=float)
    bins = np.searchsorted(deciles, times, side="left")
    counts = np.bincount(bins, minlength=10)

    quotas = np.full(10, n_acc // 10)
    rem = n_acc - int(quotas.sum())
    if rem == 1:
        quotas[4] += 1
    elif rem > 1:
        quotas[np.round(np.linspace(0, 9, rem)).astype(int)] += 1
    for j in range(10):  # rebalance onto bins that actually have candidates
        while quotas[j] > counts[j]:
            spare = [(abs(k - j), k) for k in range(10) if quotas[k] < counts[k]]
            if not spare:
                raise ValueError("candidate pool smaller than requested draws")
            quotas[min(spare)[1]] += 1
            quotas[j] -= 1

    lo_edges = np.concatenate([[times.min()], deciles])
    hi_edges = np.concatenate([deciles, [times.max()]])
    weights = np.zeros(n)
    used = np.zeros(n, dtype=bool)
    for j in range(10):
        q = int(quotas[j])
        if q == 0:
            continue
        members = np.flatnonzero(bins == j)
        anchors = np.array([hi_edges[j]]) if q == 1 \
            else np.linspace(lo_edges[j], hi_edges[j], q)
        for a in anchors:
            free = members[~used[members]]
            pick = int(free[np.argmin(np.abs(times[free] - a))])
            used[pick] = True
            weights[pick] = 1.0
    return weights


def _collect_pool(model, accepted: bool, ctx: TransformContext,
                  seed: int, desired: int):
    """Gather class-consistent candidate trajectories from a conditional
    model, re-querying with incremented seeds (and a widened request, since a
    deterministic retrieval model returns the same prefix for every seed).

    Collection aims for ``desired`` candidates; a smaller pool is fine (the
    selection step draws with replacement past the pool size), but a pool
    that stays empty after the bounded re-queries is an error naming the
    deficient class.
    """
    if model is None:
        which = "accepted" if accepted else "rejected"
        raise ValueError(f"no conditional model for the {which}-gap class")
    horizon = float(ctx.sample.t_o[-1])
    limit = getattr(model, "size", None)
    pool_trajs: list[np.ndarray] = []
    pool_times: list[float] = []
    seen: set[bytes] = set()
    for attempt in range(MAX_POOL_QUERIES):
        k = ctx.n_p * (attempt + 1) if desired <= ctx.n_p * MAX_POOL_QUERIES \
            else int(math.ceil(desired / MAX_POOL_QUERIES)) * (attempt + 1)
        if limit is not None:
            k = min(k, limit)
        pred = model.predict_trajectories(ctx.sample, k, seed + attempt)
        for tr in pred.trajs:
            tag = np.round(tr, 9).tobytes()
            if tag in seen:
                continue
            seen.add(tag)
            t_entry = entry_time(tr, ctx)
            if (t_entry < horizon) == accepted:
                pool_trajs.append(tr)
                pool_times.append(t_entry)
        if len(pool_trajs) >= desired:
            break
        if limit is not None and k >= limit:
            break  # deterministic model exhausted
    if pool_trajs:
        return pool_trajs, np.array(pool_times)
    which = "accepted" if accepted else "rejected"
    raise ValueError(
        f"no {which}-gap trajectories in the candidate pool after "
        f"{MAX_POOL_QUERIES} queries")


def t2(timing: TimingPrediction, ctx: TransformContext) -> TrajectoryPrediction:
    """Timing -> trajectory set: round(n_p * (1 - a_pred)) rejected-gap
    trajectories drawn uniformly, the rest accepted-gap trajectories drawn
    with decile-preserving weights.  round-half-to-even keeps the acceptance
    fraction within 1/(2 n_p) of a_pred."""
    n_p = ctx.n_p
    n_rej = int(round(n_p * (1.0 - timing.a_pred)))
    n_acc = n_p - n_rej
    chosen: list[np.ndarray] = []
    if n_rej > 0:
        pool, _ = _collect_pool(ctx.m_not_a, False, ctx,
                                _child_seed(ctx.seed, "rejected"),
                                desired=n_rej)
        idx = weighted_selection(n_rej, len(pool), np.ones(len(pool)),
                                 _child_seed(ctx.seed, "rejected-pick"))
        chosen.extend(pool[i] for i in idx)
    if n_acc > 0:
        pool, times = _collect_pool(ctx.m_a, True, ctx,
                                    _child_seed(ctx.seed, "accepted"),
                                    desired=10 * ctx.n_p)
        if timing.t_a_deciles is not None and len(pool) >= n_acc:
            weights = decile_anchor_weights(times, timing.t_a_deciles, n_acc)
        else:
            weights = np.ones(len(pool))  # sparse pool: uniform, may duplicate
        idx = weighted_selection(n_acc, len(pool), weights,
                                 _child_seed(ctx.seed, "accepted-pick"))
        chosen.extend(pool[i] for i in idx)
    return TrajectoryPrediction(np.stack(chosen))


def t3(a_pred: float, ctx: TransformContext) -> TimingPrediction:
    """Binary -> timing: the probability passes through unchanged; deciles are
    taken from the accepting trajectories of the accepted-class model."""
    _, times = _collect_pool(ctx.m_a, True, ctx, _child_seed(ctx.seed, "t3"),
                             desired=ctx.n_p)
    return TimingPrediction(a_pred, q9(times))


def auto_chain(pred: Prediction, needed: str, ctx: TransformContext) -> Prediction:
    """Route a prediction to the requested form through T1/T2/T3."""
    have = prediction_form(pred)
    if needed not in ("binary", "timing", "trajectory"):
        raise ValueError(f"unknown prediction form {needed!r}")
    if have == needed:
        return pred
    if have == "trajectory":
        timing = t1(pred, ctx)
        return BinaryPrediction(timing.a_pred) if needed == "binary" else timing
    if have == "timing":
        if needed == "binary":
            return BinaryPrediction(pred.a_pred)
        return t2(pred, ctx)
    # binary source
    timing = t3(pred.a_pred, ctx)
    if needed == "timing":
        return timing
    return t2(timing, ctx)
