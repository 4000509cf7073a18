"""Train/test partitioning: seeded stratified-random or deterministic extreme.

Both methods put 20% of the samples in the test set.  The extreme method
ranks samples by how unintuitive the recorded decision was (accepting a small
gap or rejecting a large one) and tests on the top of that ranking.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .extraction import Dataset

TEST_FRACTION = 0.2
MIN_SAMPLES = 5


@dataclass(frozen=True)
class SplitResult:
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    zeta: tuple[float, ...] | None  # per-test-sample similarity; no method exists yet
    method: str
    seed: int | None


def _stratum_rng(seed: int, key: tuple) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _test_count(n: int) -> int:
    # round-half-up; single-sample strata land in train so tests stay evaluable
    return int(np.floor(TEST_FRACTION * n + 0.5))


def split_random_stratified(dataset: Dataset, seed: int) -> SplitResult:
    """Seeded 20% test selection inside each (decision, domain) stratum.

    Stratum order and within-stratum order are fixed by scene_id, and each
    stratum draws from its own seed-derived generator, so the result is
    invariant to the input permutation of equal datasets.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    if len(dataset) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples to split")
    strata: dict[tuple, list[int]] = {}
    for idx, s in enumerate(dataset.samples):
        strata.setdefault((s.a, s.k), []).append(idx)
    test: list[int] = []
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda i: (dataset.samples[i].scene_id, i))
        n_test = _test_count(len(members))
        if n_test == 0:
            continue
        rng = _stratum_rng(seed, key)
        pick = rng.choice(len(members), size=n_test, replace=False)
        test.extend(members[i] for i in pick)
    test_set = set(test)
    train = [i for i in range(len(dataset)) if i not in test_set]
    return SplitResult(tuple(train), tuple(sorted(test)), None,
                       "random_stratified", seed)


def unintuitiveness(a: int, gap_at_t0: float, pivot: float = 0.0) -> float:
    """Higher for decisions that contradict the offered gap size: accepting a
    gap well below the pivot or rejecting one well above it.

    The pivot (a typical gap duration, the dataset median in practice) makes
    small accepted gaps and large rejected gaps comparable on one scale;
    without it, one class would always outrank the other and the test set
    could never contain both decisions.
    """
    return pivot - gap_at_t0 if a == 1 else gap_at_t0 - pivot


def split_extreme(dataset: Dataset) -> SplitResult:
    """Deterministic split testing on the most unintuitive 20% of decisions.

    No seed, no class balancing; ties are broken by scene_id so equal inputs
    always produce the same partition.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    if len(dataset) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples to split")
    pivot = float(np.median([s.gap_at_t0 for s in dataset.samples]))
    scores = [unintuitiveness(s.a, s.gap_at_t0, pivot) for s in dataset.samples]
    order = sorted(range(len(dataset)),
                   key=lambda i: (-scores[i], dataset.samples[i].scene_id))
    n_test = _test_count(len(dataset))
    test = sorted(order[:n_test])
    train = sorted(order[n_test:])
    return SplitResult(tuple(train), tuple(test), None, "extreme", None)
