"""Stratified 10-fold protocol with 64/16/20 train/validation/test splits."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import TooSmallError

TEST_FRACTION = 0.2
VAL_FRACTION = 0.2  # of the non-test remainder, i.e. 16% of the corpus


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train: tuple
    val: tuple
    test: tuple

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def to_json(self) -> dict:
        return {"fold": self.fold, "train": list(self.train), "val": list(self.val), "test": list(self.test)}


def _counts(n_by_class: list[int], test_fraction: float, val_fraction: float):
    """Per-class (test, val) counts keeping every set size and class share within one sample of target."""
    total = sum(n_by_class)
    fracs = (test_fraction, (1 - test_fraction) * val_fraction, (1 - test_fraction) * (1 - val_fraction))
    cands = []
    for n in n_by_class:
        t_opts = sorted({math.floor(n * fracs[0]), math.ceil(n * fracs[0])})
        v0 = n * fracs[1]
        v_opts = range(max(0, math.floor(v0) - 1), math.ceil(v0) + 2)
        cands.append([(t, v) for t in t_opts for v in v_opts if t + v <= n])
    best = None
    for combo in itertools.product(*cands):
        sets = [[t for t, _ in combo], [v for _, v in combo], [n - t - v for n, (t, v) in zip(n_by_class, combo)]]
        err = 0.0
        for frac, counts in zip(fracs, sets):
            size = sum(counts)
            err = max(err, abs(size - frac * total))
            for n, c in zip(n_by_class, counts):
                err = max(err, abs(c - size * n / total), abs(c - frac * n))
        if best is None or err < best[0] - 1e-12:
            best = (err, combo)
    return best[1]


def kfold_split(
    labels,
    k: int = 10,
    seed: int = 0,
    test_fraction: float = TEST_FRACTION,
    val_fraction: float = VAL_FRACTION,
) -> list[FoldSplit]:
    """Stratified folds over sample positions ``0..len(labels)-1``.

    Each class is shuffled once. Fold ``f`` takes as test set a cyclic window
    of that class order starting at ``f * n_c // k``, so test sets sweep the
    corpus evenly and every sample is tested about ``k * test_fraction``
    times. The rest is split into train and validation with a fold-specific
    shuffle.
    """
    labels = np.asarray(labels)
    classes = sorted(int(c) for c in np.unique(labels))
    if k < 2:
        raise TooSmallError("k must be at least 2")
    if len(classes) < 2:
        raise TooSmallError("both classes must be present")
    members = [np.flatnonzero(labels == c) for c in classes]
    for c, m in zip(classes, members):
        if len(m) < k:
            raise TooSmallError(f"class {c} has {len(m)} samples, fewer than k={k}")
    n_by_class = [len(m) for m in members]
    counts = _counts(n_by_class, test_fraction, val_fraction)
    orders = [m[np.random.default_rng([seed, c]).permutation(len(m))] for c, m in zip(classes, members)]
    folds = []
    for f in range(k):
        train, val, test = [], [], []
        for c, order, (t, v) in zip(classes, orders, counts):
            n = len(order)
            start = f * n // k
            window = (start + np.arange(t)) % n
            chosen = np.zeros(n, bool)
            chosen[window] = True
            test.extend(order[chosen].tolist())
            rest = order[~chosen]
            rest = rest[np.random.default_rng([seed, f, c]).permutation(len(rest))]
            val.extend(rest[:v].tolist())
            train.extend(rest[v:].tolist())
        folds.append(FoldSplit(f, tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test))))
    return folds


def check_split(split: FoldSplit, labels, test_fraction: float = TEST_FRACTION,
                val_fraction: float = VAL_FRACTION, tol: float = 1.0) -> list[str]:
    """Violated split invariants, empty when the split is sound."""
    labels = np.asarray(labels)
    problems = []
    sets = {"train": set(split.train), "val": set(split.val), "test": set(split.test)}
    if len(sets["train"]) + len(sets["val"]) + len(sets["test"]) != len(labels):
        problems.append("sets overlap or do not cover the corpus")
    if set().union(*sets.values()) != set(range(len(labels))):
        problems.append("union is not the corpus")
    fracs = {
        "test": test_fraction,
        "val": (1 - test_fraction) * val_fraction,
        "train": (1 - test_fraction) * (1 - val_fraction),
    }
    total = len(labels)
    for name, frac in fracs.items():
        ids = np.fromiter(sets[name], dtype=np.int64)
        if abs(len(ids) - frac * total) > tol:
            problems.append(f"{name} size {len(ids)} vs target {frac * total:.1f}")
        for c in np.unique(labels):
            have = int((labels[ids] == c).sum()) if len(ids) else 0
            want = len(ids) * float((labels == c).mean())
            if abs(have - want) > tol:
                problems.append(f"{name} class {c}: {have} vs {want:.1f}")
    return problems
