"""Seeded train/validation/test splits with stratification.

Supervised splits draw a fixed per-class quota for training (balanced
sampling) and a stratified fraction of the remainder for validation.
Unsupervised splits stratify by the binary label throughout. Stratified
counts use largest-remainder apportionment, so every class lands within
one sample of its exact proportional share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientClassSize

TRAIN_QUOTAS = {"binary": 100, "category": 25, "family": 5}
VAL_FRACTIONS = {"binary": 0.05, "category": 0.05, "family": 0.20}


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    label_level: str
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def __post_init__(self):
        parts = set(self.train) | set(self.val) | set(self.test)
        if len(parts) != len(self.train) + len(self.val) + len(self.test):
            raise ValueError("split parts must be pairwise disjoint")


def _by_class(labels: np.ndarray, indices: np.ndarray) -> dict[int, np.ndarray]:
    return {cls: indices[labels[indices] == cls] for cls in np.unique(labels[indices])}


def _apportion(counts: list[int], total: int) -> list[int]:
    """Largest-remainder split of `total` proportional to `counts`."""
    grand = sum(counts)
    if grand == 0 or total == 0:
        return [0] * len(counts)
    exact = [total * c / grand for c in counts]
    base = [int(np.floor(e)) for e in exact]
    leftover = total - sum(base)
    remainders = sorted(
        range(len(counts)), key=lambda i: (-(exact[i] - base[i]), i)
    )
    for i in remainders[:leftover]:
        base[i] += 1
    return base


def _stratified_take(groups: dict[int, np.ndarray], fraction: float,
                     rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Take round(fraction * total), proportionally per class; returns
    (taken, rest) with deterministic class ordering."""
    classes = sorted(groups)
    counts = [len(groups[c]) for c in classes]
    total_take = int(round(fraction * sum(counts)))
    allocation = _apportion(counts, total_take)
    taken: list[int] = []
    rest: list[int] = []
    for cls, quota in zip(classes, allocation):
        pool = groups[cls]
        perm = rng.permutation(len(pool))
        taken.extend(int(pool[i]) for i in perm[:quota])
        rest.extend(int(pool[i]) for i in perm[quota:])
    return taken, rest


def supervised_split(labels, label_level: str, seed: int,
                     quota: int | None = None,
                     val_fraction: float | None = None) -> SplitPlan:
    """Balanced training quota per class, stratified validation, rest test.

    Default quotas are 100/25/5 samples per class for binary/category/
    family, with validation taking 5% of the remainder (20% for family).
    """
    labels = np.asarray(labels, dtype=np.intp)
    if quota is None:
        quota = TRAIN_QUOTAS[label_level]
    if val_fraction is None:
        val_fraction = VAL_FRACTIONS[label_level]
    rng = np.random.default_rng(seed)
    groups = _by_class(labels, np.arange(labels.size))
    train: list[int] = []
    remaining: dict[int, np.ndarray] = {}
    for cls in sorted(groups):
        pool = groups[cls]
        if len(pool) < quota:
            raise InsufficientClassSize(
                f"class {cls} has {len(pool)} samples, quota is {quota}"
            )
        perm = rng.permutation(len(pool))
        train.extend(int(pool[i]) for i in perm[:quota])
        remaining[cls] = pool[perm[quota:]]
    val, test = _stratified_take(remaining, val_fraction, rng)
    return SplitPlan(seed, label_level, tuple(train), tuple(val), tuple(test))


def unsupervised_split(binary_labels, seed: int,
                       train_fraction: float = 0.20,
                       val_fraction: float = 0.10) -> SplitPlan:
    """Stratified split by binary label: a training fraction of all
    samples, then a validation fraction of what remains."""
    labels = np.asarray(binary_labels, dtype=np.intp)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    groups = _by_class(labels, np.arange(labels.size))
    train, rest = _stratified_take(groups, train_fraction, rng)
    rest_groups = _by_class(labels, np.asarray(rest, dtype=np.intp))
    val, test = _stratified_take(rest_groups, val_fraction, rng)
    return SplitPlan(seed, "binary", tuple(train), tuple(val), tuple(test))
