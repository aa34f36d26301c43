"""Datasets, label pools, class hierarchy and cost/budget bookkeeping.

Annotation is simulated: "labeling" an instance reveals the exact class
(full supervision) or the superclass (weak supervision) already stored in
the dataset. Ids are dense integers 0..N-1 assigned at load time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityError,
    BudgetExhaustedError,
    ConfigError,
    PoolViolationError,
    ShapeError,
)

FULL = "full"
WEAK = "weak"
LEVELS = (FULL, WEAK)


@dataclass(frozen=True)
class ClassHierarchy:
    """Surjective map from exact classes onto superclasses.

    ``parent[c]`` is the superclass of exact class ``c``. Every superclass
    must have at least one child and every class in [0, num_classes) must
    have a parent.
    """

    num_classes: int
    num_superclasses: int
    parent: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.num_classes <= 0 or self.num_superclasses <= 0:
            raise ConfigError("class counts must be positive")
        if self.num_superclasses > self.num_classes:
            raise ConfigError("more superclasses than classes")
        if len(self.parent) != self.num_classes:
            raise ConfigError("parent map must cover every exact class")
        seen = set()
        for c, s in enumerate(self.parent):
            if not 0 <= s < self.num_superclasses:
                raise ConfigError(f"class {c} has out-of-range superclass {s}")
            seen.add(s)
        if len(seen) != self.num_superclasses:
            raise ConfigError("every superclass needs at least one child class")

    def parent_of(self, exact_class: int) -> int:
        return self.parent[exact_class]


@dataclass(frozen=True)
class CostModel:
    """Per-annotation costs, per-round budget and round count."""

    cost_full: float
    cost_weak: float
    budget: float
    rounds: int

    def __post_init__(self) -> None:
        if not 0 < self.cost_weak <= self.cost_full:
            raise ConfigError("need 0 < cost_weak <= cost_full")
        if self.budget < self.cost_full:
            raise ConfigError("budget must afford at least one full annotation")
        if self.rounds < 1:
            raise ConfigError("rounds must be a positive integer")

    def cost_of(self, level: str) -> float:
        if level == FULL:
            return self.cost_full
        if level == WEAK:
            return self.cost_weak
        raise ConfigError(f"unknown supervision level {level!r}")


@dataclass(frozen=True)
class Instance:
    """A single data point with both label levels stored for simulation."""

    id: int
    features: np.ndarray
    exact_class: int
    superclass: int


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus both label levels and the class hierarchy.

    ``train_ids``/``test_ids`` partition 0..N-1; pools are always built
    from the train side, test ids are held out for final evaluation.
    """

    features: np.ndarray
    exact_classes: np.ndarray
    superclasses: np.ndarray
    hierarchy: ClassHierarchy
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ShapeError("features must be a 2-D matrix")
        if not np.all(np.isfinite(self.features)):
            raise ShapeError("features must be finite")
        if len(self.exact_classes) != n or len(self.superclasses) != n:
            raise ShapeError("label arrays must match the feature matrix")
        expected = np.array([self.hierarchy.parent_of(c) for c in self.exact_classes])
        if not np.array_equal(expected, self.superclasses):
            raise ConfigError("stored superclasses disagree with the hierarchy")
        ids = set(self.train_ids) | set(self.test_ids)
        if len(self.train_ids) + len(self.test_ids) != n or ids != set(range(n)):
            raise ConfigError("train/test ids must partition 0..N-1")

    @property
    def num_instances(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def instance(self, i: int) -> Instance:
        return Instance(
            id=i,
            features=self.features[i],
            exact_class=int(self.exact_classes[i]),
            superclass=int(self.superclasses[i]),
        )

    def gather(self, ids) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (features, exact labels, superclass labels) for ``ids``.

        Ids are sorted first so the result is independent of set iteration
        order; every downstream shuffle then depends only on its rng.
        """
        idx = np.array(sorted(ids), dtype=int)
        if idx.size == 0:
            return (
                np.empty((0, self.dim)),
                np.empty(0, dtype=int),
                np.empty(0, dtype=int),
            )
        return self.features[idx], self.exact_classes[idx], self.superclasses[idx]


@dataclass(frozen=True)
class LabeledPools:
    """Tri-partition of train data plus held-out validation and test ids.

    The five id-sets are pairwise disjoint; once an id leaves ``unlabeled``
    it never returns, and ``full``/``weak`` only grow.
    """

    unlabeled: frozenset[int]
    full: frozenset[int] = field(default_factory=frozenset)
    weak: frozenset[int] = field(default_factory=frozenset)
    validation: frozenset[int] = field(default_factory=frozenset)
    test: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        sets = [self.unlabeled, self.full, self.weak, self.validation, self.test]
        total = sum(len(s) for s in sets)
        if len(frozenset().union(*sets)) != total:
            raise PoolViolationError("pool id-sets must be pairwise disjoint")

    def pool(self, level: str) -> frozenset[int]:
        if level == FULL:
            return self.full
        if level == WEAK:
            return self.weak
        raise ConfigError(f"unknown supervision level {level!r}")


def move_to_pool(pools: LabeledPools, ids, level: str) -> LabeledPools:
    """Move ``ids`` out of the unlabeled pool into ``full`` or ``weak``.

    Rejects the whole request (no partial mutation) if any id is not
    currently unlabeled.
    """
    ids = frozenset(ids)
    if not ids:
        return pools
    stray = ids - pools.unlabeled
    if stray:
        raise PoolViolationError(
            f"ids not in the unlabeled pool: {sorted(stray)[:5]}"
        )
    remaining = pools.unlabeled - ids
    if level == FULL:
        return LabeledPools(remaining, pools.full | ids, pools.weak,
                            pools.validation, pools.test)
    if level == WEAK:
        return LabeledPools(remaining, pools.full, pools.weak | ids,
                            pools.validation, pools.test)
    raise ConfigError(f"unknown supervision level {level!r}")


def initial_equal_sample(
    pools: LabeledPools, cost: CostModel, rng: np.random.Generator
) -> tuple[frozenset[int], frozenset[int]]:
    """Draw the round-1 batch: equally many full and weak annotations.

    n = floor(B / (C_f + C_w)) instances per level, sampled uniformly
    without replacement from the unlabeled pool. The residual budget
    B - n*(C_f + C_w) is discarded, keeping the equal-count rule exact.
    """
    n = int(cost.budget // (cost.cost_full + cost.cost_weak))
    if len(pools.unlabeled) < 2 * n:
        raise CapacityError(
            f"need {2 * n} unlabeled instances, have {len(pools.unlabeled)}"
        )
    order = rng.permutation(sorted(pools.unlabeled))
    full_ids = frozenset(int(i) for i in order[:n])
    weak_ids = frozenset(int(i) for i in order[n:2 * n])
    return full_ids, weak_ids


def budget_charge(remaining: float, level: str, cost: CostModel) -> float:
    """Deduct one annotation at ``level`` from the remaining budget."""
    price = cost.cost_of(level)
    if remaining < price:
        raise BudgetExhaustedError(
            f"remaining budget {remaining} cannot cover {level} cost {price}"
        )
    return remaining - price


def save_dataset_csv(path, features, exact_classes, superclasses, ids=None) -> None:
    """Write instances as ``id,label,superclass,f0,...,f{d-1}`` rows.

    Floats are written with repr so values round-trip exactly and output
    bytes are deterministic.
    """
    d = features.shape[1]
    if ids is None:
        ids = range(features.shape[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "superclass"] + [f"f{j}" for j in range(d)])
        for i, inst in zip(range(features.shape[0]), ids):
            row = [int(inst), int(exact_classes[i]), int(superclasses[i])]
            row += [repr(float(v)) for v in features[i]]
            writer.writerow(row)


def load_dataset_csv(train_path, test_path) -> Dataset:
    """Load a train/test CSV pair and validate hierarchy consistency.

    Every exact class must map to a single superclass across both files,
    and class/superclass indices must densely cover [0, C) and [0, S).
    """
    feats: list[np.ndarray] = []
    labels: list[int] = []
    supers: list[int] = []
    counts = []
    for path in (train_path, test_path):
        n_before = len(labels)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["id", "label", "superclass"]:
                raise ConfigError(f"{path}: unexpected header {header[:3]}")
            for row in reader:
                labels.append(int(row[1]))
                supers.append(int(row[2]))
                feats.append(np.array([float(v) for v in row[3:]]))
        counts.append(len(labels) - n_before)
    if not labels:
        raise ConfigError("dataset files contain no instances")

    parent: dict[int, int] = {}
    for c, s in zip(labels, supers):
        if parent.setdefault(c, s) != s:
            raise ConfigError(f"class {c} mapped to superclasses {parent[c]} and {s}")
    num_classes = max(labels) + 1
    num_superclasses = max(supers) + 1
    if set(parent) != set(range(num_classes)):
        raise ConfigError("class indices must densely cover [0, C)")
    hierarchy = ClassHierarchy(
        num_classes=num_classes,
        num_superclasses=num_superclasses,
        parent=tuple(parent[c] for c in range(num_classes)),
    )
    n_train = counts[0]
    return Dataset(
        features=np.vstack(feats),
        exact_classes=np.array(labels, dtype=int),
        superclasses=np.array(supers, dtype=int),
        hierarchy=hierarchy,
        train_ids=tuple(range(n_train)),
        test_ids=tuple(range(n_train, len(labels))),
    )
