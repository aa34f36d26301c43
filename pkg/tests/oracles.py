"""Independent reference implementations used by several test modules.

Kept deliberately naive (pure Python loops, recursion) so they cannot
share bugs with the vectorized library code they are checking.
"""

from __future__ import annotations

import numpy as np


def rank_oracle(values):
    """Percentile scores by explicit sorting: mean rank of ties over n-1."""
    values = [float(v) for v in values]
    n = len(values)
    if n == 1:
        return [0.5]
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return [r / (n - 1) for r in ranks]


def exact_iso_distribution(candidates, budget):
    """Outcome distribution of sequential distance-squared sampling.

    ``candidates`` is a list of (instance_id, level, cost, vector) tuples.
    Enumerates every draw sequence recursively and aggregates by the final
    batch, returned as {frozenset((id, level), ...): probability}.
    """
    ids = [c[0] for c in candidates]
    costs = [float(c[2]) for c in candidates]
    vectors = [np.asarray(c[3], dtype=float) for c in candidates]
    n = len(candidates)
    out: dict[frozenset, float] = {}

    def sq_dist(a, b):
        d = vectors[a] - vectors[b]
        return float(d @ d)

    def recurse(selected, remaining, min_sq, prob):
        eligible = [
            i for i in range(n)
            if costs[i] <= remaining and all(ids[i] != ids[s] for s in selected)
        ]
        if not eligible:
            key = frozenset((candidates[i][0], candidates[i][1]) for i in selected)
            out[key] = out.get(key, 0.0) + prob
            return
        weights = [min_sq[i] for i in eligible]
        total = sum(weights)
        for pos, i in enumerate(eligible):
            p = weights[pos] / total if total > 0.0 else 1.0 / len(eligible)
            if p == 0.0:
                continue
            new_min = [min(min_sq[j], sq_dist(j, i)) if selected else sq_dist(j, i)
                       for j in range(n)]
            recurse(selected + [i], remaining - costs[i], new_min, prob * p)

    first_sq = [float(v @ v) for v in vectors]
    recurse([], float(budget), first_sq, 1.0)
    return out


def batch_outcome(batch):
    """Normalize a SelectionBatch into the oracle's outcome key."""
    return frozenset(
        [(i, "full") for i in batch.full_ids] + [(i, "weak") for i in batch.weak_ids]
    )


def total_variation(dist_a: dict, dist_b: dict) -> float:
    keys = set(dist_a) | set(dist_b)
    return 0.5 * sum(abs(dist_a.get(k, 0.0) - dist_b.get(k, 0.0)) for k in keys)


def nearest_centroid_accuracy(features, labels, test_features, test_labels):
    """1-nearest-centroid classifier accuracy, brute force."""
    classes = sorted(set(int(v) for v in labels))
    centroids = {c: np.mean(features[labels == c], axis=0) for c in classes}
    hits = 0
    for x, y in zip(test_features, test_labels):
        best = min(classes, key=lambda c: float(np.sum((x - centroids[c]) ** 2)))
        hits += int(best == int(y))
    return hits / len(test_labels)
