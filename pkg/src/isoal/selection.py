"""Budget-constrained batch selection.

The main sampler draws (instance, supervision-level) candidates
sequentially with probability proportional to the squared distance between
candidate vectors (vcr-scaled unit embeddings) and the nearest vector
chosen so far, charging each pick's annotation cost until nothing
affordable remains. The first draw is anchored at the origin, i.e. weights
are squared vector norms, which favors high-value candidates. Classic
single-supervision baselines and a fixed full/weak split are provided for
comparison.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .datamodel import FULL, WEAK, CostModel, Dataset, LabeledPools
from .errors import SelectionInputError
from .learner import TwoHeadModel, embed
from .valuation import MARGIN, uncertainty_batch

BASELINE_STRATEGIES = ("random", "margin", "maxconf", "entropy", "coreset")


@dataclass(frozen=True)
class Candidate:
    """One possible annotation: an instance at one supervision level.

    ``vector`` is the instance's unit-norm embedding scaled by the vcr, so
    its length equals the vcr.
    """

    instance_id: int
    level: str
    vcr: float
    vector: np.ndarray
    cost: float


@dataclass(frozen=True)
class TraceStep:
    """One selection decision, enough to replay or audit the batch."""

    step: int
    instance_id: int
    level: str
    score: float  # vcr for vcr-driven strategies, selection score otherwise
    probability: float
    remaining_budget: float


@dataclass(frozen=True)
class SelectionBatch:
    full_ids: frozenset[int] = field(default_factory=frozenset)
    weak_ids: frozenset[int] = field(default_factory=frozenset)
    spent: float = 0.0
    trace: tuple[TraceStep, ...] = ()

    def __post_init__(self) -> None:
        if self.full_ids & self.weak_ids:
            raise SelectionInputError("an instance cannot get both annotation levels")


def write_trace_csv(batch: SelectionBatch, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "instance_id", "level", "vcr", "probability", "remaining_budget"]
        )
        for t in batch.trace:
            writer.writerow([
                t.step, t.instance_id, t.level,
                repr(float(t.score)), repr(float(t.probability)),
                repr(float(t.remaining_budget)),
            ])


def _candidate_arrays(candidates):
    ids = np.array([c.instance_id for c in candidates], dtype=int)
    levels = np.array([c.level for c in candidates])
    vcrs = np.array([c.vcr for c in candidates], dtype=float)
    costs = np.array([c.cost for c in candidates], dtype=float)
    vectors = np.stack([np.asarray(c.vector, dtype=float) for c in candidates])
    if np.isnan(vectors).any():
        raise SelectionInputError("candidate vectors contain NaN")
    return ids, levels, vcrs, costs, vectors


def _finish(ids, levels, picked, spent, trace) -> SelectionBatch:
    full_ids = frozenset(int(ids[i]) for i in picked if levels[i] == FULL)
    weak_ids = frozenset(int(ids[i]) for i in picked if levels[i] == WEAK)
    return SelectionBatch(full_ids, weak_ids, spent, tuple(trace))


def select_iso(candidates, budget: float, rng: np.random.Generator) -> SelectionBatch:
    """Sequential distance-squared sampling over candidate vectors.

    Each draw considers affordable candidates of still-unselected
    instances, weighted by squared distance to the nearest already-chosen
    vector (squared norm on the first draw). Choosing one level removes
    the instance's sibling candidate. When every weight is zero
    (duplicate vectors) the draw falls back to uniform. Stops once no
    candidate fits in the remaining budget; an empty result is valid.
    """
    if not candidates:
        return SelectionBatch()
    ids, levels, vcrs, costs, vectors = _candidate_arrays(candidates)

    remaining = float(budget)
    alive = np.ones(len(ids), dtype=bool)
    min_sq = np.einsum("ij,ij->i", vectors, vectors)  # first draw: distance to origin
    have_selection = False
    picked: list[int] = []
    trace: list[TraceStep] = []

    while True:
        eligible = np.flatnonzero(alive & (costs <= remaining))
        if eligible.size == 0:
            break
        weights = min_sq[eligible]
        total = weights.sum()
        if total > 0.0:
            cum = np.cumsum(weights)
            pos = int(np.searchsorted(cum, rng.random() * total, side="right"))
            pos = min(pos, eligible.size - 1)
            probability = float(weights[pos] / total)
        else:
            pos = int(rng.integers(eligible.size))
            probability = 1.0 / eligible.size
        chosen = int(eligible[pos])

        remaining -= costs[chosen]
        picked.append(chosen)
        trace.append(TraceStep(
            step=len(picked), instance_id=int(ids[chosen]), level=str(levels[chosen]),
            score=float(vcrs[chosen]), probability=probability,
            remaining_budget=remaining,
        ))
        alive &= ids != ids[chosen]  # removes the sibling level too

        diff = vectors - vectors[chosen]
        sq = np.einsum("ij,ij->i", diff, diff)
        # The origin anchor only shapes the first draw; afterwards distances
        # are measured against actually selected vectors.
        min_sq = sq if not have_selection else np.minimum(min_sq, sq)
        have_selection = True

    return _finish(ids, levels, picked, float(budget) - remaining, trace)


def select_greedy_vcr(candidates, budget: float) -> SelectionBatch:
    """Deterministic scan in descending vcr order, no diversity.

    Ties break by instance id ascending, then full before weak. Each
    affordable candidate of a still-unselected instance is taken.
    """
    if not candidates:
        return SelectionBatch()
    ids, levels, vcrs, costs, _ = _candidate_arrays(candidates)

    order = sorted(
        range(len(ids)),
        key=lambda i: (-vcrs[i], ids[i], 0 if levels[i] == FULL else 1),
    )
    remaining = float(budget)
    taken_instances: set[int] = set()
    picked: list[int] = []
    trace: list[TraceStep] = []
    for i in order:
        if ids[i] in taken_instances or costs[i] > remaining:
            continue
        remaining -= costs[i]
        taken_instances.add(int(ids[i]))
        picked.append(i)
        trace.append(TraceStep(
            step=len(picked), instance_id=int(ids[i]), level=str(levels[i]),
            score=float(vcrs[i]), probability=1.0, remaining_budget=remaining,
        ))
    return _finish(ids, levels, picked, float(budget) - remaining, trace)


def _top_uncertain(ids: np.ndarray, scores: np.ndarray, n: int) -> list[int]:
    # Descending score, ties by ascending id; lexsort orders by last key first.
    order = np.lexsort((ids, -scores))
    return [int(i) for i in ids[order[:n]]]


def farthest_first(
    pool_emb: np.ndarray, reference_emb: np.ndarray, n: int
) -> list[int]:
    """Greedy k-center selection: indices into ``pool_emb``.

    Each step takes the pool point with the largest distance to its
    nearest reference or previously selected point (ties to the lowest
    index). With no reference points the first pick is index 0.
    """
    if reference_emb.shape[0] > 0:
        diff = pool_emb[:, None, :] - reference_emb[None, :, :]
        min_dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
    else:
        min_dist = np.full(pool_emb.shape[0], np.inf)
    chosen: list[int] = []
    for _ in range(min(n, pool_emb.shape[0])):
        idx = int(np.argmax(min_dist))
        chosen.append(idx)
        diff = pool_emb - pool_emb[idx]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        min_dist = np.minimum(min_dist, dist)
        # Chosen points would tie at distance 0 when embeddings collapse;
        # bar them so every pick is a distinct index.
        min_dist[idx] = -np.inf
    return chosen


def select_baseline(
    strategy: str,
    dataset: Dataset,
    pools: LabeledPools,
    model: TwoHeadModel,
    budget: float,
    cost: CostModel,
    rng: np.random.Generator,
) -> SelectionBatch:
    """Single-supervision baselines: every pick is a full annotation.

    Buys n = floor(budget / cost_full) instances (capped by the pool):
    uniformly at random, by one of the three uncertainty measures on the
    exact-class head, or by farthest-first traversal in embedding space
    seeded from the labeled (full plus weak) instances.
    """
    if strategy not in BASELINE_STRATEGIES:
        raise SelectionInputError(f"unknown baseline strategy {strategy!r}")
    unlabeled = np.array(sorted(pools.unlabeled), dtype=int)
    n = min(int(budget // cost.cost_full), unlabeled.size)
    if n == 0:
        return SelectionBatch()

    if strategy == "random":
        chosen = [int(i) for i in rng.choice(unlabeled, size=n, replace=False)]
        trace = [
            TraceStep(s + 1, inst, FULL, 0.0, 1.0 / (unlabeled.size - s),
                      budget - (s + 1) * cost.cost_full)
            for s, inst in enumerate(chosen)
        ]
    elif strategy == "coreset":
        x_u, _, _ = dataset.gather(unlabeled)
        labeled = sorted(pools.full | pools.weak)
        x_l, _, _ = dataset.gather(labeled)
        emb_u = np.atleast_2d(embed(model, x_u))
        emb_l = np.atleast_2d(embed(model, x_l)) if labeled else np.empty((0, model.hidden_dim))
        picks = farthest_first(emb_u, emb_l, n)
        chosen = [int(unlabeled[i]) for i in picks]
        trace = [
            TraceStep(s + 1, inst, FULL, 0.0, 1.0,
                      budget - (s + 1) * cost.cost_full)
            for s, inst in enumerate(chosen)
        ]
    else:
        x_u, _, _ = dataset.gather(unlabeled)
        scores = uncertainty_batch(model, x_u, FULL, strategy)
        chosen = _top_uncertain(unlabeled, scores, n)
        by_id = dict(zip(unlabeled.tolist(), scores.tolist()))
        trace = [
            TraceStep(s + 1, inst, FULL, by_id[inst], 1.0,
                      budget - (s + 1) * cost.cost_full)
            for s, inst in enumerate(chosen)
        ]
    return SelectionBatch(
        full_ids=frozenset(chosen),
        spent=len(chosen) * cost.cost_full,
        trace=tuple(trace),
    )


def select_fixed_ratio(
    full_fraction: float,
    dataset: Dataset,
    pools: LabeledPools,
    model: TwoHeadModel,
    budget: float,
    cost: CostModel,
    rng: np.random.Generator,
) -> SelectionBatch:
    """Constant budget split between levels, margin sampling within each.

    Spends ``full_fraction`` of the budget on full annotations chosen by
    exact-class margin, then fills the remainder with weak annotations
    chosen by superclass margin over the instances left.
    """
    if not 0.0 <= full_fraction <= 1.0:
        raise SelectionInputError("full_fraction must lie in [0, 1]")
    unlabeled = np.array(sorted(pools.unlabeled), dtype=int)
    n_full = min(int(full_fraction * budget // cost.cost_full), unlabeled.size)
    if n_full > 0:
        x_u, _, _ = dataset.gather(unlabeled)
        scores = uncertainty_batch(model, x_u, FULL, MARGIN)
        full_chosen = _top_uncertain(unlabeled, scores, n_full)
    else:
        full_chosen = []

    rest = np.array(sorted(set(unlabeled.tolist()) - set(full_chosen)), dtype=int)
    n_weak = min(int((budget - n_full * cost.cost_full) // cost.cost_weak), rest.size)
    if n_weak > 0:
        x_r, _, _ = dataset.gather(rest)
        scores = uncertainty_batch(model, x_r, WEAK, MARGIN)
        weak_chosen = _top_uncertain(rest, scores, n_weak)
    else:
        weak_chosen = []

    spent = 0.0
    trace = []
    for s, inst in enumerate(full_chosen):
        spent += cost.cost_full
        trace.append(TraceStep(s + 1, inst, FULL, 0.0, 1.0, budget - spent))
    for s, inst in enumerate(weak_chosen):
        spent += cost.cost_weak
        trace.append(TraceStep(len(full_chosen) + s + 1, inst, WEAK, 0.0, 1.0,
                               budget - spent))
    return SelectionBatch(
        full_ids=frozenset(full_chosen),
        weak_ids=frozenset(weak_chosen),
        spent=spent,
        trace=tuple(trace),
    )
