import csv

import numpy as np
import pytest

from isoal.datamodel import (
    FULL,
    WEAK,
    ClassHierarchy,
    CostModel,
    Dataset,
    LabeledPools,
)
from isoal.errors import SelectionInputError
from isoal.learner import TrainConfig, initialize_model
from isoal.selection import (
    Candidate,
    SelectionBatch,
    TraceStep,
    farthest_first,
    select_baseline,
    select_fixed_ratio,
    select_greedy_vcr,
    select_iso,
    write_trace_csv,
)
from isoal.valuation import uncertainty_batch

from oracles import batch_outcome, exact_iso_distribution, total_variation


def cand(instance_id, level, vcr, vector, cost):
    return Candidate(instance_id, level, vcr, np.asarray(vector, dtype=float), cost)


def pair_candidates(spec):
    """spec: list of (id, vcr_full, vcr_weak, direction) -> candidate list."""
    out = []
    for instance_id, v_f, v_w, direction in spec:
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        out.append(cand(instance_id, FULL, v_f, v_f * d, 1.0))
        out.append(cand(instance_id, WEAK, v_w, v_w * d, 0.5))
    return out


class TestGreedyVcr:
    def test_hand_simulated_scan(self):
        # a:full (0.9) is taken first, b:full (0.2) loses to b:weak (0.4).
        candidates = [
            cand(0, FULL, 0.9, [0.9, 0.0], 1.0),
            cand(0, WEAK, 0.5, [0.5, 0.0], 0.5),
            cand(1, FULL, 0.2, [0.0, 0.2], 1.0),
            cand(1, WEAK, 0.4, [0.0, 0.4], 0.5),
        ]
        batch = select_greedy_vcr(candidates, 1.5)
        assert batch.full_ids == {0}
        assert batch.weak_ids == {1}
        assert batch.spent == 1.5

    def test_budget_below_min_cost_is_empty(self):
        candidates = [cand(0, FULL, 0.9, [0.9], 1.0)]
        batch = select_greedy_vcr(candidates, 0.5)
        assert not batch.full_ids and not batch.weak_ids and batch.spent == 0.0

    def test_tie_break_id_then_level(self):
        candidates = [
            cand(2, WEAK, 0.5, [0.5], 0.5),
            cand(2, FULL, 0.5, [0.5], 1.0),
            cand(1, WEAK, 0.5, [0.5], 0.5),
            cand(1, FULL, 0.5, [0.5], 1.0),
        ]
        batch = select_greedy_vcr(candidates, 1.5)
        # id 1 first at full; id 2 only affordable at weak afterwards.
        assert batch.full_ids == {1}
        assert batch.weak_ids == {2}
        picks = [(t.instance_id, t.level) for t in batch.trace]
        assert picks == [(1, FULL), (2, WEAK)]

    def test_vcr_scaling_leaves_output_identical(self):
        spec = [(0, 0.9, 0.3, [1, 0]), (1, 0.4, 0.8, [0, 1]), (2, 0.6, 0.1, [1, 1])]
        a = select_greedy_vcr(pair_candidates(spec), 2.0)
        scaled = [
            Candidate(c.instance_id, c.level, 4.0 * c.vcr, 4.0 * c.vector, c.cost)
            for c in pair_candidates(spec)
        ]
        b = select_greedy_vcr(scaled, 2.0)
        assert (a.full_ids, a.weak_ids, a.spent) == (b.full_ids, b.weak_ids, b.spent)


class TestSelectIso:
    MICRO = [
        (0, FULL, 1.0, [0.8, 0.0]),
        (0, WEAK, 0.5, [0.3, 0.0]),
        (1, FULL, 1.0, [0.0, 0.6]),
        (1, WEAK, 0.5, [0.0, 0.2]),
    ]

    def micro_candidates(self):
        return [cand(i, lvl, float(np.linalg.norm(v)), v, c)
                for i, lvl, c, v in self.MICRO]

    def test_empirical_distribution_matches_enumeration(self):
        exact = exact_iso_distribution(self.MICRO, 1.5)
        counts: dict = {}
        runs = 20000
        rng = np.random.default_rng(2024)
        candidates = self.micro_candidates()
        for _ in range(runs):
            key = batch_outcome(select_iso(candidates, 1.5, rng))
            counts[key] = counts.get(key, 0) + 1
        empirical = {k: v / runs for k, v in counts.items()}
        assert total_variation(exact, empirical) < 0.02

    def test_first_pick_proportional_to_squared_norm(self):
        candidates = [
            cand(0, FULL, 1.0, [1.0, 0.0], 1.0),
            cand(1, FULL, 2.0, [0.0, 2.0], 1.0),
        ]
        rng = np.random.default_rng(7)
        wins = sum(
            1 for _ in range(20000)
            if select_iso(candidates, 1.0, rng).full_ids == {1}
        )
        # P(pick id 1 first) = 4 / 5.
        assert abs(wins / 20000 - 0.8) < 0.01

    def test_sibling_exclusion_and_budget(self):
        rng = np.random.default_rng(11)
        for trial in range(60):
            spec = [
                (i, float(rng.random()), float(rng.random()),
                 rng.normal(size=3))
                for i in range(int(rng.integers(2, 7)))
            ]
            budget = float(rng.uniform(0.5, 4.0))
            batch = select_iso(pair_candidates(spec), budget, rng)
            assert not batch.full_ids & batch.weak_ids
            assert batch.spent <= budget + 1e-12
            assert batch.spent == pytest.approx(
                len(batch.full_ids) * 1.0 + len(batch.weak_ids) * 0.5)

    def test_runs_until_no_candidate_is_affordable(self):
        # Budget 2.0 with costs {1, 0.5}: at least two instances get picked.
        spec = [(i, 0.5, 0.5, [1.0, float(i)]) for i in range(4)]
        batch = select_iso(pair_candidates(spec), 2.0, np.random.default_rng(0))
        assert batch.spent >= 1.5
        remaining = 2.0 - batch.spent
        assert remaining < 0.5

    def test_zero_weights_fall_back_to_uniform(self):
        candidates = [
            cand(0, FULL, 0.0, [0.0, 0.0], 1.0),
            cand(1, FULL, 0.0, [0.0, 0.0], 1.0),
        ]
        batch = select_iso(candidates, 2.0, np.random.default_rng(3))
        assert batch.full_ids == {0, 1}
        assert batch.trace[0].probability == 0.5
        assert batch.trace[1].probability == 1.0

    def test_identical_nonzero_vectors_use_uniform_after_first(self):
        candidates = [
            cand(i, FULL, 1.0, [1.0, 0.0], 1.0) for i in range(3)
        ]
        batch = select_iso(candidates, 3.0, np.random.default_rng(3))
        assert batch.full_ids == {0, 1, 2}
        assert batch.trace[1].probability == 0.5

    def test_nan_vector_rejected(self):
        candidates = [cand(0, FULL, 1.0, [np.nan, 0.0], 1.0)]
        with pytest.raises(SelectionInputError):
            select_iso(candidates, 1.0, np.random.default_rng(0))

    def test_empty_candidates_valid(self):
        batch = select_iso([], 5.0, np.random.default_rng(0))
        assert batch == SelectionBatch()

    def test_unaffordable_candidates_skipped(self):
        candidates = [
            cand(0, FULL, 5.0, [5.0, 0.0], 10.0),
            cand(1, WEAK, 0.1, [0.0, 0.1], 0.5),
        ]
        batch = select_iso(candidates, 1.0, np.random.default_rng(1))
        assert batch.full_ids == frozenset()
        assert batch.weak_ids == {1}

    def test_trace_budget_decreases_by_cost(self):
        spec = [(i, 0.5, 0.25, np.eye(4)[i % 4]) for i in range(5)]
        batch = select_iso(pair_candidates(spec), 3.0, np.random.default_rng(4))
        remaining = 3.0
        for step, t in enumerate(batch.trace, start=1):
            assert t.step == step
            cost = 1.0 if t.level == FULL else 0.5
            remaining -= cost
            assert t.remaining_budget == pytest.approx(remaining)
            assert 0.0 < t.probability <= 1.0

    def test_vector_scaling_preserves_seeded_outcome(self):
        spec = [(0, 0.75, 0.5, [1, 0]), (1, 0.25, 1.0, [0, 1]),
                (2, 0.5, 0.5, [1, 1])]
        base = pair_candidates(spec)
        scaled = [Candidate(c.instance_id, c.level, c.vcr,
                            4.0 * c.vector, c.cost) for c in base]
        a = select_iso(base, 2.0, np.random.default_rng(12))
        b = select_iso(scaled, 2.0, np.random.default_rng(12))
        assert (a.full_ids, a.weak_ids) == (b.full_ids, b.weak_ids)


class TestFarthestFirst:
    def test_one_dimensional_oracle(self):
        pool = np.array([[0.1], [0.9], [0.5]])
        ref = np.array([[0.0]])
        assert farthest_first(pool, ref, 2) == [1, 2]
        assert farthest_first(pool, ref, 3) == [1, 2, 0]

    def test_no_reference_starts_at_index_zero(self):
        pool = np.array([[0.0], [10.0]])
        assert farthest_first(pool, np.zeros((0, 1)), 2) == [0, 1]

    def test_ties_go_to_lowest_index(self):
        pool = np.array([[1.0], [-1.0]])
        ref = np.array([[0.0]])
        assert farthest_first(pool, ref, 1) == [0]


def build_fixture(n=30, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    hierarchy = ClassHierarchy(4, 2, (0, 0, 1, 1))
    exact = np.array([i % 4 for i in range(n)])
    dataset = Dataset(
        features=rng.normal(size=(n, dim)),
        exact_classes=exact,
        superclasses=np.array([hierarchy.parent_of(c) for c in exact]),
        hierarchy=hierarchy,
        train_ids=tuple(range(n - 4)),
        test_ids=tuple(range(n - 4, n)),
    )
    pools = LabeledPools(
        unlabeled=frozenset(range(n - 12)),
        full=frozenset(range(n - 12, n - 8)),
        weak=frozenset(range(n - 8, n - 4)),
        test=frozenset(dataset.test_ids),
    )
    model = initialize_model(dim, 4, 2, TrainConfig(hidden_dim=6),
                             np.random.default_rng(1))
    cost = CostModel(1.0, 0.5, 6.0, 2)
    return dataset, pools, model, cost


class TestBaselines:
    def test_random_counts_and_membership(self):
        dataset, pools, model, cost = build_fixture()
        batch = select_baseline("random", dataset, pools, model, 6.0, cost,
                                np.random.default_rng(5))
        assert len(batch.full_ids) == 6
        assert batch.weak_ids == frozenset()
        assert batch.full_ids <= pools.unlabeled
        assert batch.spent == 6.0

    def test_random_reproducible(self):
        dataset, pools, model, cost = build_fixture()
        a = select_baseline("random", dataset, pools, model, 6.0, cost,
                            np.random.default_rng(9))
        b = select_baseline("random", dataset, pools, model, 6.0, cost,
                            np.random.default_rng(9))
        assert a.full_ids == b.full_ids

    @pytest.mark.parametrize("strategy", ["margin", "maxconf", "entropy"])
    def test_uncertainty_baselines_take_top_n(self, strategy):
        dataset, pools, model, cost = build_fixture()
        batch = select_baseline(strategy, dataset, pools, model, 4.0, cost,
                                np.random.default_rng(0))
        unlabeled = sorted(pools.unlabeled)
        x, _, _ = dataset.gather(unlabeled)
        scores = uncertainty_batch(model, x, FULL, strategy)
        order = sorted(range(len(unlabeled)), key=lambda i: (-scores[i], unlabeled[i]))
        expected = {unlabeled[i] for i in order[:4]}
        assert batch.full_ids == expected

    def test_coreset_picks_from_unlabeled(self):
        dataset, pools, model, cost = build_fixture()
        batch = select_baseline("coreset", dataset, pools, model, 5.0, cost,
                                np.random.default_rng(0))
        assert len(batch.full_ids) == 5
        assert batch.full_ids <= pools.unlabeled

    def test_budget_below_cost_gives_empty_batch(self):
        dataset, pools, model, cost = build_fixture()
        batch = select_baseline("random", dataset, pools, model, 0.5, cost,
                                np.random.default_rng(0))
        assert batch == SelectionBatch()

    def test_pool_exhaustion_caps_n(self):
        dataset, pools, model, cost = build_fixture()
        batch = select_baseline("random", dataset, pools, model, 1000.0, cost,
                                np.random.default_rng(0))
        assert batch.full_ids == pools.unlabeled

    def test_unknown_strategy_rejected(self):
        dataset, pools, model, cost = build_fixture()
        with pytest.raises(SelectionInputError):
            select_baseline("badge", dataset, pools, model, 4.0, cost,
                            np.random.default_rng(0))


class TestFixedRatio:
    def test_budget_split_arithmetic(self):
        dataset, pools, model, cost = build_fixture(n=60)
        batch = select_fixed_ratio(0.5, dataset, pools, model, 10.0, cost,
                                   np.random.default_rng(0))
        assert len(batch.full_ids) == 5
        assert len(batch.weak_ids) == 10
        assert batch.spent == 10.0
        assert not batch.full_ids & batch.weak_ids

    def test_all_full_equals_margin_baseline(self):
        dataset, pools, model, cost = build_fixture()
        ratio = select_fixed_ratio(1.0, dataset, pools, model, 4.0, cost,
                                   np.random.default_rng(0))
        margin = select_baseline("margin", dataset, pools, model, 4.0, cost,
                                 np.random.default_rng(0))
        assert ratio.full_ids == margin.full_ids
        assert ratio.weak_ids == margin.weak_ids == frozenset()
        assert ratio.spent == margin.spent

    def test_all_weak(self):
        dataset, pools, model, cost = build_fixture()
        batch = select_fixed_ratio(0.0, dataset, pools, model, 4.0, cost,
                                   np.random.default_rng(0))
        assert batch.full_ids == frozenset()
        assert len(batch.weak_ids) == 8

    def test_fraction_out_of_range_rejected(self):
        dataset, pools, model, cost = build_fixture()
        with pytest.raises(SelectionInputError):
            select_fixed_ratio(1.5, dataset, pools, model, 4.0, cost,
                               np.random.default_rng(0))


class TestBatchAndTrace:
    def test_overlapping_levels_rejected(self):
        with pytest.raises(SelectionInputError):
            SelectionBatch(full_ids=frozenset({1}), weak_ids=frozenset({1}))

    def test_trace_csv_header_and_values(self, tmp_path):
        batch = SelectionBatch(
            full_ids=frozenset({3}),
            weak_ids=frozenset(),
            spent=1.0,
            trace=(TraceStep(1, 3, FULL, 0.25, 0.75, 4.0),),
        )
        path = tmp_path / "trace.csv"
        write_trace_csv(batch, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "instance_id", "level", "vcr",
                           "probability", "remaining_budget"]
        assert rows[1] == ["1", "3", "full", "0.25", "0.75", "4.0"]
