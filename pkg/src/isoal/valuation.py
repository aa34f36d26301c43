"""Per-round valuation: expected model improvement per supervision level,
per-instance uncertainty with percentile normalization, and the resulting
value-to-cost ratios.

Improvement is estimated by incremental-subset retraining: the labeled pool
of one level is split into K subsets and models are retrained on growing
prefixes while the other level's pool stays fixed. The per-step accuracy
gains are combined with weights 1..K-1 (recent steps count more) and scaled
to a per-instance gain. The whole procedure is repeated over independent
seeds and averaged.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import csv

import numpy as np
from scipy.stats import rankdata

from .datamodel import FULL, WEAK
from .errors import ConfigError, EstimationError, MeasureError
from .learner import TrainConfig, TwoHeadModel, _predict, evaluate_accuracy, train_two_stage

MARGIN = "margin"
MAXCONF = "maxconf"
ENTROPY = "entropy"
MEASURES = (MARGIN, MAXCONF, ENTROPY)

# Floor applied to negative/zero improvement estimates: keeps VCRs (and the
# candidate vectors built from them) non-negative while conveying near-zero
# value, so selection never crashes on a degraded model.
IMPROVEMENT_FLOOR = 1e-6


@dataclass(frozen=True)
class ImprovementEstimate:
    """Seed-averaged improvements plus the raw accuracy curves for audit."""

    M_full: float
    M_weak: float
    full_curves: tuple[tuple[float, ...], ...]  # num_seeds x K accuracies
    weak_curves: tuple[tuple[float, ...], ...]

    def validate(self) -> None:
        for curves in (self.full_curves, self.weak_curves):
            for curve in curves:
                if len(curve) != len(curves[0]):
                    raise ConfigError("accuracy curves must share a length of K")
                if any(not 0.0 <= m <= 1.0 for m in curve):
                    raise ConfigError("accuracies must lie in [0, 1]")


def improvement_from_curve(accuracies, pool_size: int) -> float:
    """Weighted per-instance gain from one incremental accuracy curve.

    With curve m_1..m_K the result is
    [sum_k k * (m_{k+1} - m_k) / sum_k k] * (K / pool_size).
    """
    m = list(accuracies)
    k_max = len(m) - 1
    if k_max < 1:
        raise ConfigError("curve needs at least two accuracy values")
    weighted = sum((k + 1) * (m[k + 1] - m[k]) for k in range(k_max))
    return weighted / sum(range(1, k_max + 1)) * (len(m) / pool_size)


def _prefix_bounds(n: int, k_subsets: int) -> list[int]:
    # Remainder instances go to the first subsets, so sizes differ by <= 1.
    q, r = divmod(n, k_subsets)
    sizes = [q + 1] * r + [q] * (k_subsets - r)
    bounds = []
    total = 0
    for s in sizes:
        total += s
        bounds.append(total)
    return bounds


def estimate_improvement(
    full_data: tuple[np.ndarray, np.ndarray],
    weak_data: tuple[np.ndarray, np.ndarray],
    validation: tuple[np.ndarray, np.ndarray, np.ndarray],
    num_classes: int,
    num_superclasses: int,
    k_subsets: int,
    num_seeds: int,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
    max_workers: int = 1,
) -> ImprovementEstimate:
    """Estimate per-instance accuracy gain of each supervision level.

    ``validation`` is (features, exact labels, superclass labels); the full
    curve is scored with exact-class accuracy, the weak curve with
    superclass accuracy, so each level is measured on its own prediction
    task. The 2 * K * num_seeds retrainings are independent; with
    ``max_workers`` > 1 they run on a thread pool, and results are reduced
    in a fixed (seed, level, k) order either way.
    """
    if k_subsets < 2:
        raise ConfigError("k_subsets must be at least 2")
    full_x, full_y = full_data
    weak_x, weak_y = weak_data
    if full_x.shape[0] < k_subsets or weak_x.shape[0] < k_subsets:
        raise EstimationError(
            f"both pools need at least k_subsets={k_subsets} instances "
            f"(have {full_x.shape[0]} full, {weak_x.shape[0]} weak)"
        )
    val_x, val_exact, val_super = validation
    if val_x.shape[0] == 0:
        raise EstimationError("validation set is empty")

    tasks = []  # (level, train args...) in fixed (seed, level, k) order
    for seed_rng in rng.spawn(num_seeds):
        full_order = seed_rng.permutation(full_x.shape[0])
        weak_order = seed_rng.permutation(weak_x.shape[0])
        streams = iter(seed_rng.spawn(2 * k_subsets))
        full_bounds = _prefix_bounds(full_x.shape[0], k_subsets)
        weak_bounds = _prefix_bounds(weak_x.shape[0], k_subsets)
        for bound in full_bounds:
            sel = full_order[:bound]
            tasks.append((FULL, (full_x[sel], full_y[sel]), (weak_x, weak_y), next(streams)))
        for bound in weak_bounds:
            sel = weak_order[:bound]
            tasks.append((WEAK, (full_x, full_y), (weak_x[sel], weak_y[sel]), next(streams)))

    def run(task):
        level, full_subset, weak_subset, stream = task
        model = train_two_stage(
            train_cfg, full_subset, weak_subset,
            num_classes, num_superclasses, rng=stream,
        )
        if level == FULL:
            return evaluate_accuracy(model, (val_x, val_exact), FULL)
        return evaluate_accuracy(model, (val_x, val_super), WEAK)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            accuracies = list(pool.map(run, tasks))
    else:
        accuracies = [run(t) for t in tasks]

    full_curves, weak_curves, m_full, m_weak = [], [], [], []
    for s in range(num_seeds):
        base = s * 2 * k_subsets
        f_curve = tuple(accuracies[base:base + k_subsets])
        w_curve = tuple(accuracies[base + k_subsets:base + 2 * k_subsets])
        full_curves.append(f_curve)
        weak_curves.append(w_curve)
        m_full.append(improvement_from_curve(f_curve, full_x.shape[0]))
        m_weak.append(improvement_from_curve(w_curve, weak_x.shape[0]))

    estimate = ImprovementEstimate(
        M_full=float(np.mean(m_full)),
        M_weak=float(np.mean(m_weak)),
        full_curves=tuple(full_curves),
        weak_curves=tuple(weak_curves),
    )
    estimate.validate()
    return estimate


def _measure_probs(probs: np.ndarray, measure: str) -> np.ndarray:
    """Uncertainty of each probability row; larger means more uncertain."""
    if measure == MARGIN:
        if probs.shape[1] < 2:
            raise MeasureError("margin needs at least two classes")
        top2 = np.sort(probs, axis=1)[:, -2:]
        return 1.0 - (top2[:, 1] - top2[:, 0])
    if measure == MAXCONF:
        return 1.0 - probs.max(axis=1)
    if measure == ENTROPY:
        return -np.sum(np.where(probs > 0.0, probs * np.log(probs), 0.0), axis=1)
    raise MeasureError(f"unknown uncertainty measure {measure!r}")


def uncertainty_raw(
    model: TwoHeadModel, x: np.ndarray, level: str, measure: str = MARGIN
) -> float:
    """Raw uncertainty of one instance under the head matching ``level``."""
    probs = _predict(model, np.atleast_2d(np.asarray(x, dtype=float)), level)
    return float(_measure_probs(probs, measure)[0])


def uncertainty_batch(
    model: TwoHeadModel, x: np.ndarray, level: str, measure: str = MARGIN
) -> np.ndarray:
    """Vectorized ``uncertainty_raw`` over the rows of ``x``."""
    probs = _predict(model, x, level)
    return _measure_probs(np.atleast_2d(probs), measure)


def percentile_normalize(raw) -> np.ndarray:
    """Rank-based rescaling of raw uncertainties into [0, 1].

    The maximum maps to 1, the minimum to 0, and tied values receive the
    mean of their ranks; a single-element list maps to 0.5. Depends only
    on the ordering of the values, not their scale.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise ConfigError("cannot normalize an empty list")
    if raw.size == 1:
        return np.array([0.5])
    return (rankdata(raw, method="average") - 1.0) / (raw.size - 1.0)


def compute_vcr(improvement: float, u_scores, annotation_cost: float) -> np.ndarray:
    """Value-to-cost ratios: clamped improvement times score over cost."""
    if annotation_cost <= 0:
        raise ConfigError("annotation cost must be positive")
    value = max(improvement, IMPROVEMENT_FLOOR)
    return value * np.asarray(u_scores, dtype=float) / annotation_cost


@dataclass(frozen=True)
class ValuationReport:
    """Per-instance valuation of one round, aligned with ``ids``."""

    ids: tuple[int, ...]
    u_full_raw: np.ndarray
    u_weak_raw: np.ndarray
    u_full: np.ndarray
    u_weak: np.ndarray
    v_full: np.ndarray
    v_weak: np.ndarray
    improvement: ImprovementEstimate
    cost_full: float
    cost_weak: float

    def validate(self) -> None:
        n = len(self.ids)
        for arr in (self.u_full_raw, self.u_weak_raw, self.u_full,
                    self.u_weak, self.v_full, self.v_weak):
            if len(arr) != n:
                raise ConfigError("report arrays must align with ids")
        for scores in (self.u_full, self.u_weak):
            if n and (scores.min() < 0.0 or scores.max() > 1.0):
                raise ConfigError("percentile scores must lie in [0, 1]")
        expect_f = compute_vcr(self.improvement.M_full, self.u_full, self.cost_full)
        expect_w = compute_vcr(self.improvement.M_weak, self.u_weak, self.cost_weak)
        if not (np.array_equal(expect_f, self.v_full)
                and np.array_equal(expect_w, self.v_weak)):
            raise ConfigError("VCR columns disagree with their definition")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["id", "u_full_raw", "u_weak_raw", "u_full", "u_weak", "v_full", "v_weak"]
            )
            for i, inst in enumerate(self.ids):
                writer.writerow([
                    inst,
                    repr(float(self.u_full_raw[i])), repr(float(self.u_weak_raw[i])),
                    repr(float(self.u_full[i])), repr(float(self.u_weak[i])),
                    repr(float(self.v_full[i])), repr(float(self.v_weak[i])),
                ])


def build_valuation_report(
    ids,
    u_full_raw,
    u_weak_raw,
    improvement: ImprovementEstimate,
    cost_full: float,
    cost_weak: float,
    force_uniform_scores: bool = False,
) -> ValuationReport:
    """Normalize raw uncertainties and attach VCRs for both levels.

    ``force_uniform_scores`` pins every percentile score to 1 so the VCR
    depends only on improvement and cost (the no-uncertainty variant).
    """
    u_full_raw = np.asarray(u_full_raw, dtype=float)
    u_weak_raw = np.asarray(u_weak_raw, dtype=float)
    if force_uniform_scores:
        u_full = np.ones_like(u_full_raw)
        u_weak = np.ones_like(u_weak_raw)
    else:
        u_full = percentile_normalize(u_full_raw)
        u_weak = percentile_normalize(u_weak_raw)
    report = ValuationReport(
        ids=tuple(int(i) for i in ids),
        u_full_raw=u_full_raw,
        u_weak_raw=u_weak_raw,
        u_full=u_full,
        u_weak=u_weak,
        v_full=compute_vcr(improvement.M_full, u_full, cost_full),
        v_weak=compute_vcr(improvement.M_weak, u_weak, cost_weak),
        improvement=improvement,
        cost_full=cost_full,
        cost_weak=cost_weak,
    )
    report.validate()
    return report
