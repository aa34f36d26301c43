"""Experiment driver: dataset generation, the round loop, strategy
dispatch, metric collection and result emission.

Every run starts from an equal random full/weak split in round 1; later
rounds dispatch on the configured strategy. Models are retrained from
scratch after every selection. All randomness derives from the experiment
seed, so identical configurations produce byte-identical results files.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .datamodel import (
    FULL,
    WEAK,
    CostModel,
    Dataset,
    ClassHierarchy,
    LabeledPools,
    initial_equal_sample,
    load_dataset_csv,
    move_to_pool,
    save_dataset_csv,
)
from .errors import CapacityError, ConfigError, EstimationError, GenerationError, IsoalError
from .learner import TrainConfig, evaluate_accuracy, embed, train_two_stage
from .selection import (
    BASELINE_STRATEGIES,
    Candidate,
    SelectionBatch,
    select_baseline,
    select_fixed_ratio,
    select_greedy_vcr,
    select_iso,
    write_trace_csv,
)
from .valuation import (
    IMPROVEMENT_FLOOR,
    MARGIN,
    MEASURES,
    ImprovementEstimate,
    build_valuation_report,
    estimate_improvement,
    uncertainty_batch,
)

logger = logging.getLogger(__name__)

ISO_STRATEGIES = ("iso", "iso_no_uncertainty", "iso_no_diversity")
STRATEGIES = ISO_STRATEGIES + BASELINE_STRATEGIES + ("fixed_ratio",)

THREADS_ENV_VAR = "ISO_AL_THREADS"

RESULTS_HEADER = [
    "strategy", "seed", "round", "test_accuracy",
    "n_full", "n_weak", "spent", "M_full", "M_weak",
]


def worker_count() -> int:
    """Worker cap from the environment; 1 means fully sequential."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SyntheticSpec:
    superclasses: int = 10
    children_per_superclass: int = 4
    n_per_class: int = 100
    dim: int = 32
    superclass_spread: float = 4.0
    class_spread: float = 1.0
    noise: float = 2.0
    seed: int = 0


@dataclass(frozen=True)
class CsvSpec:
    """Directory containing ``train.csv`` and ``test.csv``."""

    path: str


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str
    cost: CostModel
    train: TrainConfig = TrainConfig()
    dataset: SyntheticSpec | CsvSpec = SyntheticSpec()
    experiment_seeds: tuple[int, ...] = (0,)
    k_subsets: int = 5
    num_improvement_seeds: int = 3
    full_fraction: float = 0.6
    measure_full: str = MARGIN
    measure_weak: str = MARGIN
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        if not self.experiment_seeds:
            raise ConfigError("need at least one experiment seed")
        if self.k_subsets < 2:
            raise ConfigError("k_subsets must be at least 2")
        if self.num_improvement_seeds < 1:
            raise ConfigError("num_improvement_seeds must be positive")
        if not 0.0 <= self.full_fraction <= 1.0:
            raise ConfigError("full_fraction must lie in [0, 1]")
        if self.measure_full not in MEASURES or self.measure_weak not in MEASURES:
            raise ConfigError(f"uncertainty measures must be among {MEASURES}")

    @property
    def label(self) -> str:
        """Strategy name as written to results files and plot legends."""
        if self.strategy == "fixed_ratio":
            return f"fixed_ratio({self.full_fraction:g})"
        return self.strategy

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dataset"]["type"] = "synthetic" if isinstance(self.dataset, SyntheticSpec) else "csv"
        out["experiment_seeds"] = list(self.experiment_seeds)
        return out

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        data = dict(raw)
        cost = CostModel(**data.pop("cost"))
        train = TrainConfig(**data.pop("train", {}))
        ds_raw = dict(data.pop("dataset", {}))
        ds_type = ds_raw.pop("type", "synthetic")
        dataset = CsvSpec(**ds_raw) if ds_type == "csv" else SyntheticSpec(**ds_raw)
        seeds = tuple(data.pop("experiment_seeds", (0,)))
        return ExperimentConfig(
            cost=cost, train=train, dataset=dataset, experiment_seeds=seeds, **data
        )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    test_accuracy: float
    n_full: int
    n_weak: int
    spent: float
    M_full: float | None
    M_weak: float | None
    wall_time: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.test_accuracy <= 1.0:
            raise ConfigError("test accuracy must lie in [0, 1]")


@dataclass(frozen=True)
class SeedResult:
    seed: int
    records: tuple[RoundRecord, ...]
    error: str | None = None


@dataclass(frozen=True)
class StrategyResult:
    strategy: str
    seeds: tuple[SeedResult, ...]


def generate_synthetic(
    superclasses: int,
    children_per_superclass: int,
    n_per_class: int,
    dim: int,
    superclass_spread: float,
    class_spread: float,
    noise: float,
    seed: int,
) -> Dataset:
    """Gaussian class blobs nested inside superclass blobs.

    Superclass centers are drawn at scale ``superclass_spread``, each child
    class center at scale ``class_spread`` around its superclass center,
    and instances at scale ``noise`` around their class center. The split
    is 80/20 stratified per class; train rows come first in id order.
    """
    if min(superclasses, children_per_superclass, n_per_class, dim) <= 0:
        raise GenerationError("all counts must be positive")
    if class_spread <= 0 or superclass_spread <= 0 or noise < 0:
        raise GenerationError("spreads must be positive and noise non-negative")
    if class_spread >= superclass_spread:
        raise GenerationError("class_spread must be smaller than superclass_spread")
    n_test_per_class = int(0.2 * n_per_class)
    n_train_per_class = n_per_class - n_test_per_class
    if n_test_per_class < 1 or n_train_per_class < 1:
        raise GenerationError(
            f"cannot split {n_per_class} instances per class 80/20 with both sides nonempty"
        )

    rng = np.random.default_rng(seed)
    num_classes = superclasses * children_per_superclass
    super_centers = rng.normal(0.0, superclass_spread, size=(superclasses, dim))
    class_centers = np.repeat(super_centers, children_per_superclass, axis=0) \
        + rng.normal(0.0, class_spread, size=(num_classes, dim))

    features = np.empty((num_classes * n_per_class, dim))
    exact = np.empty(num_classes * n_per_class, dtype=int)
    for c in range(num_classes):
        rows = slice(c * n_per_class, (c + 1) * n_per_class)
        features[rows] = class_centers[c] + rng.normal(0.0, noise, size=(n_per_class, dim))
        exact[rows] = c

    train_rows: list[np.ndarray] = []
    test_rows: list[np.ndarray] = []
    for c in range(num_classes):
        order = c * n_per_class + rng.permutation(n_per_class)
        train_rows.append(order[:n_train_per_class])
        test_rows.append(order[n_train_per_class:])
    reorder = np.concatenate(train_rows + test_rows)
    n_train = num_classes * n_train_per_class

    parent = tuple(c // children_per_superclass for c in range(num_classes))
    hierarchy = ClassHierarchy(num_classes, superclasses, parent)
    exact = exact[reorder]
    return Dataset(
        features=features[reorder],
        exact_classes=exact,
        superclasses=np.array([parent[c] for c in exact], dtype=int),
        hierarchy=hierarchy,
        train_ids=tuple(range(n_train)),
        test_ids=tuple(range(n_train, num_classes * n_per_class)),
    )


def save_dataset(dataset: Dataset, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_path, test_path = out / "train.csv", out / "test.csv"
    tr = np.array(dataset.train_ids, dtype=int)
    te = np.array(dataset.test_ids, dtype=int)
    save_dataset_csv(train_path, dataset.features[tr], dataset.exact_classes[tr],
                     dataset.superclasses[tr], ids=tr)
    save_dataset_csv(test_path, dataset.features[te], dataset.exact_classes[te],
                     dataset.superclasses[te], ids=te)
    return train_path, test_path


def load_dataset(spec: SyntheticSpec | CsvSpec) -> Dataset:
    if isinstance(spec, SyntheticSpec):
        return generate_synthetic(
            spec.superclasses, spec.children_per_superclass, spec.n_per_class,
            spec.dim, spec.superclass_spread, spec.class_spread, spec.noise, spec.seed,
        )
    base = Path(spec.path)
    return load_dataset_csv(base / "train.csv", base / "test.csv")


def _iso_round_batch(
    cfg: ExperimentConfig,
    dataset: Dataset,
    pools: LabeledPools,
    model,
    validation: tuple[np.ndarray, np.ndarray, np.ndarray],
    rng: np.random.Generator,
    workers: int,
    round_dir: Path | None,
    round_index: int,
) -> tuple[SelectionBatch, ImprovementEstimate]:
    if not pools.unlabeled:
        return SelectionBatch(), ImprovementEstimate(
            IMPROVEMENT_FLOOR, IMPROVEMENT_FLOOR, (), ())
    hierarchy = dataset.hierarchy
    full_x, full_y, _ = dataset.gather(pools.full)
    weak_x, _, weak_y = dataset.gather(pools.weak)
    try:
        improvement = estimate_improvement(
            (full_x, full_y), (weak_x, weak_y), validation,
            hierarchy.num_classes, hierarchy.num_superclasses,
            cfg.k_subsets, cfg.num_improvement_seeds, cfg.train, rng,
            max_workers=workers,
        )
    except EstimationError as exc:
        # Only reachable with adversarially tiny budgets; treat both levels
        # as near-zero value rather than aborting the whole seed.
        logger.warning("improvement estimation skipped: %s", exc)
        improvement = ImprovementEstimate(IMPROVEMENT_FLOOR, IMPROVEMENT_FLOOR, (), ())

    unlabeled = sorted(pools.unlabeled)
    x_u, _, _ = dataset.gather(unlabeled)
    report = build_valuation_report(
        unlabeled,
        uncertainty_batch(model, x_u, FULL, cfg.measure_full),
        uncertainty_batch(model, x_u, WEAK, cfg.measure_weak),
        improvement,
        cfg.cost.cost_full,
        cfg.cost.cost_weak,
        force_uniform_scores=cfg.strategy == "iso_no_uncertainty",
    )
    emb = np.atleast_2d(embed(model, x_u))
    candidates = []
    for i, inst in enumerate(unlabeled):
        candidates.append(Candidate(inst, FULL, float(report.v_full[i]),
                                    report.v_full[i] * emb[i], cfg.cost.cost_full))
        candidates.append(Candidate(inst, WEAK, float(report.v_weak[i]),
                                    report.v_weak[i] * emb[i], cfg.cost.cost_weak))

    if cfg.strategy == "iso_no_diversity":
        batch = select_greedy_vcr(candidates, cfg.cost.budget)
    else:
        batch = select_iso(candidates, cfg.cost.budget, rng)

    if round_dir is not None:
        report.write_csv(round_dir / f"round{round_index}_valuation.csv")
        write_trace_csv(batch, round_dir / f"round{round_index}_trace.csv")
    return batch, improvement


def _run_seed(
    cfg: ExperimentConfig, dataset: Dataset, seed: int, workers: int,
    round_dir: Path | None,
) -> tuple[RoundRecord, ...]:
    cost = cfg.cost
    rng = np.random.default_rng(seed)
    hierarchy = dataset.hierarchy

    n_val = int(cost.budget // cost.cost_full)
    train_ids = sorted(dataset.train_ids)
    if n_val >= len(train_ids):
        raise CapacityError("train split too small to carve out a validation set")
    perm = rng.permutation(train_ids)
    pools = LabeledPools(
        unlabeled=frozenset(int(i) for i in perm[n_val:]),
        validation=frozenset(int(i) for i in perm[:n_val]),
        test=frozenset(dataset.test_ids),
    )
    validation = dataset.gather(pools.validation)
    test_x, test_y, _ = dataset.gather(pools.test)

    model = None
    records = []
    for t in range(1, cost.rounds + 1):
        t0 = time.perf_counter()
        improvement = None
        if t == 1:
            full_new, weak_new = initial_equal_sample(pools, cost, rng)
            spent = len(full_new) * cost.cost_full + len(weak_new) * cost.cost_weak
        elif cfg.strategy in ISO_STRATEGIES:
            batch, improvement = _iso_round_batch(
                cfg, dataset, pools, model, validation, rng, workers, round_dir, t,
            )
            full_new, weak_new, spent = batch.full_ids, batch.weak_ids, batch.spent
        elif cfg.strategy == "fixed_ratio":
            batch = select_fixed_ratio(
                cfg.full_fraction, dataset, pools, model, cost.budget, cost, rng,
            )
            full_new, weak_new, spent = batch.full_ids, batch.weak_ids, batch.spent
        else:
            batch = select_baseline(
                cfg.strategy, dataset, pools, model, cost.budget, cost, rng,
            )
            full_new, weak_new, spent = batch.full_ids, batch.weak_ids, batch.spent

        pools = move_to_pool(pools, full_new, FULL)
        pools = move_to_pool(pools, weak_new, WEAK)

        full_x, full_y, _ = dataset.gather(pools.full)
        weak_x, _, weak_y = dataset.gather(pools.weak)
        model = train_two_stage(
            cfg.train, (full_x, full_y), (weak_x, weak_y),
            hierarchy.num_classes, hierarchy.num_superclasses, rng=rng,
        )
        test_accuracy = evaluate_accuracy(model, (test_x, test_y), FULL)
        val_accuracy = evaluate_accuracy(model, (validation[0], validation[1]), FULL)
        logger.info(
            "%s seed=%d round=%d test_acc=%.4f val_acc=%.4f pools=(%d full, %d weak)",
            cfg.label, seed, t, test_accuracy, val_accuracy,
            len(pools.full), len(pools.weak),
        )
        records.append(RoundRecord(
            round=t,
            test_accuracy=test_accuracy,
            n_full=len(pools.full),
            n_weak=len(pools.weak),
            spent=float(spent),
            M_full=None if improvement is None else improvement.M_full,
            M_weak=None if improvement is None else improvement.M_weak,
            wall_time=time.perf_counter() - t0,
        ))
    return tuple(records)


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None) -> StrategyResult:
    """Run one strategy over all configured experiment seeds.

    A failing seed is recorded with its diagnostic instead of aborting the
    remaining seeds. Per-round valuation/trace CSVs land under
    ``<output_dir>/rounds`` when an output directory is configured.
    """
    if dataset is None:
        dataset = load_dataset(cfg.dataset)
    workers = worker_count()
    round_base = None
    if cfg.output_dir is not None:
        round_base = Path(cfg.output_dir) / "rounds"
        round_base.mkdir(parents=True, exist_ok=True)

    seed_results = []
    for seed in cfg.experiment_seeds:
        round_dir = None
        if round_base is not None:
            round_dir = round_base / f"{cfg.label}_seed{seed}"
            round_dir.mkdir(parents=True, exist_ok=True)
        try:
            records = _run_seed(cfg, dataset, seed, workers, round_dir)
            seed_results.append(SeedResult(seed=seed, records=records))
        except IsoalError as exc:
            logger.warning("seed %d aborted: %s", seed, exc)
            seed_results.append(SeedResult(
                seed=seed, records=(), error=f"{type(exc).__name__}: {exc}",
            ))
    return StrategyResult(strategy=cfg.label, seeds=tuple(seed_results))


def _format_optional(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for strat in results:
            for seed_result in strat.seeds:
                for rec in seed_result.records:
                    writer.writerow([
                        strat.strategy, seed_result.seed, rec.round,
                        repr(float(rec.test_accuracy)), rec.n_full, rec.n_weak,
                        repr(float(rec.spent)),
                        _format_optional(rec.M_full), _format_optional(rec.M_weak),
                    ])


def read_results_csv(path):
    """Rows of results.csv with numeric fields parsed (blank M -> None)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append({
                "strategy": row["strategy"],
                "seed": int(row["seed"]),
                "round": int(row["round"]),
                "test_accuracy": float(row["test_accuracy"]),
                "n_full": int(row["n_full"]),
                "n_weak": int(row["n_weak"]),
                "spent": float(row["spent"]),
                "M_full": float(row["M_full"]) if row["M_full"] else None,
                "M_weak": float(row["M_weak"]) if row["M_weak"] else None,
            })
    return rows


# Fixed palette for plot curves; cycled when there are more strategies.
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22")


def render_accuracy_svg(rows, path) -> None:
    """Mean accuracy per round with a +-1 std band, one polyline per strategy.

    Hand-rolled SVG: data curves are <polyline> elements, bands are
    <polygon>, axes and ticks are <line>/<text>, so curves are countable
    by tag.
    """
    strategies: dict[str, dict[int, list[float]]] = {}
    for row in rows:
        strategies.setdefault(row["strategy"], {}).setdefault(
            row["round"], []).append(row["test_accuracy"])
    if not strategies:
        raise ConfigError("no rows to plot")

    all_rounds = sorted({r for per in strategies.values() for r in per})
    width, height = 640.0, 440.0
    left, right, top, bottom = 64.0, 200.0, 24.0, 48.0
    plot_w, plot_h = width - left - right, height - top - bottom

    lo = min(min(v) for per in strategies.values() for v in per.values())
    hi = max(max(v) for per in strategies.values() for v in per.values())
    pad = max(0.02, 0.1 * (hi - lo))
    lo, hi = max(0.0, lo - pad), min(1.0, hi + pad)

    def sx(r: float) -> float:
        if len(all_rounds) == 1:
            return left + plot_w / 2
        return left + (r - all_rounds[0]) / (all_rounds[-1] - all_rounds[0]) * plot_w

    def sy(a: float) -> float:
        return top + (hi - a) / (hi - lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" '
        f'y2="{height - bottom:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{height - bottom:.1f}" '
        f'x2="{width - right:.1f}" y2="{height - bottom:.1f}" stroke="black"/>',
    ]
    for r in all_rounds:
        parts.append(
            f'<line x1="{sx(r):.2f}" y1="{height - bottom:.1f}" x2="{sx(r):.2f}" '
            f'y2="{height - bottom + 5:.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{sx(r):.2f}" y="{height - bottom + 20:.1f}" '
            f'text-anchor="middle" font-size="12">{r}</text>'
        )
    for frac in range(5):
        a = lo + frac * (hi - lo) / 4
        parts.append(
            f'<line x1="{left - 5:.1f}" y1="{sy(a):.2f}" x2="{left:.1f}" '
            f'y2="{sy(a):.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{left - 9:.1f}" y="{sy(a) + 4:.2f}" text-anchor="end" '
            f'font-size="12">{a:.3f}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 10:.1f}" '
        f'text-anchor="middle" font-size="13">round</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-size="13" transform="rotate(-90 16 {top + plot_h / 2:.1f})">'
        f'test accuracy</text>'
    )

    for i, name in enumerate(sorted(strategies)):
        color = _PALETTE[i % len(_PALETTE)]
        per = strategies[name]
        rounds = sorted(per)
        means = [float(np.mean(per[r])) for r in rounds]
        stds = [float(np.std(per[r])) for r in rounds]
        upper = [(sx(r), sy(min(hi, m + s))) for r, m, s in zip(rounds, means, stds)]
        lower = [(sx(r), sy(max(lo, m - s))) for r, m, s in zip(rounds, means, stds)]
        band = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower[::-1])
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.15"/>')
        pts = " ".join(f"{sx(r):.2f},{sy(m):.2f}" for r, m in zip(rounds, means))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = top + 16 + 18 * i
        parts.append(
            f'<line x1="{width - right + 12:.1f}" y1="{ly:.1f}" '
            f'x2="{width - right + 34:.1f}" y2="{ly:.1f}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{width - right + 40:.1f}" y="{ly + 4:.1f}" '
            f'font-size="12">{name}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def emit_results(results, output_dir, configs=None) -> dict[str, Path]:
    """Write results.csv, manifest.json and accuracy.svg for one or more
    strategy runs."""
    results = list(results)
    if not any(rec for strat in results for s in strat.seeds for rec in s.records):
        raise ConfigError("no round records to emit")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    csv_path = out / "results.csv"
    write_results_csv(results, csv_path)

    manifest = {
        "version": __version__,
        "strategies": [s.strategy for s in results],
        "seeds": sorted({sr.seed for s in results for sr in s.seeds}),
        "configs": [c.to_dict() for c in configs] if configs else [],
        "diagnostics": {
            f"{s.strategy}/seed{sr.seed}": sr.error
            for s in results for sr in s.seeds if sr.error
        },
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    svg_path = out / "accuracy.svg"
    render_accuracy_svg(read_results_csv(csv_path), svg_path)
    return {"results": csv_path, "manifest": manifest_path, "plot": svg_path}
