"""Command line front end.

Three subcommands: ``generate`` writes a synthetic dataset to CSV,
``run`` executes one or more strategies and emits results.csv,
manifest.json and accuracy.svg, and ``plot`` re-renders the plot from an
existing results.csv. ``run`` options may come from a JSON config file,
with explicit flags taking precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datamodel import CostModel
from .errors import IsoalError
from .harness import (
    CsvSpec,
    ExperimentConfig,
    SyntheticSpec,
    emit_results,
    generate_synthetic,
    load_dataset,
    read_results_csv,
    render_accuracy_svg,
    run_experiment,
    save_dataset,
)
from .learner import TrainConfig

logger = logging.getLogger(__name__)

RUN_DEFAULTS = {
    "strategy": "iso",
    "rounds": 5,
    "budget": 200.0,
    "cost_full": 1.0,
    "cost_weak": 0.5,
    "k_subsets": 5,
    "improvement_seeds": 3,
    "seeds": "0",
    "dataset": None,
    "full_fraction": 0.6,
}


def _parse_seeds(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(s) for s in value)
    parts = [p.strip() for p in str(value).split(",") if p.strip()]
    return tuple(int(p) for p in parts)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isoal",
        description="Pool-based active learning with per-instance choice "
        "of full or weak annotation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--superclasses", type=int, default=10)
    gen.add_argument("--children-per-superclass", type=int, default=4)
    gen.add_argument("--n-per-class", type=int, default=100)
    gen.add_argument("--dim", type=int, default=32)
    gen.add_argument("--superclass-spread", type=float, default=4.0)
    gen.add_argument("--class-spread", type=float, default=1.0)
    gen.add_argument("--noise", type=float, default=2.0)
    gen.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="run strategies and emit result files")
    run.add_argument("--strategy", help="strategy name, or a comma-separated list")
    run.add_argument("--rounds", type=int)
    run.add_argument("--budget", type=float)
    run.add_argument("--cost-full", type=float)
    run.add_argument("--cost-weak", type=float)
    run.add_argument("--k-subsets", type=int)
    run.add_argument("--improvement-seeds", type=int)
    run.add_argument("--seeds", help="comma-separated experiment seeds")
    run.add_argument("--dataset", help="directory holding train.csv and test.csv")
    run.add_argument("--full-fraction", type=float)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", help="JSON config file; flags override its values")

    plot = sub.add_parser("plot", help="re-render accuracy.svg from results.csv")
    plot.add_argument("--results", default="results.csv")
    plot.add_argument("--out", default="accuracy.svg")
    return parser


def _cmd_generate(args: argparse.Namespace) -> int:
    dataset = generate_synthetic(
        args.superclasses, args.children_per_superclass, args.n_per_class,
        args.dim, args.superclass_spread, args.class_spread, args.noise,
        args.seed,
    )
    train_path, test_path = save_dataset(dataset, args.out)
    print(f"wrote {train_path} ({len(dataset.train_ids)} rows) and "
          f"{test_path} ({len(dataset.test_ids)} rows)")
    return 0


def _merge_run_options(args: argparse.Namespace) -> dict:
    merged = dict(RUN_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            merged.update(json.load(fh))
    for key in RUN_DEFAULTS:
        flag = getattr(args, key)
        if flag is not None:
            merged[key] = flag
    return merged


def _cmd_run(args: argparse.Namespace) -> int:
    merged = _merge_run_options(args)
    cost = CostModel(
        cost_full=float(merged["cost_full"]),
        cost_weak=float(merged["cost_weak"]),
        budget=float(merged["budget"]),
        rounds=int(merged["rounds"]),
    )
    train = TrainConfig(**merged["train"]) if "train" in merged else TrainConfig()
    if merged["dataset"]:
        dataset_spec = CsvSpec(path=str(merged["dataset"]))
    else:
        dataset_spec = SyntheticSpec(**merged.get("synthetic", {}))
    seeds = _parse_seeds(merged["seeds"])
    strategies = [s.strip() for s in str(merged["strategy"]).split(",") if s.strip()]
    if not strategies:
        raise IsoalError("no strategy given")

    extra = {
        k: merged[k] for k in ("measure_full", "measure_weak") if k in merged
    }
    configs = [
        ExperimentConfig(
            strategy=name,
            cost=cost,
            train=train,
            dataset=dataset_spec,
            experiment_seeds=seeds,
            k_subsets=int(merged["k_subsets"]),
            num_improvement_seeds=int(merged["improvement_seeds"]),
            full_fraction=float(merged["full_fraction"]),
            output_dir=args.out,
            **extra,
        )
        for name in strategies
    ]
    dataset = load_dataset(dataset_spec)
    results = [run_experiment(cfg, dataset) for cfg in configs]
    paths = emit_results(results, args.out, configs)
    print(f"wrote {paths['results']}, {paths['manifest']}, {paths['plot']}")
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    rows = read_results_csv(args.results)
    render_accuracy_svg(rows, args.out)
    print(f"wrote {Path(args.out)}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_plot(args)
    except IsoalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
