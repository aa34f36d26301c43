"""Pool-based active learning with per-instance supervision levels.

Each unlabeled instance can be annotated either with its exact class
(full supervision) or with its superclass (weak supervision) at a lower
cost. Selection balances expected model improvement per unit cost
against batch diversity, under a fixed per-round budget.
"""

__version__ = "0.1.0"

from .datamodel import (
    FULL,
    LEVELS,
    WEAK,
    ClassHierarchy,
    CostModel,
    Dataset,
    Instance,
    LabeledPools,
    budget_charge,
    initial_equal_sample,
    load_dataset_csv,
    move_to_pool,
    save_dataset_csv,
)
from .errors import (
    BudgetExhaustedError,
    CapacityError,
    ConfigError,
    EstimationError,
    EvaluationError,
    GenerationError,
    IsoalError,
    MeasureError,
    PoolViolationError,
    SelectionInputError,
    ShapeError,
    TrainingError,
)
from .learner import (
    TrainConfig,
    TwoHeadModel,
    embed,
    evaluate_accuracy,
    initialize_model,
    load_checkpoint,
    loss_and_grads,
    predict_full,
    predict_weak,
    save_checkpoint,
    train_stage,
    train_two_stage,
)
from .valuation import (
    ENTROPY,
    IMPROVEMENT_FLOOR,
    MARGIN,
    MAXCONF,
    MEASURES,
    ImprovementEstimate,
    ValuationReport,
    build_valuation_report,
    compute_vcr,
    estimate_improvement,
    improvement_from_curve,
    percentile_normalize,
    uncertainty_batch,
    uncertainty_raw,
)
from .selection import (
    BASELINE_STRATEGIES,
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
from .harness import (
    ISO_STRATEGIES,
    STRATEGIES,
    CsvSpec,
    ExperimentConfig,
    RoundRecord,
    SeedResult,
    StrategyResult,
    SyntheticSpec,
    emit_results,
    generate_synthetic,
    load_dataset,
    read_results_csv,
    render_accuracy_svg,
    run_experiment,
    save_dataset,
    write_results_csv,
)

__all__ = [
    "__version__",
    "FULL", "WEAK", "LEVELS",
    "ClassHierarchy", "CostModel", "Dataset", "Instance", "LabeledPools",
    "budget_charge", "initial_equal_sample", "move_to_pool",
    "save_dataset_csv", "load_dataset_csv",
    "IsoalError", "PoolViolationError", "CapacityError",
    "BudgetExhaustedError", "ShapeError", "TrainingError",
    "EvaluationError", "MeasureError", "EstimationError", "ConfigError",
    "SelectionInputError", "GenerationError",
    "TrainConfig", "TwoHeadModel", "initialize_model", "predict_full",
    "predict_weak", "embed", "loss_and_grads", "train_stage",
    "train_two_stage", "evaluate_accuracy", "save_checkpoint",
    "load_checkpoint",
    "MARGIN", "MAXCONF", "ENTROPY", "MEASURES", "IMPROVEMENT_FLOOR",
    "ImprovementEstimate", "ValuationReport", "improvement_from_curve",
    "estimate_improvement", "uncertainty_raw", "uncertainty_batch",
    "percentile_normalize", "compute_vcr", "build_valuation_report",
    "BASELINE_STRATEGIES", "Candidate", "SelectionBatch", "TraceStep",
    "select_iso", "select_greedy_vcr", "select_baseline",
    "select_fixed_ratio", "farthest_first", "write_trace_csv",
    "ISO_STRATEGIES", "STRATEGIES", "SyntheticSpec", "CsvSpec",
    "ExperimentConfig", "RoundRecord", "SeedResult", "StrategyResult",
    "generate_synthetic", "save_dataset", "load_dataset",
    "run_experiment", "emit_results", "write_results_csv",
    "read_results_csv", "render_accuracy_svg",
]
