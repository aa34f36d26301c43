"""Exception types shared across the package."""


class IsoalError(Exception):
    """Base class for all package-specific errors."""


class PoolViolationError(IsoalError):
    """An id was moved into or out of a pool it does not belong to."""


class CapacityError(IsoalError):
    """Not enough unlabeled instances to satisfy a sampling request."""


class BudgetExhaustedError(IsoalError):
    """Remaining budget cannot cover the requested annotation."""


class ShapeError(IsoalError):
    """Input array has the wrong dimensionality or length."""


class TrainingError(IsoalError):
    """Training preconditions violated (e.g. no fully labeled data)."""


class EvaluationError(IsoalError):
    """Accuracy evaluation requested on an empty dataset."""


class MeasureError(IsoalError):
    """Uncertainty measure undefined for the given prediction head."""


class EstimationError(IsoalError):
    """Improvement estimation impossible (labeled pool smaller than K)."""


class ConfigError(IsoalError):
    """Invalid configuration value."""


class SelectionInputError(IsoalError):
    """Candidate set contains invalid data (e.g. NaN vectors)."""


class GenerationError(IsoalError):
    """Synthetic dataset request cannot be satisfied."""
