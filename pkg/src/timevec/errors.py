"""Exception hierarchy shared across the toolkit.

Every error carries a short machine-parseable ``category`` so the CLI can
emit one-line diagnostics and map failures to exit codes.
"""


class TimevecError(Exception):
    """Base class for all toolkit errors."""

    category = "internal"


class ConfigError(TimevecError):
    """Invalid or inconsistent configuration."""

    category = "config"


class DataError(TimevecError):
    """Unusable input data (unreadable, empty, malformed beyond recovery)."""

    category = "data"


class TrainingError(TimevecError):
    """Training could not run or produce a model."""

    category = "training"


class TrainingDiverged(TrainingError):
    """Non-finite values appeared during optimization."""

    category = "training-diverged"


class EvaluationError(TimevecError):
    """Evaluation could not produce a report (e.g. no evaluable users)."""

    category = "evaluation"
