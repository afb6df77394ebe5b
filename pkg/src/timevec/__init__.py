"""Time-aware item embeddings from timestamped interaction logs."""

from .config import RunConfig, load_config
from .corpus import Dataset, Interaction, SplitResult
from .temporal import TemporalConfig, UserTemporalProfile, UserTimeline
from .trainer import EmbeddingModel, TrainConfig, Vocabulary, train
from .recsys import MetricsReport, evaluate, evaluate_split
from .weighting import WeightConfig

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Interaction", "SplitResult",
    "TemporalConfig", "UserTimeline", "UserTemporalProfile",
    "WeightConfig", "TrainConfig", "Vocabulary", "EmbeddingModel",
    "MetricsReport", "RunConfig",
    "train", "evaluate", "evaluate_split", "load_config",
    "__version__",
]
