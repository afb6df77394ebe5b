"""Run configuration: one JSON document drives every pipeline command.

The file mirrors the module structure (data / preprocess / temporal /
weighting / train / evaluate sections plus a global seed and output
directory).  The effective configuration is echoed into every artifact
and hashed into artifact names so distinct runs never silently
overwrite each other.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .corpus import ColumnMap
from .errors import ConfigError
from .temporal import TemporalConfig
from .trainer import TrainConfig
from .weighting import WeightConfig


@dataclass(frozen=True)
class DataConfig:
    path: str = ""
    delimiter: str = ","
    has_header: bool = True
    user_col: str | int = "user"
    item_col: str | int = "item"
    time_col: str | int = "timestamp"
    rating_col: Optional[str | int] = None
    time_unit: float = 1.0
    rating_range: Optional[tuple[float, float]] = None

    def column_map(self) -> ColumnMap:
        return ColumnMap(user=self.user_col, item=self.item_col,
                         timestamp=self.time_col, rating=self.rating_col,
                         delimiter=self.delimiter, has_header=self.has_header,
                         time_unit=self.time_unit)


@dataclass(frozen=True)
class PreprocessConfig:
    k_core: int = 5
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class EvalConfig:
    cutoffs: tuple[int, ...] = tuple(range(1, 21))
    negative_ratio: int = 1


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = DataConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    temporal: TemporalConfig = TemporalConfig()
    weighting: WeightConfig = WeightConfig()
    train: TrainConfig = TrainConfig()
    evaluate: EvalConfig = EvalConfig()
    grid: dict[str, list] = field(default_factory=dict)
    grid_metric: str = "ndcg@10"
    seed: int = 42
    output_dir: str = "out"

    def to_dict(self) -> dict[str, Any]:
        """Canonical nested dict of every effective value."""
        return {
            "data": {
                "path": self.data.path,
                "delimiter": self.data.delimiter,
                "has_header": self.data.has_header,
                "user_col": self.data.user_col,
                "item_col": self.data.item_col,
                "time_col": self.data.time_col,
                "rating_col": self.data.rating_col,
                "time_unit": self.data.time_unit,
                "rating_range": list(self.data.rating_range) if self.data.rating_range else None,
            },
            "preprocess": {"k_core": self.preprocess.k_core,
                           "ratios": list(self.preprocess.ratios)},
            "temporal": {"t_min": self.temporal.t_min, "lambda": self.temporal.lam,
                         "epsilon": self.temporal.epsilon,
                         "clip_factor": self.temporal.clip_factor,
                         "quartile_method": self.temporal.quartile_method,
                         "clip_cumulative": self.temporal.clip_cumulative},
            "weighting": {"mode": self.weighting.mode, "alpha": self.weighting.alpha,
                          "w_min": self.weighting.w_min,
                          "fixed_tau": self.weighting.fixed_tau},
            "train": {"dim": self.train.dim, "window": self.train.window,
                      "negatives": self.train.negatives,
                      "neg_exponent": self.train.neg_exponent,
                      "subsample_t": self.train.subsample_t,
                      "learning_rate": self.train.learning_rate,
                      "epochs": self.train.epochs, "batch_size": self.train.batch_size,
                      "workers": self.train.workers, "optimizer": self.train.optimizer},
            "evaluate": {"cutoffs": list(self.evaluate.cutoffs),
                         "negative_ratio": self.evaluate.negative_ratio},
            "grid": self.grid,
            "grid_metric": self.grid_metric,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


_SECTIONS = ("data", "preprocess", "temporal", "weighting", "train",
             "evaluate", "grid", "grid_metric", "seed", "output_dir")


def _build(cls, section: str, raw: dict[str, Any], rename: dict[str, str] = {},
           coerce: dict[str, Any] = {}):
    known = set(cls.__dataclass_fields__)
    kwargs = {}
    for key, value in raw.items():
        attr = rename.get(key, key)
        if attr not in known:
            raise ConfigError(f"unknown key {key!r} in section {section!r}")
        if attr in coerce and value is not None:
            value = coerce[attr](value)
        kwargs[attr] = value
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid {section} configuration: {exc}") from exc


def config_from_dict(raw: dict[str, Any]) -> RunConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    seed = int(raw.get("seed", 42))
    train_raw = dict(raw.get("train", {}))
    train_raw.setdefault("seed", seed)  # one global seed drives everything
    weighting_raw = dict(raw.get("weighting", {}))
    temporal_raw = dict(raw.get("temporal", {}))
    # the session sensitivity lives in the temporal section; mirror it into
    # the weighting config so profiles and disc weights always agree
    if "lambda" in temporal_raw:
        weighting_raw.setdefault("lambda", temporal_raw["lambda"])

    cfg = RunConfig(
        data=_build(DataConfig, "data", raw.get("data", {}),
                    coerce={"rating_range": tuple, "time_unit": float}),
        preprocess=_build(PreprocessConfig, "preprocess", raw.get("preprocess", {}),
                          coerce={"ratios": tuple, "k_core": int}),
        temporal=_build(TemporalConfig, "temporal", temporal_raw,
                        rename={"lambda": "lam"},
                        coerce={"t_min": float, "lam": float, "epsilon": float,
                                "clip_factor": float}),
        weighting=_build(WeightConfig, "weighting", weighting_raw,
                         rename={"lambda": "lam"},
                         coerce={"lam": float, "alpha": float, "w_min": float,
                                 "fixed_tau": float}),
        train=_build(TrainConfig, "train", train_raw,
                     coerce={"dim": int, "window": int, "negatives": int,
                             "neg_exponent": float, "subsample_t": float,
                             "learning_rate": float, "epochs": int,
                             "batch_size": int, "seed": int, "workers": int}),
        evaluate=_build(EvalConfig, "evaluate", raw.get("evaluate", {}),
                        coerce={"cutoffs": lambda v: tuple(int(c) for c in v),
                                "negative_ratio": int}),
        grid=dict(raw.get("grid", {})),
        grid_metric=str(raw.get("grid_metric", "ndcg@10")),
        seed=seed,
        output_dir=str(raw.get("output_dir", "out")),
    )
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(raw)


def apply_overrides(cfg: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Rebuild the config with dotted-path overrides, e.g. 'train.epochs'."""
    raw = cfg.to_dict()
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = raw
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config path {dotted!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config path {dotted!r}")
        node[parts[-1]] = value
    return config_from_dict(raw)
