"""Command-line front end for the full pipeline.

Subcommands: preprocess, train, evaluate, recommend, grid-search, stats,
export-curves.  One JSON configuration file drives everything; the
output directory doubles as the workspace that chains commands
together (preprocess writes the canonical split files that train,
evaluate, stats, and export-curves read).  Every command is
deterministic given (input files, config, seed) in single-worker mode,
and artifacts are named by a hash of the effective config and seed.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import corpus, recsys, temporal, trainer, weighting
from .config import RunConfig, apply_overrides, load_config
from .errors import ConfigError, DataError, EvaluationError, TimevecError

SPLIT_FILES = {"train": "train.csv", "validation": "validation.csv", "test": "test.csv"}


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_line(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


def _load_split(cfg: RunConfig, name: str) -> corpus.Dataset:
    path = _out_dir(cfg) / SPLIT_FILES[name]
    if not path.exists():
        raise DataError(f"missing {path}; run the preprocess command first")
    return corpus.load_canonical(path)


def _training_data(cfg: RunConfig, merge_validation: bool) -> corpus.Dataset:
    train = _load_split(cfg, "train")
    if not merge_validation:
        return train
    val = _load_split(cfg, "validation")
    return corpus.Dataset.from_rows(train.interactions + val.interactions)


def _profiles_for(data: corpus.Dataset, cfg: RunConfig):
    vocab = trainer.build_vocab(data)
    timelines = temporal.build_timelines(data, vocab.item_to_index)
    return temporal.build_profiles(timelines, cfg.temporal), timelines


def _train_model(cfg: RunConfig, data: corpus.Dataset, log_lines: Optional[list[str]] = None):
    profiles, _ = _profiles_for(data, cfg)

    def on_epoch(epoch: int, mean_loss: float, lr: float):
        if log_lines is not None:
            log_lines.append(f"epoch={epoch} mean_loss={mean_loss!r} lr={lr!r}")

    return trainer.train(data, profiles, cfg.train, cfg.weighting, on_epoch=on_epoch)


def cmd_preprocess(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    if not cfg.data.path:
        raise ConfigError("data.path is not set")
    try:
        with open(cfg.data.path) as fh:
            loaded = corpus.load_interactions(fh, cfg.data.column_map())
    except OSError as exc:
        raise DataError(f"cannot read {cfg.data.path}: {exc}") from exc
    split = corpus.preprocess(loaded.dataset, cfg.preprocess.k_core,
                              cfg.data.rating_range, cfg.preprocess.ratios)
    for name, ds in (("train", split.train), ("validation", split.validation),
                     ("test", split.test)):
        corpus.save_interactions(ds, out / SPLIT_FILES[name], cfg.data.delimiter)
    lines = [f"skipped_rows={loaded.skipped_rows}",
             f"t_train_end={split.boundaries[0]}",
             f"t_val_end={split.boundaries[1]}"]
    for name, ds in (("raw", loaded.dataset), ("train", split.train),
                     ("validation", split.validation), ("test", split.test)):
        for key, value in corpus.summarize(ds).items():
            lines.append(f"{name}.{key}={value}")
    lines.append(f"config={_config_line(cfg)}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {', '.join(SPLIT_FILES.values())} and summary.txt to {out}")


def cmd_train(cfg: RunConfig, merge_validation: bool = True,
              save_context: bool = False) -> Path:
    out = _out_dir(cfg)
    data = _training_data(cfg, merge_validation)
    log_lines = [f"config={_config_line(cfg)}"]
    model = _train_model(cfg, data, log_lines)
    tag = cfg.config_hash()
    model_path = out / f"model_{tag}.txt"
    trainer.save_model(model, model_path,
                       context_path=out / f"model_{tag}.ctx.txt" if save_context else None)
    (out / f"train_log_{tag}.txt").write_text("\n".join(log_lines) + "\n")
    print(f"model written to {model_path}")
    return model_path


def _check_vocab_overlap(model: trainer.EmbeddingModel, ds: corpus.Dataset) -> None:
    known = set(model.vocab.item_to_index)
    if not known & ds.items:
        raise EvaluationError("vocabulary mismatch: the model shares no items "
                              "with the split files")


def _report_lines(report: recsys.MetricsReport, cfg: RunConfig, extra: dict) -> list[str]:
    lines = [f"users_evaluated={report.users_evaluated}", f"rmse={report.rmse!r}"]
    for n, value in report.ndcg_at.items():
        lines.append(f"ndcg@{n}={value!r}")
    for n, value in report.hitrate_at.items():
        lines.append(f"hitrate@{n}={value!r}")
    for key, value in extra.items():
        lines.append(f"{key}={value}")
    lines.append(f"seed={cfg.seed}")
    lines.append(f"config={_config_line(cfg)}")
    return lines


def cmd_evaluate(cfg: RunConfig, model_path, on: str = "test") -> Path:
    out = _out_dir(cfg)
    model = trainer.load_model(model_path)
    split = corpus.SplitResult(_load_split(cfg, "train"), _load_split(cfg, "validation"),
                               _load_split(cfg, "test"), (0, 0))
    _check_vocab_overlap(model, split.train)
    report = recsys.evaluate_split(model, split, on=on,
                                   cutoffs=cfg.evaluate.cutoffs,
                                   negative_ratio=cfg.evaluate.negative_ratio,
                                   seed=cfg.seed)
    path = out / f"metrics_{on}_{cfg.config_hash()}.txt"
    path.write_text("\n".join(_report_lines(report, cfg, {"split": on,
                                                          "model": Path(model_path).name})) + "\n")
    print(f"metrics written to {path}")
    return path


def cmd_recommend(cfg: RunConfig, model_path, user: Optional[str] = None,
                  history_file=None, k: int = 10) -> Path:
    out = _out_dir(cfg)
    model = trainer.load_model(model_path)
    if (user is None) == (history_file is None):
        raise ConfigError("pass exactly one of --user or --history-file")
    if user is not None:
        data = _training_data(cfg, merge_validation=True)
        raw_items = [x.item_id for x in data if x.user_id == user]
        if not raw_items:
            raise DataError(f"unknown user {user!r}")
        name = user
    else:
        raw_items = [line.strip() for line in Path(history_file).read_text().splitlines()
                     if line.strip()]
        name = Path(history_file).stem
    history = []
    for item in raw_items:
        idx = model.vocab.item_to_index.get(item)
        if idx is None:
            print(f"warning: skipping item {item!r} not in the model vocabulary",
                  file=sys.stderr)
        else:
            history.append(idx)
    if not history:
        raise DataError("no history items remain in the model vocabulary")
    u = recsys.user_vector(history, model, user_id=name)
    ranked = recsys.top_k(u, model, set(history), k)
    if not ranked.items:
        print("warning: candidate pool is empty (history covers the vocabulary)",
              file=sys.stderr)
    path = out / f"recommendations_{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=cfg.data.delimiter, lineterminator="\n")
        w.writerow(["user_id", "rank", "item_id", "score"])
        for rank, (item, s) in enumerate(ranked.items, start=1):
            w.writerow([name, rank, item, repr(s)])
    print(f"recommendations written to {path}")
    return path


def _metric_value(report: recsys.MetricsReport, name: str) -> float:
    if name == "rmse":
        return report.rmse
    kind, _, cutoff = name.partition("@")
    table = {"ndcg": report.ndcg_at, "hitrate": report.hitrate_at}.get(kind)
    if table is None or not cutoff.isdigit() or int(cutoff) not in table:
        raise ConfigError(f"unknown grid metric {name!r}; use rmse, ndcg@N, or "
                          f"hitrate@N with N in the configured cutoffs")
    return table[int(cutoff)]


def cmd_grid_search(cfg: RunConfig) -> Path:
    out = _out_dir(cfg)
    if not cfg.grid:
        raise ConfigError("config has no grid section to search over")
    train_ds = _load_split(cfg, "train")
    val_ds = _load_split(cfg, "validation")
    keys = sorted(cfg.grid)
    points = list(itertools.product(*(cfg.grid[k] for k in keys)))
    minimize = cfg.grid_metric == "rmse"

    rows = []
    best = None  # (value, row_index, RunConfig)
    for values in points:
        overrides = dict(zip(keys, values))
        row = {k: overrides[k] for k in keys}
        try:
            point_cfg = apply_overrides(cfg, overrides)
            profiles, _ = _profiles_for(train_ds, point_cfg)
            model = trainer.train(train_ds, profiles, point_cfg.train, point_cfg.weighting)
            report = recsys.evaluate(model, train_ds, val_ds,
                                     cutoffs=point_cfg.evaluate.cutoffs,
                                     negative_ratio=point_cfg.evaluate.negative_ratio,
                                     seed=point_cfg.seed)
            value = _metric_value(report, cfg.grid_metric)
            row.update({cfg.grid_metric: repr(value), "rmse": repr(report.rmse),
                        "users_evaluated": report.users_evaluated, "error": ""})
            better = best is None or (value < best[0] if minimize else value > best[0])
            if better:
                best = (value, len(rows), point_cfg)
        except TimevecError as exc:
            row.update({cfg.grid_metric: "", "rmse": "", "users_evaluated": "",
                        "error": f"{exc.category}: {exc}"})
        rows.append(row)

    columns = keys + [cfg.grid_metric, "rmse", "users_evaluated", "error"]
    # de-duplicate while preserving order (the metric may also be rmse)
    columns = list(dict.fromkeys(columns))
    table_path = out / "grid_results.csv"
    with open(table_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, delimiter=cfg.data.delimiter,
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if best is None:
        raise EvaluationError(f"all {len(points)} grid points failed; see {table_path}")
    best_path = out / "best_config.json"
    best_path.write_text(json.dumps(best[2].to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"{len(points)} grid points evaluated; best {cfg.grid_metric}={best[0]!r} "
          f"(row {best[1]}); table in {table_path}, best config in {best_path}")
    return table_path


def cmd_stats(cfg: RunConfig, merge_validation: bool = True) -> Path:
    out = _out_dir(cfg)
    data = _training_data(cfg, merge_validation)
    profiles, timelines = _profiles_for(data, cfg)
    path = out / "user_stats.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=cfg.data.delimiter, lineterminator="\n")
        w.writerow(["user_id", "events", "valid_intervals", "q1", "q3", "tau",
                    "mu", "sigma", "sessions", "degenerate"])
        for user, profile in profiles.items():
            if profile.degenerate:
                stats = ["", "", "inf", "", ""]
            else:
                stats = [repr(profile.q1), repr(profile.q3), repr(profile.tau),
                         repr(profile.mu), repr(profile.sigma)]
            w.writerow([user, len(timelines[user]), len(profile.valid_intervals),
                        *stats, int(profile.session_of[-1]) + 1,
                        int(profile.degenerate)])
    gaps = np.concatenate([np.diff(tl.times) for tl in timelines.values()
                           if len(tl) > 1] or [np.empty(0)])
    summary = [f"users={len(profiles)}",
               f"degenerate_users={sum(p.degenerate for p in profiles.values())}",
               f"mean_interarrival_days={repr(float(gaps.mean() / 86400.0)) if len(gaps) else ''}",
               f"config={_config_line(cfg)}"]
    (out / "stats_summary.txt").write_text("\n".join(summary) + "\n")
    print(f"per-user stats in {path}, aggregates in {out / 'stats_summary.txt'}")
    return path


def cmd_export_curves(cfg: RunConfig, user: str, anchors: str = "first,middle,last",
                      merge_validation: bool = True) -> Path:
    out = _out_dir(cfg)
    data = _training_data(cfg, merge_validation)
    profiles, timelines = _profiles_for(data, cfg)
    if user not in profiles:
        raise DataError(f"unknown user {user!r}")
    profile = profiles[user]
    n = len(timelines[user])
    positions = {"first": 0, "middle": n // 2, "last": n - 1}
    anchor_list = []
    for label in anchors.split(","):
        label = label.strip()
        if label not in positions:
            raise ConfigError(f"unknown anchor {label!r}; use first, middle, last")
        anchor_list.append((label, positions[label]))
    w_min, alpha = cfg.weighting.w_min, cfg.weighting.alpha
    path = out / f"curves_{user}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=cfg.data.delimiter, lineterminator="\n")
        w.writerow(["anchor", "event", "distance_days", "w_local", "w_global",
                    "w_unified"])
        for label, a in anchor_list:
            for e in range(n):
                d = abs(float(profile.t_cum[e] - profile.t_cum[a]))
                wg = weighting.global_weight(profile.t_norm[e], profile.t_norm[a], w_min)
                if profile.degenerate:
                    wl, wu = math.nan, wg
                else:
                    z = weighting.z_score(d, profile.mu, profile.sigma, profile.epsilon)
                    wl = weighting.local_weight(z, alpha, w_min)
                    wu = weighting.unified_weight(wl, wg)
                w.writerow([label, e, repr(d / 86400.0), repr(wl), repr(wg), repr(wu)])
    print(f"curves written to {path}")
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timevec",
        description="Time-aware item embeddings: preprocessing, training, and evaluation")
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--workers", type=int, help="override train.workers")
    parser.add_argument("--output-dir", help="override the configured output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("preprocess", help="clean the raw log and write split files")

    p = sub.add_parser("train", help="train embeddings on the preprocessed data")
    p.add_argument("--no-merge-validation", action="store_true",
                   help="train on the train split alone instead of train+validation")
    p.add_argument("--save-context", action="store_true",
                   help="also write the context-matrix sidecar")

    p = sub.add_parser("evaluate", help="score a trained model on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--on", choices=["test", "validation"], default="test")

    p = sub.add_parser("recommend", help="top-K items for a user or history file")
    p.add_argument("--model", required=True)
    p.add_argument("--user")
    p.add_argument("--history-file")
    p.add_argument("--k", type=int, default=10)

    sub.add_parser("grid-search", help="run the configured hyperparameter grid")

    p = sub.add_parser("stats", help="dump per-user temporal profiles")
    p.add_argument("--no-merge-validation", action="store_true")

    p = sub.add_parser("export-curves", help="decay-curve data for one user")
    p.add_argument("--user", required=True)
    p.add_argument("--anchors", default="first,middle,last")
    p.add_argument("--no-merge-validation", action="store_true")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["train.workers"] = args.workers
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        if overrides:
            cfg = apply_overrides(cfg, overrides)

        if args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "train":
            cmd_train(cfg, merge_validation=not args.no_merge_validation,
                      save_context=args.save_context)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.model, on=args.on)
        elif args.command == "recommend":
            cmd_recommend(cfg, args.model, user=args.user,
                          history_file=args.history_file, k=args.k)
        elif args.command == "grid-search":
            cmd_grid_search(cfg)
        elif args.command == "stats":
            cmd_stats(cfg, merge_validation=not args.no_merge_validation)
        elif args.command == "export-curves":
            cmd_export_curves(cfg, args.user, anchors=args.anchors,
                              merge_validation=not args.no_merge_validation)
    except TimevecError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
