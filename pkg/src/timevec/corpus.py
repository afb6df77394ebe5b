"""Interaction log ingestion, cleaning, and leakage-free temporal splitting.

The pipeline order is: dedupe -> binarize -> k-core filter -> temporal
split -> cold-start pruning.  All operations are pure: they take a
:class:`Dataset` and return a new one, so re-running a cleaning stage on
its own output changes nothing.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from .errors import ConfigError, DataError

ColumnKey = Union[str, int]


class Interaction(NamedTuple):
    """One (user, item, timestamp, optional rating) event."""

    user_id: str
    item_id: str
    timestamp: int
    rating: Optional[float] = None


def _sort_key(x: Interaction):
    return (x.timestamp, x.user_id, x.item_id)


@dataclass(frozen=True)
class Dataset:
    """An interaction log, kept sorted by (timestamp, user_id, item_id)."""

    interactions: tuple[Interaction, ...]
    rating_range: Optional[tuple[float, float]] = None

    def __len__(self) -> int:
        return len(self.interactions)

    def __iter__(self):
        return iter(self.interactions)

    @staticmethod
    def from_rows(rows: Iterable[Interaction],
                  rating_range: Optional[tuple[float, float]] = None) -> "Dataset":
        return Dataset(tuple(sorted(rows, key=_sort_key)), rating_range)

    @property
    def users(self) -> set[str]:
        return {x.user_id for x in self.interactions}

    @property
    def items(self) -> set[str]:
        return {x.item_id for x in self.interactions}


@dataclass(frozen=True)
class SplitResult:
    """Chronological train/validation/test partitions of one dataset."""

    train: Dataset
    validation: Dataset
    test: Dataset
    boundaries: tuple[int, int]  # (t_train_end, t_val_end)


@dataclass(frozen=True)
class ColumnMap:
    """Maps delimiter-separated columns onto interaction fields.

    Columns are addressed by header name (requires a header row) or by
    zero-based index.  ``time_unit`` is a multiplier converting raw time
    values to seconds (e.g. 0.001 for millisecond logs).
    """

    user: ColumnKey = "user"
    item: ColumnKey = "item"
    timestamp: ColumnKey = "timestamp"
    rating: Optional[ColumnKey] = None
    delimiter: str = ","
    has_header: bool = True
    time_unit: float = 1.0


@dataclass(frozen=True)
class LoadResult:
    dataset: Dataset
    skipped_rows: int


def _resolve(key: ColumnKey, header: Optional[list[str]], what: str) -> int:
    if isinstance(key, int):
        return key
    if header is None:
        raise ConfigError(f"{what} column {key!r} needs a header row; use an index instead")
    try:
        return header.index(key)
    except ValueError:
        raise ConfigError(f"{what} column {key!r} not found in header {header}") from None


def load_interactions(lines: Iterable[str], columns: ColumnMap = ColumnMap()) -> LoadResult:
    """Parse delimiter-separated rows into a sorted Dataset.

    Malformed rows (missing fields, empty ids, unparseable or negative
    timestamps, unparseable ratings) are skipped and counted.  Raises
    :class:`DataError` if no row parses.
    """
    reader = csv.reader(iter(lines), delimiter=columns.delimiter)
    header = None
    if columns.has_header:
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty input") from None
        header = [h.strip() for h in header]
    iu = _resolve(columns.user, header, "user")
    ii = _resolve(columns.item, header, "item")
    it = _resolve(columns.timestamp, header, "timestamp")
    ir = _resolve(columns.rating, header, "rating") if columns.rating is not None else None

    rows: list[Interaction] = []
    skipped = 0
    for rec in reader:
        if not rec:
            continue
        try:
            user = rec[iu].strip()
            item = rec[ii].strip()
            ts = int(math.floor(float(rec[it]) * columns.time_unit))
            rating = None
            if ir is not None:
                raw = rec[ir].strip()
                rating = float(raw) if raw else None
        except (IndexError, ValueError):
            skipped += 1
            continue
        if not user or not item or ts < 0:
            skipped += 1
            continue
        rows.append(Interaction(user, item, ts, rating))
    if not rows:
        raise DataError("no parseable interaction rows")
    return LoadResult(Dataset.from_rows(rows), skipped)


def save_interactions(ds: Dataset, path, delimiter: str = ",") -> None:
    """Write the canonical interaction file: header + sorted rows."""
    with_rating = any(x.rating is not None for x in ds)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["user", "item", "timestamp", "rating"] if with_rating
                   else ["user", "item", "timestamp"])
        for x in ds:
            row = [x.user_id, x.item_id, str(x.timestamp)]
            if with_rating:
                row.append("" if x.rating is None else repr(x.rating))
            w.writerow(row)


CANONICAL_COLUMNS = ColumnMap(user="user", item="item", timestamp="timestamp", rating="rating")
CANONICAL_COLUMNS_IMPLICIT = ColumnMap(user="user", item="item", timestamp="timestamp")


def load_canonical(path) -> Dataset:
    """Read a file previously written by :func:`save_interactions`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        cols = CANONICAL_COLUMNS if "rating" in header else CANONICAL_COLUMNS_IMPLICIT
        fh.seek(0)
        return load_interactions(fh, cols).dataset


def binarize(ds: Dataset, rating_range: tuple[float, float]) -> Dataset:
    """Keep interactions whose rating strictly exceeds the scale midpoint.

    Surviving rows become implicit positives (rating dropped).  Rows at
    or below the midpoint are removed; a missing rating is an error.
    """
    lo, hi = rating_range
    if not hi > lo:
        raise ConfigError(f"rating range max must exceed min, got ({lo}, {hi})")
    midpoint = (lo + hi) / 2.0
    kept = []
    for x in ds:
        if x.rating is None:
            raise DataError(f"missing rating for user={x.user_id} item={x.item_id}")
        if x.rating > midpoint:
            kept.append(Interaction(x.user_id, x.item_id, x.timestamp, None))
    return Dataset(tuple(kept), None)


def dedupe(ds: Dataset) -> Dataset:
    """Keep only the earliest interaction of each (user, item) pair."""
    seen: set[tuple[str, str]] = set()
    kept = []
    for x in ds:  # sorted by timestamp, so first occurrence is earliest
        key = (x.user_id, x.item_id)
        if key not in seen:
            seen.add(key)
            kept.append(x)
    return Dataset(tuple(kept), ds.rating_range)


def kcore_filter(ds: Dataset, k: int) -> Dataset:
    """Iteratively drop users and items with fewer than k interactions.

    Runs to a fixed point, returning the maximal (k, k)-core; may be
    empty.
    """
    if k < 1:
        raise ConfigError(f"k-core threshold must be >= 1, got {k}")
    rows = list(ds.interactions)
    while True:
        users = Counter(x.user_id for x in rows)
        items = Counter(x.item_id for x in rows)
        kept = [x for x in rows if users[x.user_id] >= k and items[x.item_id] >= k]
        if len(kept) == len(rows):
            return Dataset(tuple(rows), ds.rating_range)
        rows = kept


def temporal_split(ds: Dataset, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> SplitResult:
    """Split the globally time-sorted log by position into train/val/test.

    Boundary positions are floor(n * r_train) and floor(n * (r_train +
    r_val)), so ties at one timestamp stay in the partition their stable
    sorted position assigns.
    """
    r1, r2, r3 = ratios
    if min(r1, r2, r3) < 0 or abs(r1 + r2 + r3 - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    n = len(ds)
    if n < 3:
        raise DataError(f"need at least 3 interactions to split, got {n}")
    b1 = math.floor(n * r1)
    b2 = math.floor(n * (r1 + r2))
    rows = ds.interactions
    train = Dataset(rows[:b1], ds.rating_range)
    val = Dataset(rows[b1:b2], ds.rating_range)
    test = Dataset(rows[b2:], ds.rating_range)
    t_train_end = rows[b1 - 1].timestamp if b1 > 0 else 0
    t_val_end = rows[b2 - 1].timestamp if b2 > 0 else t_train_end
    return SplitResult(train, val, test, (t_train_end, t_val_end))


def remove_cold_start(split: SplitResult) -> SplitResult:
    """Drop validation/test rows whose user or item is unseen in train."""
    users = split.train.users
    items = split.train.items

    def prune(ds: Dataset) -> Dataset:
        kept = tuple(x for x in ds if x.user_id in users and x.item_id in items)
        return Dataset(kept, ds.rating_range)

    return SplitResult(split.train, prune(split.validation), prune(split.test),
                       split.boundaries)


def merge_train_val(split: SplitResult) -> Dataset:
    """Concatenate train and validation for final-model training."""
    return Dataset.from_rows(split.train.interactions + split.validation.interactions,
                             split.train.rating_range)


def clean(ds: Dataset, k_core: int = 5,
          rating_range: Optional[tuple[float, float]] = None) -> Dataset:
    """Cleaning stage of the pipeline: dedupe, binarize, k-core filter.

    ``rating_range`` of None means implicit feedback: binarization is
    skipped and all rows kept.  Idempotent: clean(clean(d)) == clean(d).
    """
    out = dedupe(ds)
    if rating_range is not None:
        out = binarize(out, rating_range)
    return kcore_filter(out, k_core)


def preprocess(ds: Dataset, k_core: int = 5,
               rating_range: Optional[tuple[float, float]] = None,
               ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> SplitResult:
    """Full pipeline: clean, split chronologically, prune cold-start rows."""
    cleaned = clean(ds, k_core, rating_range)
    if len(cleaned) == 0:
        raise DataError("empty dataset after preprocessing")
    return remove_cold_start(temporal_split(cleaned, ratios))


def summarize(ds: Dataset) -> dict[str, object]:
    """Counts and timespan for the summary sidecar."""
    if len(ds) == 0:
        return {"interactions": 0, "users": 0, "items": 0}
    t0 = ds.interactions[0].timestamp
    t1 = ds.interactions[-1].timestamp
    return {
        "interactions": len(ds),
        "users": len(ds.users),
        "items": len(ds.items),
        "t_min": t0,
        "t_max": t1,
        "timespan_days": round((t1 - t0) / 86400.0, 3),
    }
