"""Per-user temporal statistics.

For each user timeline this module derives the ingredients the weighting
schemes consume: noise-filtered inter-arrival intervals, the IQR session
threshold, outlier-clipped mean/std of the interval distribution,
cumulative and min-max normalized time per event, and session labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .corpus import Dataset


@dataclass(frozen=True)
class TemporalConfig:
    """Knobs for per-user statistics.

    t_min is the noise floor in seconds: only gaps strictly above it
    enter the estimation set.  lam scales the IQR when deriving the
    session threshold.  clip_factor sets the outlier fence applied to
    intervals before computing mean/std and cumulative time.
    clip_cumulative=False switches cumulative time to raw gap sums for
    comparison runs.
    """

    t_min: float = 300.0
    lam: float = 1.5
    epsilon: float = 1e-6
    clip_factor: float = 1.5
    quartile_method: str = "linear"
    clip_cumulative: bool = True

    def __post_init__(self):
        if self.t_min < 0:
            raise ValueError(f"t_min must be >= 0, got {self.t_min}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.clip_factor <= 0:
            raise ValueError(f"clip_factor must be > 0, got {self.clip_factor}")
        if self.quartile_method != "linear":
            raise ValueError(f"unsupported quartile method {self.quartile_method!r}")


@dataclass(frozen=True)
class UserTimeline:
    """A user's events as parallel arrays, sorted by (timestamp, item)."""

    user_id: str
    items: np.ndarray  # vocabulary indices, int
    times: np.ndarray  # epoch seconds, int64

    def __post_init__(self):
        if len(self.items) != len(self.times) or len(self.items) == 0:
            raise ValueError("timeline needs at least one event and equal-length arrays")
        t, i = self.times, self.items
        if len(t) > 1:
            tied = t[1:] == t[:-1]
            if np.any(t[1:] < t[:-1]) or np.any(tied & (i[1:] <= i[:-1])):
                raise ValueError(f"timeline for {self.user_id} not strictly "
                                 "ordered by (timestamp, item)")

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class UserTemporalProfile:
    """Derived statistics for one timeline.

    Degenerate profiles (fewer than 4 valid intervals) carry tau=inf,
    NaN moments, and a single session; weighting schemes apply their own
    fallbacks.  gaps holds the raw per-event inter-arrival time (first
    event 0) so fixed-threshold segmentation can be derived later.
    """

    user_id: str
    valid_intervals: np.ndarray
    q1: float
    q3: float
    tau: float
    mu: float
    sigma: float
    clip_bound: float
    gaps: np.ndarray
    t_cum: np.ndarray
    t_norm: np.ndarray
    session_of: np.ndarray
    degenerate: bool
    epsilon: float = 1e-6  # z-score denominator guard, copied from the config


def valid_intervals(tl: UserTimeline, t_min: float) -> np.ndarray:
    """Inter-arrival gaps strictly above the noise floor."""
    gaps = np.diff(tl.times).astype(np.float64)
    return gaps[gaps > t_min]


def session_threshold(intervals: np.ndarray, lam: float,
                      quartile_method: str = "linear") -> float:
    """IQR-based personal session threshold: Q3 + lam * (Q3 - Q1).

    Quartiles use linear interpolation over the sorted intervals.
    Raises ValueError below 4 intervals; callers take the degenerate
    path instead.
    """
    if len(intervals) < 4:
        raise ValueError(f"need >= 4 intervals for quartiles, got {len(intervals)}")
    q1, q3 = np.quantile(intervals, [0.25, 0.75], method=quartile_method)
    return float(q3 + lam * (q3 - q1))


def segment_sessions(tl: UserTimeline, tau: float) -> np.ndarray:
    """Label each event with its session index.

    A new session starts whenever the raw gap to the previous event
    exceeds tau.  tau=inf yields a single session.
    """
    gaps = np.diff(tl.times).astype(np.float64)
    return sessions_from_gaps(np.concatenate(([0.0], gaps)), tau)


def sessions_from_gaps(gaps: np.ndarray, tau: float) -> np.ndarray:
    """Session labels from per-event raw gaps (gaps[0] is ignored)."""
    breaks = gaps > tau
    breaks[0] = False
    return np.cumsum(breaks).astype(np.int64)


def user_profile(tl: UserTimeline, cfg: TemporalConfig) -> UserTemporalProfile:
    """Compute the full temporal profile for one timeline."""
    times = tl.times.astype(np.float64)
    raw_gaps = np.concatenate(([0.0], np.diff(times)))
    intervals = valid_intervals(tl, cfg.t_min)
    degenerate = len(intervals) < 4

    if degenerate:
        q1 = q3 = mu = sigma = math.nan
        tau = math.inf
        clip_bound = math.inf
        session_of = np.zeros(len(tl), dtype=np.int64)
    else:
        q1, q3 = (float(q) for q in
                  np.quantile(intervals, [0.25, 0.75], method=cfg.quartile_method))
        tau = session_threshold(intervals, cfg.lam, cfg.quartile_method)
        clip_bound = q3 + cfg.clip_factor * (q3 - q1)
        clipped = np.minimum(intervals, clip_bound)
        mu = float(clipped.mean())
        sigma = float(clipped.std())  # population std: stable for small samples
        session_of = sessions_from_gaps(raw_gaps, tau)

    cum_gaps = np.minimum(raw_gaps, clip_bound) if cfg.clip_cumulative else raw_gaps
    t_cum = np.cumsum(cum_gaps)

    span = times[-1] - times[0]
    t_norm = (times - times[0]) / span if span > 0 else np.zeros(len(tl))

    return UserTemporalProfile(
        user_id=tl.user_id,
        valid_intervals=intervals,
        q1=q1, q3=q3, tau=tau, mu=mu, sigma=sigma,
        clip_bound=clip_bound,
        gaps=raw_gaps,
        t_cum=t_cum,
        t_norm=t_norm,
        session_of=session_of,
        degenerate=degenerate,
        epsilon=cfg.epsilon,
    )


def build_timelines(ds: Dataset, item_to_index: Mapping[str, int]) -> dict[str, UserTimeline]:
    """Group a dataset into per-user timelines, keyed by sorted user id.

    Items missing from the vocabulary are dropped (relevant when reusing
    a vocabulary built on a subset of the data).
    """
    events: dict[str, list[tuple[int, int]]] = {}
    for x in ds:
        idx = item_to_index.get(x.item_id)
        if idx is None:
            continue
        events.setdefault(x.user_id, []).append((x.timestamp, idx))
    timelines = {}
    for user in sorted(events):
        evs = sorted(events[user])
        timelines[user] = UserTimeline(
            user_id=user,
            items=np.array([i for _, i in evs], dtype=np.int64),
            times=np.array([t for t, _ in evs], dtype=np.int64),
        )
    return timelines


def build_profiles(timelines: Mapping[str, UserTimeline],
                   cfg: TemporalConfig) -> dict[str, UserTemporalProfile]:
    return {u: user_profile(tl, cfg) for u, tl in timelines.items()}
