"""Shared builders for the test suite."""

import math

import numpy as np

from timevec.corpus import Dataset, Interaction
from timevec.temporal import UserTemporalProfile, UserTimeline


def ds(*rows):
    return Dataset.from_rows(Interaction(*r) for r in rows)


def random_dataset(rng, n_users=8, n_items=10, n_rows=60, with_rating=False):
    rows = []
    for _ in range(n_rows):
        rows.append(Interaction(
            f"u{rng.integers(0, n_users)}", f"i{rng.integers(0, n_items)}",
            int(rng.integers(0, 10_000)),
            float(rng.integers(1, 6)) if with_rating else None))
    return Dataset.from_rows(rows)


def timeline(times, items=None, user="u"):
    times = np.asarray(times, dtype=np.int64)
    if items is None:
        items = np.arange(len(times), dtype=np.int64)
    return UserTimeline(user, np.asarray(items, dtype=np.int64), times)


def random_timeline(rng, max_events=50):
    n = int(rng.integers(1, max_events + 1))
    gaps = rng.integers(1, 100_000, size=n - 1) if n > 1 else np.empty(0, dtype=np.int64)
    times = np.concatenate(([0], np.cumsum(gaps))).astype(np.int64)
    return timeline(times)


def make_profile(t_cum, t_norm, mu=1000.0, sigma=100.0, sessions=None,
                 degenerate=False, gaps=None, epsilon=1e-6):
    """Hand-built profile with exactly controlled statistics."""
    t_cum = np.asarray(t_cum, dtype=np.float64)
    n = len(t_cum)
    if gaps is None:
        gaps = np.concatenate(([0.0], np.diff(t_cum)))
    if sessions is None:
        sessions = np.zeros(n, dtype=np.int64)
    return UserTemporalProfile(
        user_id="u", valid_intervals=np.empty(0), q1=math.nan, q3=math.nan,
        tau=math.inf if degenerate else 1e9, mu=mu, sigma=sigma,
        clip_bound=math.inf, gaps=np.asarray(gaps, dtype=np.float64),
        t_cum=t_cum, t_norm=np.asarray(t_norm, dtype=np.float64),
        session_of=np.asarray(sessions, dtype=np.int64),
        degenerate=degenerate, epsilon=epsilon)
