"""Training-pair weight regimes.

A (target, context) pair drawn from one user's timeline gets a weight
that scales its gradient during embedding training:

* ``uniform`` - every pair weighs 1 (the static co-occurrence baseline).
* ``disc`` - pairs inside the same user-adaptive session weigh 2, all
  others 1.
* ``cont`` - the mean of a local decay (z-scored temporal distance fed
  through a rational kernel) and a global linear decay over the user's
  normalized timeline.
* ``fixed_threshold`` - session weighting with one global gap threshold
  shared by all users; a minimal stand-in for non-adaptive segmenters.

Weights are symmetric in (i, j) in every mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .temporal import UserTemporalProfile, sessions_from_gaps

MODES = ("uniform", "disc", "cont", "fixed_threshold")


@dataclass(frozen=True)
class WeightConfig:
    """Selects and parameterizes the pair-weighting regime.

    lam is recorded for disc mode and must match the sensitivity the
    temporal profiles were built with (session labels live on the
    profile).  alpha >= 1 sets how gently the local kernel decays;
    w_min in (0, 1) is the decay floor; fixed_tau (seconds) is the
    shared gap threshold of fixed_threshold mode.
    """

    mode: str = "uniform"
    lam: float = 1.5
    alpha: float = 3.0
    w_min: float = 0.3
    fixed_tau: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown weighting mode {self.mode!r}, expected one of {MODES}")
        if self.mode == "cont":
            if not 0.0 < self.w_min < 1.0:
                raise ValueError(f"w_min must be in (0, 1), got {self.w_min}")
            if self.alpha < 1.0:
                raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.mode == "disc" and self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.mode == "fixed_threshold" and (self.fixed_tau is None or self.fixed_tau <= 0):
            raise ValueError("fixed_threshold mode needs fixed_tau > 0")


def disc_weight(i: int, j: int, sessions: np.ndarray) -> float:
    """2 for an intra-session pair, 1 for a cross-session pair."""
    return 2.0 if sessions[i] == sessions[j] else 1.0


def z_score(d: float, mu: float, sigma: float, epsilon: float) -> float:
    """Temporal distance standardized by the user's interval moments.

    Negative raw scores (gaps shorter than the user mean) clamp to 0 so
    near interactions keep full local weight.
    """
    return max(0.0, (d - mu) / (sigma + epsilon))


def local_weight(z: float, alpha: float, w_min: float) -> float:
    """Rational decay kernel: max(w_min, 1 - (z / (z + 1))**alpha)."""
    return max(w_min, 1.0 - (z / (z + 1.0)) ** alpha)


def global_weight(tn_i: float, tn_j: float, w_min: float) -> float:
    """Linear decay in normalized-timeline distance, floored at w_min."""
    return 1.0 - (1.0 - w_min) * abs(tn_i - tn_j)


def unified_weight(w_local: float, w_global: float) -> float:
    """Arithmetic mean of the local and global perspectives."""
    return (w_local + w_global) / 2.0


def mode_sessions(profile: UserTemporalProfile, cfg: WeightConfig) -> Optional[np.ndarray]:
    """Session labels the active mode dispatches on, or None if unused.

    disc uses the profile's adaptive labels (none for degenerate users,
    who fall back to weight 1); fixed_threshold re-segments the raw gaps
    at the shared threshold, which needs no per-user statistics.
    """
    if cfg.mode == "disc" and not profile.degenerate:
        return profile.session_of
    if cfg.mode == "fixed_threshold":
        return sessions_from_gaps(profile.gaps, cfg.fixed_tau)
    return None


def pair_weights(profile: UserTemporalProfile, p: np.ndarray, q: np.ndarray,
                 cfg: WeightConfig, sessions: Optional[np.ndarray] = None) -> np.ndarray:
    """Vectorized weights for position arrays p, q of one timeline.

    ``sessions`` may carry precomputed :func:`mode_sessions` output to
    avoid re-deriving labels in hot loops.
    """
    p = np.asarray(p)
    q = np.asarray(q)
    if cfg.mode == "uniform":
        return np.ones(len(p))
    if cfg.mode in ("disc", "fixed_threshold"):
        if sessions is None:
            sessions = mode_sessions(profile, cfg)
        if sessions is None:  # degenerate user in disc mode
            return np.ones(len(p))
        return np.where(sessions[p] == sessions[q], 2.0, 1.0)
    # cont
    w_global = 1.0 - (1.0 - cfg.w_min) * np.abs(profile.t_norm[p] - profile.t_norm[q])
    if profile.degenerate:  # local statistics unavailable, global decay alone
        return w_global
    d = np.abs(profile.t_cum[p] - profile.t_cum[q])
    z = np.maximum(0.0, (d - profile.mu) / (profile.sigma + profile.epsilon))
    w_local = np.maximum(cfg.w_min, 1.0 - (z / (z + 1.0)) ** cfg.alpha)
    return (w_local + w_global) / 2.0


def pair_weight(profile: UserTemporalProfile, i: int, j: int, cfg: WeightConfig) -> float:
    """Weight of the (target=i, context=j) pair under the active regime."""
    return float(pair_weights(profile, np.array([i]), np.array([j]), cfg)[0])
