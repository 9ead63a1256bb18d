"""The online centroid learner and its update rules.

Covers scoring-driven acceptance, the infinite-horizon update, the four
finite-horizon outgoing-point rules (average/oldest/random/nearest-out),
empirical radius calibration, and the false-positive-protected learner that
resets to a safe state when its estimated false-positive rate exceeds the
configured cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from centroid_sec.core import (
    CentroidState,
    RandomSource,
    anomaly_score,
    as_point,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ProtectedLearnerState",
    "UpdateRule",
    "estimate_fp_rate",
    "protected_step",
    "radius_from_quantile",
    "update_finite",
    "update_infinite",
]


class UpdateRule(Enum):
    """Which stored point an accepted new point displaces."""

    INFINITE = "infinite"
    AVERAGE_OUT = "average_out"
    OLDEST_OUT = "oldest_out"
    RANDOM_OUT = "random_out"
    NEAREST_OUT = "nearest_out"


_NEEDS_WORKING_SET = {UpdateRule.OLDEST_OUT, UpdateRule.RANDOM_OUT, UpdateRule.NEAREST_OUT}


def update_infinite(state: CentroidState, x: np.ndarray) -> CentroidState:
    """Infinite-horizon update: ``c' = c + (x - c)/(n + 1)`` and ``n' = n + 1``.

    Algebraically identical to the running mean ``(n c + x)/(n + 1)``; the
    incremental form accumulates less floating-point error along long runs.
    """
    x = as_point(x)
    new = state.copy()
    new.center = state.center + (x - state.center) / (state.window + 1)
    new.window = state.window + 1
    return new


def update_finite(
    state: CentroidState,
    x: np.ndarray,
    rule: UpdateRule,
    rng: RandomSource | np.random.Generator | None = None,
) -> tuple[CentroidState, np.ndarray]:
    """Finite-horizon update ``c' = c + (x - x_removed)/n``.

    The removed point is chosen by ``rule``: the center itself (average-out,
    needs no working set), the oldest timestamp, a uniformly random stored
    point, or the nearest neighbor of ``x`` (ties broken by lowest index).

    Returns:
        ``(new_state, removed_point)``. The window size never changes.
    """
    x = as_point(x)
    new = state.copy()
    n = state.window
    if rule is UpdateRule.INFINITE:
        raise ValueError("update_finite does not handle the infinite rule")
    if rule is UpdateRule.AVERAGE_OUT:
        removed = state.center.copy()
        new.center = state.center + (x - removed) / n
        if new.working_set is not None:
            # The working set no longer backs the center under average-out.
            new.working_set = None
        return new, removed

    ws = new.working_set
    if ws is None:
        raise ValueError(f"update rule {rule.value} requires a working set")
    if rule is UpdateRule.OLDEST_OUT:
        index = int(np.argmin(ws.timestamps))
    elif rule is UpdateRule.RANDOM_OUT:
        if rng is None:
            raise ValueError("random_out requires a random source")
        gen = rng.generator() if isinstance(rng, RandomSource) else rng
        index = int(gen.integers(n))
    else:  # NEAREST_OUT
        d2 = np.sum((ws.points - x) ** 2, axis=1)
        index = int(np.argmin(d2))  # argmin takes the lowest index on ties
    removed = ws.replace_point(index, x)
    new.center = state.center + (x - removed) / n
    return new, removed


def radius_from_quantile(
    points: np.ndarray, center: np.ndarray, alpha: float
) -> float:
    """Radius at the empirical ``(1 - alpha)``-quantile of distances to center.

    Linear interpolation between order statistics, so roughly an ``alpha``
    fraction of the calibration points falls outside the returned radius.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a nonempty (n, d) array")
    dists = np.linalg.norm(pts - as_point(center), axis=1)
    return float(np.quantile(dists, 1.0 - alpha))


def estimate_fp_rate(state: CentroidState, holdout: np.ndarray) -> float:
    """Fraction of holdout points rejected (score > radius) by ``state``."""
    pts = np.asarray(holdout, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("holdout must be a nonempty (n, d) array")
    dists = np.linalg.norm(pts - state.center, axis=1)
    return float(np.mean(dists > state.radius))


@dataclass
class ProtectedLearnerState:
    """Centroid learner wrapped with the false-positive protection mechanism.

    Innocuous points are applied only when they fall inside the current
    acceptance ball; whenever the estimated false-positive rate on the holdout
    exceeds ``alpha``, the learner resets to ``safe_state`` and switches its
    online update off.

    Attributes:
        state: Current centroid state.
        alpha: Maximum tolerated false-positive rate.
        safe_state: Snapshot restored on an alpha breach.
        holdout: Innocuous sample used to estimate the false-positive rate.
        frozen: True after a reset while the online update is switched off.
        freeze_steps: How many steps updates stay off after a reset; ``None``
            keeps them off for the remainder of the run.
        reset_count: Number of alpha breaches so far.
    """

    state: CentroidState
    alpha: float
    safe_state: CentroidState
    holdout: np.ndarray
    frozen: bool = False
    freeze_steps: int | None = None
    reset_count: int = 0
    _thaw_countdown: int = field(default=0, repr=False)

    @classmethod
    def create(
        cls,
        state: CentroidState,
        alpha: float,
        holdout: np.ndarray,
        freeze_steps: int | None = None,
    ) -> ProtectedLearnerState:
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {alpha}")
        return cls(
            state=state.copy(),
            alpha=alpha,
            safe_state=state.copy(),
            holdout=np.asarray(holdout, dtype=np.float64),
            freeze_steps=freeze_steps,
        )


def protected_step(
    p: ProtectedLearnerState,
    incoming: np.ndarray,
    is_adversarial: bool,
    check_fp: bool = True,
) -> ProtectedLearnerState:
    """Advance the protected learner by one traffic point (in place).

    Adversarial points are applied unconditionally (the attacker only emits
    accepted points); innocuous points are applied only when they score inside
    the radius. Afterwards (when ``check_fp``), an estimated false-positive
    rate above ``alpha`` resets the learner to its safe state and freezes the
    online update.

    Returns:
        The same ``ProtectedLearnerState``, mutated, for chaining.
    """
    incoming = as_point(incoming)
    if p.frozen:
        if p.freeze_steps is not None:
            p._thaw_countdown -= 1
            if p._thaw_countdown <= 0:
                p.frozen = False
        if p.frozen:
            return p
    accept = is_adversarial or anomaly_score(p.state, incoming) <= p.state.radius
    if accept:
        p.state, _ = update_finite(p.state, incoming, UpdateRule.AVERAGE_OUT)
    if check_fp and estimate_fp_rate(p.state, p.holdout) > p.alpha:
        logger.debug("false-positive cap %.4g breached; resetting learner", p.alpha)
        p.state = p.safe_state.copy()
        p.frozen = True
        p.reset_count += 1
        p._thaw_countdown = p.freeze_steps if p.freeze_steps is not None else 0
    return p
