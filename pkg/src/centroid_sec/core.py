"""Shared geometric primitives for the centroid learner and its attacks.

Points are plain 1-D ``numpy`` float arrays; the helpers here validate them and
house the learner's mutable state (center, radius, working set), the attack
context (attack point, unit direction, initial center), the relative
displacement measure, and a splittable deterministic randomness contract used
by every stochastic component.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "AttackContext",
    "CentroidState",
    "RandomSource",
    "WorkingSet",
    "anomaly_score",
    "as_point",
    "relative_displacement",
]


def as_point(x: np.ndarray | list[float] | tuple[float, ...]) -> np.ndarray:
    """Validate and convert ``x`` to a 1-D float64 point.

    Raises:
        ValueError: If ``x`` is not 1-D or contains NaN/Inf.
    """
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"point must be 1-D, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point contains non-finite coordinates")
    return p


def _check_same_dim(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")


@dataclass(frozen=True)
class RandomSource:
    """Deterministic, splittable randomness handle.

    One independent stream per Monte Carlo repetition: identical
    ``(seed, stream_id)`` pairs reproduce identical draw sequences bit-exactly.

    Attributes:
        seed: Base 64-bit seed shared by an experiment.
        stream_id: Index of the independent stream (one per repetition).
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def stream(self, stream_id: int) -> RandomSource:
        """Return a sibling source with the same seed and a new stream id."""
        return RandomSource(seed=self.seed, stream_id=stream_id)


@dataclass
class WorkingSet:
    """The ``n`` stored points defining a finite-horizon centroid.

    Attributes:
        points: Array of shape (n, d); row ``i`` is stored point ``x_i``.
        timestamps: Insertion counters, strictly increasing with insertion
            order; used by the oldest-out rule.
        next_timestamp: Counter assigned to the next inserted point.
    """

    points: np.ndarray
    timestamps: np.ndarray
    next_timestamp: int = 0

    @classmethod
    def from_points(cls, points: np.ndarray) -> WorkingSet:
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError(f"working set must be a nonempty (n, d) array, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("working set contains non-finite coordinates")
        n = pts.shape[0]
        return cls(points=pts, timestamps=np.arange(n, dtype=np.int64), next_timestamp=n)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def replace_point(self, index: int, x: np.ndarray) -> np.ndarray:
        """Overwrite stored point ``index`` with ``x``; returns the removed point."""
        removed = self.points[index].copy()
        self.points[index] = x
        self.timestamps[index] = self.next_timestamp
        self.next_timestamp += 1
        return removed

    def copy(self) -> WorkingSet:
        return WorkingSet(
            points=self.points.copy(),
            timestamps=self.timestamps.copy(),
            next_timestamp=self.next_timestamp,
        )


@dataclass
class CentroidState:
    """Complete mutable state of a centroid learner.

    Attributes:
        center: Current center ``c``.
        radius: Acceptance radius ``r`` (> 0); a point is flagged anomalous
            when its distance to ``center`` exceeds ``radius``.
        window: Horizon size ``n`` (the effective averaging window).
        working_set: The stored points, present only for update rules that
            need them (oldest/random/nearest-out).
    """

    center: np.ndarray
    radius: float
    window: int
    working_set: WorkingSet | None = None

    def __post_init__(self) -> None:
        self.center = as_point(self.center)
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.working_set is not None:
            if len(self.working_set) != self.window:
                raise ValueError(
                    f"working set size {len(self.working_set)} != window {self.window}"
                )
            _check_same_dim(self.center, self.working_set.points[0])

    @classmethod
    def from_working_set(cls, points: np.ndarray, radius: float) -> CentroidState:
        """Build a finite-horizon state whose center is the mean of ``points``."""
        ws = WorkingSet.from_points(points)
        return cls(center=ws.points.mean(axis=0), radius=float(radius),
                   window=len(ws), working_set=ws)

    def recompute_center(self) -> np.ndarray:
        """Audit path: recompute the center from the working set."""
        if self.working_set is None:
            raise ValueError("no working set to recompute from")
        return self.working_set.points.mean(axis=0)

    def center_drift(self) -> float:
        """Distance between the stored center and a full recomputation."""
        return float(np.linalg.norm(self.center - self.recompute_center()))

    def copy(self) -> CentroidState:
        ws = None if self.working_set is None else self.working_set.copy()
        return replace(self, center=self.center.copy(), working_set=ws)


@dataclass(frozen=True)
class AttackContext:
    """Fixed attack geometry: direction, initial center, optional target point.

    Attributes:
        direction: Unit attack direction ``a``.
        initial_center: Center ``c_0`` at attack start (displacement origin).
        attack_point: Optional target point ``A`` the attacker wants accepted.
    """

    direction: np.ndarray
    initial_center: np.ndarray
    attack_point: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", as_point(self.direction))
        object.__setattr__(self, "initial_center", as_point(self.initial_center))
        _check_same_dim(self.direction, self.initial_center)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must be unit norm, got |a| = {norm!r}")
        if self.attack_point is not None:
            object.__setattr__(self, "attack_point", as_point(self.attack_point))
            _check_same_dim(self.direction, self.attack_point)

    @classmethod
    def from_attack_point(cls, attack_point: np.ndarray,
                          initial_center: np.ndarray) -> AttackContext:
        """Derive ``a = (A - c_0) / ||A - c_0||`` from a target point."""
        a_pt = as_point(attack_point)
        c0 = as_point(initial_center)
        delta = a_pt - c0
        norm = np.linalg.norm(delta)
        if norm == 0:
            raise ValueError("attack point coincides with the initial center")
        return cls(direction=delta / norm, initial_center=c0, attack_point=a_pt)


def anomaly_score(state: CentroidState, x: np.ndarray) -> float:
    """Distance of ``x`` to the center; anomalous iff the score exceeds the radius."""
    x = as_point(x)
    _check_same_dim(state.center, x)
    return float(np.linalg.norm(x - state.center))


def relative_displacement(state: CentroidState, ctx: AttackContext) -> float:
    """Projection of the center shift onto the attack direction, in radii.

    Returns ``((c - c_0) . a) / r``.
    """
    if not state.radius > 0:
        raise ValueError("radius must be > 0")
    return float((state.center - ctx.initial_center) @ ctx.direction / state.radius)
