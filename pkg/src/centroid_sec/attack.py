"""Optimal poisoning attacks against each learner regime.

Closed-form placement for the infinite-horizon and average-out rules, the
stochastic-model strategy ``f(X) = X + a``, and the greedy attack against the
nearest-out rule: per-cell QCLP solves, the outer argmax over cells, certified
cell pruning, an immune-point safeguard, solution caching with an override for
cached optima about to fall outside the ball, and a normalized variant that
projects cell solutions onto the unit sphere.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from centroid_sec.core import AttackContext, CentroidState, relative_displacement
from centroid_sec.learner import UpdateRule, update_finite
from centroid_sec.qclp import solve_cell

logger = logging.getLogger(__name__)

__all__ = [
    "AttackStalledError",
    "GreedyAttackState",
    "greedy_step",
    "greedy_step_normalized",
    "limited_control_strategy",
    "optimal_attack_point",
    "span_residual",
    "write_attack_trace",
]


class AttackStalledError(RuntimeError):
    """Raised when every remaining cell is immune and the attack cannot proceed."""


def optimal_attack_point(state: CentroidState, ctx: AttackContext) -> np.ndarray:
    """Optimal attack point ``c + r a``: on the ball boundary along ``a``.

    Accepted by the current learner with score exactly ``r``.
    """
    return state.center + state.radius * ctx.direction


def limited_control_strategy(X: np.ndarray, ctx: AttackContext) -> np.ndarray:
    """Optimal stochastic-model strategy ``f(X) = X + a`` (radius-1 scaling)."""
    return np.asarray(X, dtype=np.float64) + ctx.direction


def span_residual(x: np.ndarray, ctx: AttackContext, points: np.ndarray) -> float:
    """Residual norm of ``x`` after projection onto span(a, x_1..x_n).

    An optimal greedy solution admits a representation in this span; the
    residual should vanish (tested against 1e-6).
    """
    basis = np.vstack([ctx.direction[None, :], points]).T  # (d, n+1)
    coeffs, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.linalg.norm(basis @ coeffs - x))


@dataclass
class GreedyAttackState:
    """Persistent bookkeeping of the greedy attack across outer iterations.

    Attributes:
        cached_solutions: Per-cell optimal points from earlier iterations,
            kept while they remain feasible (seeds the pruning threshold and
            powers the override safeguard).
        warm_starts: Per-cell active-set indices for warm-starting solves.
        immune: Boolean mask of cells whose Voronoi region provably misses
            the ball; immune cells are never solved again until their point
            is replaced.
        replaced_history: ``(iteration, replaced_index)`` log.
        trace: Relative displacement after each performed iteration.
        objective_values: Outer-loop objective of each iteration's winner.
        skipped_cells: Number of cells pruned without a solve, per iteration.
        iteration: Number of outer iterations performed.
    """

    cached_solutions: dict[int, np.ndarray] = field(default_factory=dict)
    warm_starts: dict[int, list[int]] = field(default_factory=dict)
    immune: np.ndarray | None = None
    replaced_history: list[tuple[int, int]] = field(default_factory=list)
    trace: list[float] = field(default_factory=list)
    objective_values: list[float] = field(default_factory=list)
    skipped_cells: list[int] = field(default_factory=list)
    iteration: int = 0


def _cell_upper_bounds(
    X: np.ndarray, c: np.ndarray, r: float, a: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Certified per-cell upper bounds on the inner objective, vectorized.

    For every pair (i, j), relaxing cell i to the single bisector constraint
    against j intersected with the ball yields a closed-form maximum of
    ``x . a``; the minimum over j bounds cell i's true optimum. Returns
    ``(U, fully_excluded)`` where ``U[i]`` bounds ``(x - x_i) . a`` over cell
    i inside the ball and ``fully_excluded[i]`` certifies that some bisector
    excludes the whole ball (the cell is immune).
    """
    Xa = X @ a
    Xc = X @ c
    sq = np.sum(X * X, axis=1)
    ball_top = c + r * a
    Xt = X @ ball_top
    # Halfspace j-vs-i: g = 2(x_j - x_i), h = |x_j|^2 - |x_i|^2.
    gc_h = 2.0 * (Xc[None, :] - Xc[:, None]) - (sq[None, :] - sq[:, None])
    pd2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    gnorm = 2.0 * np.sqrt(pd2)
    safe = np.where(gnorm > 0, gnorm, 1.0)
    t = gc_h / safe  # signed distance of ball center to the bisector
    aw = 2.0 * (Xa[None, :] - Xa[:, None]) / safe
    at_norm = np.sqrt(np.maximum(0.0, 1.0 - aw**2))
    ac = float(a @ c)
    top_viol = 2.0 * (Xt[None, :] - Xt[:, None]) - (sq[None, :] - sq[:, None])
    rho = np.sqrt(np.maximum(r * r - t * t, 0.0))
    # Ball top feasible for the halfspace -> bound is the unconstrained ball max.
    bound = np.where(top_viol <= 1e-12, ac + r, ac - t * aw + rho * at_norm)
    bound = np.where(t >= r, -np.inf, bound)  # halfspace excludes the whole ball
    np.fill_diagonal(bound, np.inf)
    U = bound.min(axis=1) - Xa
    return U, np.isneginf(U)


def _refresh_cache(
    attack: GreedyAttackState,
    X: np.ndarray,
    c: np.ndarray,
    r: float,
    a: np.ndarray,
    skip_index: int,
) -> tuple[float, int, np.ndarray]:
    """Drop stale cached solutions; return the best still-valid incumbent."""
    ball_top = c + r * a
    owner = int(np.argmin(np.sum((X - ball_top) ** 2, axis=1)))
    best_value = float((ball_top - X[owner]) @ a)
    best_index, best_point = owner, ball_top
    attack.cached_solutions[owner] = ball_top
    attack.warm_starts.pop(owner, None)
    for i, x_star in list(attack.cached_solutions.items()):
        if i == owner or i == skip_index:
            if i == skip_index:
                attack.cached_solutions.pop(i, None)
            continue
        if np.linalg.norm(x_star - c) > r + 1e-12:
            attack.cached_solutions.pop(i)
            continue
        d2 = np.sum((X - x_star) ** 2, axis=1)
        if d2[i] > d2.min() + 1e-12:
            attack.cached_solutions.pop(i)
            continue
        value = float((x_star - X[i]) @ a)
        if value > best_value:
            best_value, best_index, best_point = value, i, x_star
    return best_value, best_index, best_point


def greedy_step(
    state: CentroidState,
    ctx: AttackContext,
    attack: GreedyAttackState | None = None,
) -> tuple[CentroidState, GreedyAttackState]:
    """One outer iteration of the greedy attack on a nearest-out learner.

    Computes certified upper bounds for every cell, solves cell QCLPs in
    descending-bound order until no cell can beat the incumbent, applies the
    immune-point safeguard (certified-empty or solver-infeasible cells are
    never revisited), overrides the argmax when a cached optimum is about to
    leave the ball, and replaces the winning cell's point through the
    nearest-out update rule.

    Raises:
        AttackStalledError: When every cell is immune.
    """
    if state.working_set is None:
        raise ValueError("greedy attack requires a nearest-out working set")
    if attack is None:
        attack = GreedyAttackState()
    X = state.working_set.points
    n = len(state.working_set)
    c, r, a = state.center, state.radius, ctx.direction
    if attack.immune is None:
        attack.immune = np.zeros(n, dtype=bool)

    U, excluded = _cell_upper_bounds(X, c, r, a)
    attack.immune |= excluded
    if attack.immune.all():
        raise AttackStalledError("all Voronoi cells are immune; attack stalled")
    U[attack.immune] = -np.inf

    best_value, best_index, best_point = _refresh_cache(attack, X, c, r, a, -1)
    sq = np.sum(X * X, axis=1)
    skipped = 0
    for i in np.argsort(-U):
        i = int(i)
        if attack.immune[i] or U[i] <= best_value + 1e-9:
            skipped += 1
            continue
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        G = 2.0 * (X[mask] - X[i])
        h = sq[mask] - sq[i]
        x_star, warm, status = solve_cell(
            G, h, c, r, a, anchor=X[i], warm=attack.warm_starts.get(i)
        )
        if status == "optimal":
            attack.cached_solutions[i] = x_star
            if warm is not None:
                attack.warm_starts[i] = warm
            value = float((x_star - X[i]) @ a)
            if value > best_value:
                best_value, best_index, best_point = value, i, x_star
        elif status == "infeasible":
            attack.immune[i] = True
        else:
            logger.warning("cell %d solve failed; treating as skipped", i)

    # Override: rescue the cached solution most at risk of leaving the ball.
    new_center = c + (best_point - X[best_index]) / n
    worst_index, worst_violation = None, 1e-9
    for j, x_star in attack.cached_solutions.items():
        if j == best_index:
            continue
        violation = float(np.linalg.norm(x_star - new_center)) - r
        if violation > worst_violation and np.linalg.norm(x_star - c) <= r:
            worst_index, worst_violation = j, violation
    if worst_index is not None:
        best_index = worst_index
        best_point = attack.cached_solutions[worst_index]
        best_value = float((best_point - X[worst_index]) @ a)

    # Nudge toward the owner so the nearest-out tie-break removes it.
    nudged = best_point + 1e-9 * (X[best_index] - best_point)
    new_state, _ = update_finite(state, nudged, UpdateRule.NEAREST_OUT)
    # update_finite works on a copy; identify the replaced slot by timestamp.
    replaced = int(np.argmax(new_state.working_set.timestamps))
    if replaced != best_index:
        logger.warning(
            "nearest-out removed index %d instead of intended %d", replaced, best_index
        )
    attack.cached_solutions.pop(replaced, None)
    attack.warm_starts.pop(replaced, None)
    attack.immune[replaced] = False
    attack.replaced_history.append((attack.iteration, replaced))
    attack.objective_values.append(best_value)
    attack.skipped_cells.append(skipped)
    attack.iteration += 1
    attack.trace.append(relative_displacement(new_state, ctx))
    return new_state, attack


def greedy_step_normalized(
    state: CentroidState,
    ctx: AttackContext,
    attack: GreedyAttackState | None = None,
) -> tuple[CentroidState, GreedyAttackState]:
    """Greedy step for unit-norm (normalized-kernel) geometry.

    Each cell solution is projected onto the unit sphere and re-checked for
    cell and ball feasibility; candidates infeasible after projection are
    excluded from the outer argmax. Cell bounds cannot certify pruning after
    projection, so every non-immune cell is solved.

    Raises:
        AttackStalledError: When no candidate survives projection.
    """
    if state.working_set is None:
        raise ValueError("greedy attack requires a nearest-out working set")
    if attack is None:
        attack = GreedyAttackState()
    X = state.working_set.points
    n = len(state.working_set)
    c, r, a = state.center, state.radius, ctx.direction
    if attack.immune is None:
        attack.immune = np.zeros(n, dtype=bool)
    sq = np.sum(X * X, axis=1)
    best_value, best_index, best_point = -np.inf, None, None
    skipped = 0
    for i in range(n):
        if attack.immune[i]:
            skipped += 1
            continue
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        G = 2.0 * (X[mask] - X[i])
        h = sq[mask] - sq[i]
        x_star, warm, status = solve_cell(
            G, h, c, r, a, anchor=X[i], warm=attack.warm_starts.get(i)
        )
        if status == "infeasible":
            attack.immune[i] = True
            continue
        if status != "optimal":
            continue
        if warm is not None:
            attack.warm_starts[i] = warm
        norm = np.linalg.norm(x_star)
        if norm == 0:
            continue
        projected = x_star / norm
        feasible = (
            np.linalg.norm(projected - c) <= r + 1e-7
            and (G @ projected - h <= 1e-7).all()
        )
        if not feasible:
            continue
        value = float((projected - X[i]) @ a)
        if value > best_value:
            best_value, best_index, best_point = value, i, projected
    if best_index is None:
        raise AttackStalledError("no feasible normalized candidate; attack stalled")
    nudged = best_point + 1e-9 * (X[best_index] - best_point)
    new_state, _ = update_finite(state, nudged, UpdateRule.NEAREST_OUT)
    replaced = int(np.argmax(new_state.working_set.timestamps))
    attack.cached_solutions.pop(replaced, None)
    attack.warm_starts.pop(replaced, None)
    attack.immune[replaced] = False
    attack.replaced_history.append((attack.iteration, replaced))
    attack.objective_values.append(best_value)
    attack.skipped_cells.append(skipped)
    attack.iteration += 1
    attack.trace.append(relative_displacement(new_state, ctx))
    return new_state, attack


def write_attack_trace(path: str | Path, attack: GreedyAttackState) -> None:
    """Serialize an attack run to CSV.

    Columns: (iteration, displacement, replaced_index, objective_value,
    skipped_cells).
    """
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["iteration", "displacement", "replaced_index", "objective_value",
             "skipped_cells"]
        )
        for it, ((_, idx), disp, obj, skip) in enumerate(
            zip(attack.replaced_history, attack.trace, attack.objective_values,
                attack.skipped_cells)
        ):
            writer.writerow([it, repr(disp), idx, repr(obj), skip])
