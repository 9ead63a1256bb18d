"""Solver for the greedy attack's inner problem.

Maximizes a linear objective over the intersection of a polyhedron (the
Voronoi-cell inequalities) and a ball — linear programming with a single
quadratic constraint. The solve pipeline is:

1. certified quick checks (vacuous/unsatisfiable constraints, ball-top
   shortcut);
2. in two dimensions, exact vertex enumeration over a growing nearest-first
   constraint subset, verified against the full constraint set (so the
   relaxation is certified);
3. otherwise a warm-startable active-set method that exploits the closed form
   of the sphere-restricted subproblem, with a conic interior-point fallback
   (Clarabel) when the active set fails to converge.

Also provides the auxiliary pruning QP used by the attack's outer loop and a
dense-grid brute-force oracle for low-dimensional verification.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

from centroid_sec.core import WorkingSet

logger = logging.getLogger(__name__)

__all__ = [
    "QclpProblem",
    "QclpSolution",
    "aux_qp_prune",
    "brute_force_oracle",
    "build_cell_problem",
    "solve_qclp",
]

FEASIBILITY_TOL = 1e-7
ITERATION_CAP = 10_000

_clarabel_settings = clarabel.DefaultSettings()
_clarabel_settings.verbose = False


@dataclass
class QclpProblem:
    """``max (x - offset) . direction`` s.t. ``G x <= h`` and ``|x - ball_center| <= ball_radius``.

    Attributes:
        direction: Objective direction ``a``.
        G: Linear constraint normals, shape (m, d).
        h: Linear constraint offsets, shape (m,).
        ball_center: Center of the quadratic (ball) constraint.
        ball_radius: Radius of the ball constraint (> 0).
        offset: Objective offset ``x_i`` (only shifts the reported value).
        anchor: Optional interior-ish point used to order constraints by
            relevance for the subset relaxation (the cell owner ``x_i``).
        degenerate: True when vacuous duplicate-point constraints were dropped
            during construction.
    """

    direction: np.ndarray
    G: np.ndarray
    h: np.ndarray
    ball_center: np.ndarray
    ball_radius: float
    offset: np.ndarray | None = None
    anchor: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self) -> None:
        self.direction = np.asarray(self.direction, dtype=np.float64)
        self.G = np.asarray(self.G, dtype=np.float64).reshape(-1, self.direction.size)
        self.h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        self.ball_center = np.asarray(self.ball_center, dtype=np.float64)
        if not self.ball_radius > 0:
            raise ValueError(f"ball radius must be > 0, got {self.ball_radius}")
        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.h))):
            raise ValueError("constraints contain non-finite values")


@dataclass
class QclpSolution:
    """Result of a QCLP solve.

    Attributes:
        point: Optimal point (``None`` unless status is ``optimal``).
        objective_value: ``(point - offset) . direction`` at the optimum.
        status: ``optimal``, ``infeasible``, or ``failed`` (non-converged —
            distinct from infeasible).
        warm_start: Active constraint indices, reusable to warm-start a
            subsequent solve of a nearby problem.
    """

    point: np.ndarray | None
    objective_value: float
    status: str
    warm_start: list[int] | None = None


def build_cell_problem(
    working_set: WorkingSet, i: int, direction: np.ndarray, radius: float
) -> QclpProblem:
    """Inner problem of the greedy attack for the cell owned by point ``i``.

    Constraints ``2 (x_j - x_i) . x <= x_j.x_j - x_i.x_i`` for all ``j != i``
    (``x`` stays in the Voronoi cell of ``x_i``) plus the acceptance ball
    around the working-set mean; objective ``(x - x_i) . direction``.
    Vacuous constraints from exact duplicate points are dropped and flagged.
    """
    X = working_set.points
    n = len(working_set)
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for working set of size {n}")
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    G = 2.0 * (X[mask] - X[i])
    sq = np.sum(X * X, axis=1)
    h = sq[mask] - sq[i]
    vacuous = np.linalg.norm(G, axis=1) <= 1e-12
    degenerate = bool(vacuous.any())
    if degenerate:
        G, h = G[~vacuous], h[~vacuous]
    return QclpProblem(
        direction=np.asarray(direction, dtype=np.float64),
        G=G,
        h=h,
        ball_center=X.mean(axis=0),
        ball_radius=float(radius),
        offset=X[i].copy(),
        anchor=X[i].copy(),
        degenerate=degenerate,
    )


def _clarabel_solve(
    G: np.ndarray, h: np.ndarray, cb: np.ndarray, r: float, a: np.ndarray
) -> tuple[np.ndarray | None, str]:
    """Conic interior-point solve: nonnegative cone + second-order cone."""
    d = cb.size
    m = G.shape[0]
    A = sp.vstack(
        [sp.csc_matrix(G), sp.csc_matrix((1, d)), -sp.identity(d, format="csc")],
        format="csc",
    )
    b = np.concatenate([h, [r], -cb])
    cones = [clarabel.NonnegativeConeT(m), clarabel.SecondOrderConeT(d + 1)]
    solver = clarabel.DefaultSolver(
        sp.csc_matrix((d, d)), -a, A, b, cones, _clarabel_settings
    )
    sol = solver.solve()
    status = str(sol.status)
    if status == "Solved":
        return np.asarray(sol.x), "optimal"
    if "PrimalInfeasible" in status:
        return None, "infeasible"
    return None, "failed"


def _active_set(
    G: np.ndarray,
    h: np.ndarray,
    cb: np.ndarray,
    r: float,
    a: np.ndarray,
    warm: list[int] | None = None,
    max_iter: int = 100,
    tol: float = 1e-9,
) -> tuple[np.ndarray | None, list[int], str]:
    """Active-set method for the ball-constrained LP.

    With working set ``W`` active, the sphere-restricted subproblem has the
    closed form ``x = xc + (rho / |at|) at`` where ``xc`` is the projection of
    the ball center onto the active affine subspace and ``at`` the projected
    objective. Violated constraints are added (or swapped in at a vertex);
    constraints with negative multipliers are dropped; visited working sets
    are tracked to cut cycles. Returns ``(x, W, status)`` with status ``ok``
    or ``fail`` (the caller falls back to the interior-point solver).
    """
    m, d = G.shape
    W = [] if warm is None else [j for j in warm if j < m][:d]
    seen: set[tuple[int, ...]] = set()
    for _ in range(max_iter):
        vertex = False
        if not W:
            x = cb + r * a
            mu = np.empty(0)
        else:
            GA, hA = G[W], h[W]
            M = GA @ GA.T
            try:
                s1 = np.linalg.solve(M, GA @ cb - hA)
                s2 = np.linalg.solve(M, GA @ a)
            except np.linalg.LinAlgError:
                if len(W) > 1:
                    W.pop()
                    continue
                return None, W, "fail"
            xc = cb - GA.T @ s1
            at = a - GA.T @ s2
            rho2 = r * r - float(np.sum((cb - xc) ** 2))
            if rho2 < -1e-12 * r * r:
                # Active affine subspace misses the ball: retreat.
                if len(W) > 1:
                    W.pop(int(np.argmax(np.abs(s1))))
                    continue
                return None, W, "fail"
            nat = float(np.linalg.norm(at))
            rho = np.sqrt(max(rho2, 0.0))
            if nat > 1e-10 and rho > 1e-12:
                x = xc + (rho / nat) * at
                two_beta = nat / rho
                mu = np.linalg.solve(M, GA @ (a - two_beta * (x - cb)))
            else:
                x = xc
                mu = s2
                vertex = True
                if nat > 1e-7 and len(W) < d:
                    return None, W, "fail"
        viol = G @ x - h
        jmax = int(np.argmax(viol))
        if viol[jmax] > tol * max(1.0, abs(h[jmax])):
            if jmax in W:
                return None, W, "fail"
            if len(W) == d or vertex:
                if not W:
                    return None, W, "fail"
                W[int(np.argmin(mu)) if mu.size else 0] = jmax
            else:
                W.append(jmax)
            key = tuple(sorted(W))
            if key in seen:
                return None, W, "fail"
            seen.add(key)
            continue
        if mu.size and mu.min() < -1e-9:
            W.pop(int(np.argmin(mu)))
            key = tuple(sorted(W))
            if key in seen:
                return None, W, "fail"
            seen.add(key)
            continue
        return x, W, "ok"
    return None, W, "fail"


def _enum_2d(
    G: np.ndarray, h: np.ndarray, cb: np.ndarray, r: float, a: np.ndarray,
    tol: float = 1e-9,
) -> tuple[np.ndarray | None, str]:
    """Exact 2-D solve by enumerating all candidate optima.

    Candidates: the ball top along ``a``, every line-circle intersection, and
    every pairwise line intersection inside the ball. The best feasible
    candidate is the global optimum of the convex program.
    """
    gn = np.linalg.norm(G, axis=1)
    active = G @ cb + r * gn > h - tol
    Gk, hk = G[active], h[active]
    candidates: list[np.ndarray] = [(cb + r * a)[None, :]]
    if len(Gk):
        gkn = np.linalg.norm(Gk, axis=1)
        ok = gkn > 1e-12
        t = (hk[ok] - Gk[ok] @ cb) / gkn[ok]
        cut = np.abs(t) <= r
        Gi, ti, gi = Gk[ok][cut], t[cut], gkn[ok][cut]
        if len(Gi):
            u = Gi / gi[:, None]
            w = np.stack([-u[:, 1], u[:, 0]], axis=1)
            s = np.sqrt(np.maximum(r * r - ti * ti, 0.0))
            base = cb + ti[:, None] * u
            candidates.append(base + s[:, None] * w)
            candidates.append(base - s[:, None] * w)
            if len(Gi) > 1:
                hc = hk[ok][cut]
                ii, jj = np.triu_indices(len(Gi), 1)
                A1, A2 = Gi[ii], Gi[jj]
                det = A1[:, 0] * A2[:, 1] - A1[:, 1] * A2[:, 0]
                nz = np.abs(det) > 1e-12
                A1, A2 = A1[nz], A2[nz]
                b1, b2, det = hc[ii][nz], hc[jj][nz], det[nz]
                P = np.stack(
                    [(b1 * A2[:, 1] - b2 * A1[:, 1]) / det,
                     (A1[:, 0] * b2 - A2[:, 0] * b1) / det],
                    axis=1,
                )
                inside = np.sum((P - cb) ** 2, axis=1) <= (r + tol) ** 2
                if inside.any():
                    candidates.append(P[inside])
    C = np.vstack(candidates)
    feasible = (C @ G.T - h <= tol * np.maximum(1.0, np.abs(h))).all(axis=1)
    feasible &= np.sum((C - cb) ** 2, axis=1) <= r * r + tol
    if not feasible.any():
        return None, "infeasible"
    Cf = C[feasible]
    return Cf[int(np.argmax(Cf @ a))], "optimal"


def _subset_solve_2d(
    G: np.ndarray, h: np.ndarray, cb: np.ndarray, r: float, a: np.ndarray,
    anchor: np.ndarray, initial_k: int = 12,
) -> tuple[np.ndarray | None, str]:
    """Certified subset relaxation around ``anchor`` for the 2-D enumeration.

    Solves with the ``K`` constraints whose boundaries are closest to the
    anchor, verifies the optimum against the full set, and doubles ``K`` on
    violation. A relaxation that is infeasible certifies full infeasibility.
    """
    m = len(h)
    if m == 0:
        return cb + r * a, "optimal"
    gn = np.linalg.norm(G, axis=1)
    gn = np.where(gn == 0, 1.0, gn)
    order = np.argsort((h - G @ anchor) / gn)
    K = min(initial_k, m)
    while True:
        S = order[:K]
        x, status = _enum_2d(G[S], h[S], cb, r, a)
        if status == "optimal":
            viol = G @ x - h
            jmax = int(np.argmax(viol))
            if viol[jmax] <= 1e-9 * max(1.0, abs(h[jmax])):
                return x, "optimal"
        elif status == "infeasible":
            return None, "infeasible"
        if K >= m:
            return x, status
        K = min(2 * K, m)


def _check_residuals(p: QclpProblem, x: np.ndarray, tol: float) -> bool:
    lin = float((p.G @ x - p.h).max()) if len(p.h) else 0.0
    ball = float(np.linalg.norm(x - p.ball_center)) - p.ball_radius
    return lin <= tol and ball <= tol


def solve_qclp(p: QclpProblem, tol: float = 1e-6) -> QclpSolution:
    """Solve a QCLP to relative optimality ``tol``, feasibility 1e-7.

    Returns status ``optimal`` with a certified-feasible point, ``infeasible``
    when the polyhedron-ball intersection is provably empty, or ``failed``
    when no method converged (distinct from infeasible).
    """
    a, G, h = p.direction, p.G, p.h
    cb, r = p.ball_center, p.ball_radius
    offset = p.offset if p.offset is not None else np.zeros_like(cb)

    def _solution(x: np.ndarray, warm: list[int] | None = None) -> QclpSolution:
        return QclpSolution(
            point=x,
            objective_value=float((x - offset) @ a),
            status="optimal",
            warm_start=warm,
        )

    if len(h):
        gnorm = np.linalg.norm(G, axis=1)
        vacuous = gnorm <= 1e-12
        if vacuous.any():
            if np.any(h[vacuous] < -FEASIBILITY_TOL):
                return QclpSolution(None, -np.inf, "infeasible")
            G, h, gnorm = G[~vacuous], h[~vacuous], gnorm[~vacuous]
        # A constraint whose minimum over the ball exceeds h is unsatisfiable.
        if len(h) and np.any(G @ cb - r * gnorm > h + FEASIBILITY_TOL):
            return QclpSolution(None, -np.inf, "infeasible")
    ball_top = cb + r * a
    if len(h) == 0 or np.all(G @ ball_top - h <= 1e-9 * np.maximum(1.0, np.abs(h))):
        return _solution(ball_top, warm=[])

    if cb.size == 2:
        anchor = p.anchor if p.anchor is not None else cb
        x, status = _subset_solve_2d(G, h, cb, r, a, anchor)
        if status == "optimal" and _check_residuals(p, x, FEASIBILITY_TOL):
            return _solution(x)
        if status == "infeasible":
            return QclpSolution(None, -np.inf, "infeasible")
        return QclpSolution(None, -np.inf, "failed")

    x, W, status = _active_set(G, h, cb, r, a)
    if status == "ok" and _check_residuals(p, x, FEASIBILITY_TOL):
        return _solution(x, warm=W)
    x, status = _clarabel_solve(G, h, cb, r, a)
    if status == "optimal":
        if _check_residuals(p, x, FEASIBILITY_TOL):
            return _solution(x)
        logger.warning("interior-point solution failed the residual check")
        return QclpSolution(None, -np.inf, "failed")
    return QclpSolution(None, -np.inf, status)


def solve_cell(
    G: np.ndarray,
    h: np.ndarray,
    cb: np.ndarray,
    r: float,
    a: np.ndarray,
    anchor: np.ndarray,
    warm: list[int] | None = None,
) -> tuple[np.ndarray | None, list[int] | None, str]:
    """Low-overhead solve path for the attack engine's hot loop.

    Same pipeline as :func:`solve_qclp` minus object construction; returns
    ``(x, warm_start, status)``.
    """
    if G.shape[0] == 0:
        return cb + r * a, [], "optimal"
    if cb.size == 2:
        x, status = _subset_solve_2d(G, h, cb, r, a, anchor)
        return x, None, status
    x, W, status = _active_set(G, h, cb, r, a, warm=warm)
    if status == "ok":
        return x, W, "optimal"
    x, status = _clarabel_solve(G, h, cb, r, a)
    return x, None, status


def aux_qp_prune(
    working_set: WorkingSet,
    i: int,
    direction: np.ndarray,
    best_so_far: float,
    radius: float,
) -> tuple[bool, float]:
    """Pruning test for cell ``i``: can it beat ``best_so_far`` inside the ball?

    Solves the auxiliary QP ``min |x - mean|`` over the cell restricted to the
    improving halfspace ``(x - x_i) . a >= best_so_far``. If the minimum
    exceeds the radius (or the restriction is infeasible), no improving point
    of the cell lies inside the ball and the full QCLP can be skipped.

    Returns:
        ``(skip, bound)`` where ``bound`` is the minimal distance of the
        improving region from the mean (``inf`` when the region is empty).
    """
    if not np.isfinite(best_so_far) and best_so_far > 0:
        raise ValueError("best_so_far must be finite or -inf")
    cell = build_cell_problem(working_set, i, direction, radius)
    a = cell.direction
    G = np.vstack([cell.G, -a[None, :]])
    h = np.concatenate([cell.h, [-(best_so_far + float(cell.offset @ a))]])
    if not np.isfinite(best_so_far):  # vacuous restriction
        G, h = cell.G, cell.h
    d = cell.ball_center.size
    m = G.shape[0]
    P = sp.identity(d, format="csc")
    q = -cell.ball_center
    A = sp.csc_matrix(G)
    cones = [clarabel.NonnegativeConeT(m)]
    solver = clarabel.DefaultSolver(P, q, A, h, cones, _clarabel_settings)
    sol = solver.solve()
    status = str(sol.status)
    if "PrimalInfeasible" in status:
        return True, np.inf
    if status != "Solved":
        return False, 0.0  # non-converged: never skip on an uncertified bound
    x = np.asarray(sol.x)
    bound = float(np.linalg.norm(x - cell.ball_center))
    return bound > radius + FEASIBILITY_TOL, bound


def brute_force_oracle(p: QclpProblem, angle_steps: int = 2000) -> QclpSolution:
    """Dense-grid reference solver for dimension 2.

    Two-part search, independent of the main solver's machinery:

    1. a dense polar (angle, radius) area grid over the ball, which settles
       feasibility and seeds the incumbent;
    2. dense 1-D grids along every boundary curve of the feasible set (each
       constraint line's chord through the ball, and the ball arc itself),
       each refined by a shrinking-step 1-D pattern search. The optimum of a
       linear objective over this convex set lies on its boundary, and a 1-D
       walk along a boundary curve has no curvature trap, so the refinement
       reaches ~1e-8 accuracy.
    """
    d = p.ball_center.size
    if d != 2:
        raise ValueError(f"oracle supports dimension 2, got {d}")
    offset = p.offset if p.offset is not None else np.zeros_like(p.ball_center)
    cb, r = p.ball_center, p.ball_radius

    def _best(pts: np.ndarray):
        """Feasibility-filtered argmax of the objective over candidate points."""
        feasible = np.sum((pts - cb) ** 2, axis=1) <= r * r * (1 + 1e-9)
        if len(p.h):
            feasible &= (pts @ p.G.T - p.h <= 1e-9 * np.maximum(1.0, np.abs(p.h))).all(
                axis=1
            )
        if not feasible.any():
            return None, -np.inf
        vals = (pts[feasible] - offset) @ p.direction
        best = int(np.argmax(vals))
        return pts[feasible][best], float(vals[best])

    theta = np.arange(angle_steps) * (2.0 * np.pi / angle_steps)
    rho = np.linspace(0.0, r, 401)
    tt, rr = np.meshgrid(theta, rho, indexing="ij")
    area = cb + np.stack(
        [rr.ravel() * np.cos(tt.ravel()), rr.ravel() * np.sin(tt.ravel())], axis=1
    )
    x, value = _best(area)
    if x is None:
        return QclpSolution(None, -np.inf, "infeasible")

    def _refine_1d(point_of, t0: float, span: float):
        """Shrinking-window pattern search along a single boundary curve."""
        t_best, v_best = t0, _best(point_of(np.array([t0])))[1]
        step = span / angle_steps
        win = np.arange(-5.0, 6.0)
        while step > 1e-9 * max(span, 1.0):
            for _ in range(ITERATION_CAP):
                cand = point_of(t_best + win * step)
                xc, vc = _best(cand)
                if xc is None or vc <= v_best:
                    break
                v_best = vc
                t_best = t_best + win[
                    int(np.argmin(np.sum((cand - xc) ** 2, axis=1)))
                ] * step
            step /= 5.0
        return point_of(np.array([t_best]))[0], v_best

    # Ball arc.
    def arc(t: np.ndarray) -> np.ndarray:
        return cb + r * np.stack([np.cos(t), np.sin(t)], axis=1)

    ts = np.arange(2 * angle_steps) * (np.pi / angle_steps)
    xa, va = _best(arc(ts))
    if xa is not None:
        t0 = float(ts[int(np.argmin(np.sum((arc(ts) - xa) ** 2, axis=1)))])
        xa, va = _refine_1d(arc, t0, 2.0 * np.pi)
        if va > value:
            x, value = xa, va
    # Each constraint line's chord through the ball.
    for j in range(len(p.h)):
        g, hj = p.G[j], p.h[j]
        gn = float(np.linalg.norm(g))
        if gn <= 1e-12:
            continue
        x0 = cb + g * (hj - g @ cb) / (gn * gn)
        dist = float(np.linalg.norm(x0 - cb))
        if dist > r:
            continue
        u = np.array([-g[1], g[0]]) / gn
        half = np.sqrt(max(r * r - dist * dist, 0.0))

        def line(t: np.ndarray, x0=x0, u=u, half=half) -> np.ndarray:
            return x0 + np.clip(t, -half, half)[:, None] * u

        ts = np.linspace(-half, half, 2 * angle_steps)
        xl, vl = _best(line(ts))
        if xl is None:
            continue
        t0 = float(ts[int(np.argmin(np.sum((line(ts) - xl) ** 2, axis=1)))])
        xl, vl = _refine_1d(line, t0, 2.0 * half + 1e-30)
        if vl > value:
            x, value = xl, vl
    return QclpSolution(point=x, objective_value=value, status="optimal")
