"""Monte Carlo harness: stochastic learning processes vs. closed-form theory.

Simulates the limited-control process (every innocuous point accepted), the
false-positive-protected process (ball-gated innocuous points, alpha-breach
resets), the Gaussian-data greedy-attack experiment, the false-positive
sensitivity sweep, and the critical-traffic-ratio sweep. Repetitions use
independent deterministic random streams; aggregation reduces over streams in
order, so identical configurations reproduce bit-identical traces.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from centroid_sec.attack import greedy_step, span_residual
from centroid_sec.bounds import MixModel, limited_moments, protected_moments
from centroid_sec.core import AttackContext, CentroidState, RandomSource
from centroid_sec.kernels import (
    KernelConfig,
    extract_spectrum,
    kernel_matrix,
    kernel_pca,
    synth_corpus,
)
from centroid_sec.learner import radius_from_quantile

__all__ = [
    "SimConfig",
    "Trace",
    "run_axiom6",
    "run_axiom7",
    "run_fp_sensitivity",
    "run_greedy_gaussian",
    "run_nu_sweep",
    "write_summary",
]

INNOCUOUS_SOURCES = ("uniform_ball", "uniform_circle", "uniform_sphere", "corpus_embedding")


@dataclass
class SimConfig:
    """Configuration of one simulation experiment.

    Attributes:
        model: One of ``axiom6``, ``axiom7``, ``greedy_gaussian``,
            ``fp_sensitivity``, ``nu_sweep``.
        nu: Adversarial traffic fraction.
        alpha: False-positive cap (protected model only).
        n: Learner window size.
        iterations: Steps per repetition.
        repetitions: Independent repetitions (one random stream each).
        d: Feature-space dimension for synthetic sources.
        innocuous_source: Sampling distribution of innocuous points.
        innocuous_radius: Scale of the innocuous source, <= 1 so that
            ``|eps| <= 1`` holds by construction (values < 1 leave a safety
            margin to the acceptance boundary).
        seed: Base seed; repetition ``j`` uses stream ``j``.
        log_stride: Trace logging stride; ``None`` logs every
            ``ceil(iterations / 1000)`` steps.
        holdout_size: Innocuous holdout used for false-positive estimation.
        nu_grid: Traffic-fraction grid for the sweep models.
        target_displacement: Displacement goal of the ``nu_sweep`` model.
        check_span: Whether the greedy model verifies the representer
            (span) residual of every inserted point.
    """

    model: str
    nu: float = 0.05
    alpha: float = 0.0
    n: int = 1000
    iterations: int = 50_000
    repetitions: int = 10
    d: int = 2
    innocuous_source: str = "uniform_circle"
    innocuous_radius: float = 1.0
    seed: int = 0
    log_stride: int | None = None
    holdout_size: int = 500
    nu_grid: tuple[float, ...] = (0.05, 0.10, 0.14, 0.16)
    target_displacement: float = 0.18
    check_span: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.repetitions < 1:
            raise ValueError("iterations and repetitions must be >= 1")
        if self.innocuous_source not in INNOCUOUS_SOURCES:
            raise ValueError(f"unknown innocuous source {self.innocuous_source!r}")
        if not 0.0 < self.innocuous_radius <= 1.0:
            raise ValueError("innocuous_radius must be in (0, 1]")

    @property
    def stride(self) -> int:
        return self.log_stride or max(1, math.ceil(self.iterations / 1000))


@dataclass
class Trace:
    """Aggregated simulation trace at the logged iterations.

    Attributes:
        indices: Logged iteration numbers.
        mean_D: Mean relative displacement over repetitions.
        std_D: Standard deviation over repetitions (ddof=1).
        bound_E: Theoretical expectation (upper bound for the protected
            model) at the logged iterations; NaN where not applicable.
        bound_E_lower: Lower expectation bound (protected model only).
        bound_var: Theoretical variance bound; NaN where not applicable.
        fp_rate: Mean estimated false-positive rate (protected model).
        reset_flag: 1 where any repetition reset within the logging block.
        per_rep_D: Displacements per repetition, shape (repetitions, len(indices)).
    """

    indices: np.ndarray
    mean_D: np.ndarray
    std_D: np.ndarray
    bound_E: np.ndarray
    bound_E_lower: np.ndarray
    bound_var: np.ndarray
    fp_rate: np.ndarray
    reset_flag: np.ndarray
    per_rep_D: np.ndarray

    def standard_error(self) -> np.ndarray:
        reps = self.per_rep_D.shape[0]
        return self.std_D / math.sqrt(reps)

    def dominance_checks(self) -> dict[str, bool]:
        """3-standard-error acceptance bands of the statistical contract."""
        se = self.standard_error()
        out: dict[str, bool] = {}
        if np.all(np.isfinite(self.bound_E)):
            out["mean_within_upper"] = bool(
                np.all(self.mean_D <= self.bound_E + 3.0 * se)
            )
        if np.all(np.isfinite(self.bound_E_lower)):
            out["mean_within_lower"] = bool(
                np.all(self.mean_D >= self.bound_E_lower - 3.0 * se)
            )
        if np.all(np.isfinite(self.bound_var)):
            reps = self.per_rep_D.shape[0]
            var = self.std_D**2
            se_var = var * math.sqrt(2.0 / max(reps - 1, 1))
            out["variance_within_bound"] = bool(
                np.all(var <= self.bound_var + 3.0 * se_var)
            )
        return out

    def to_csv(self, path: str | Path) -> None:
        """Write (iteration, mean_D, std_D, bound_E, bound_Var, fp_rate, reset_flag)."""
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["iteration", "mean_D", "std_D", "bound_E", "bound_Var",
                 "fp_rate", "reset_flag"]
            )
            for k, idx in enumerate(self.indices):
                writer.writerow([
                    int(idx),
                    repr(float(self.mean_D[k])),
                    repr(float(self.std_D[k])),
                    "" if not np.isfinite(self.bound_E[k]) else repr(float(self.bound_E[k])),
                    "" if not np.isfinite(self.bound_var[k]) else repr(float(self.bound_var[k])),
                    repr(float(self.fp_rate[k])),
                    int(self.reset_flag[k]),
                ])


def _sample_innocuous(gen: np.random.Generator, count: int, cfg: SimConfig,
                      pool: np.ndarray | None) -> np.ndarray:
    """Draw ``count`` innocuous points of dimension ``cfg.d``."""
    rho = cfg.innocuous_radius
    d = cfg.d
    if cfg.innocuous_source == "uniform_circle":
        if d != 2:
            raise ValueError("uniform_circle requires d = 2")
        theta = gen.uniform(0.0, 2.0 * np.pi, size=count)
        return rho * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if cfg.innocuous_source == "uniform_sphere":
        v = gen.normal(size=(count, d))
        return rho * v / np.linalg.norm(v, axis=1, keepdims=True)
    if cfg.innocuous_source == "uniform_ball":
        v = gen.normal(size=(count, d))
        u = gen.uniform(size=count) ** (1.0 / d)
        return rho * u[:, None] * v / np.linalg.norm(v, axis=1, keepdims=True)
    assert pool is not None
    return pool[gen.integers(len(pool), size=count)]


def _corpus_pool(cfg: SimConfig) -> np.ndarray | None:
    """Embed a synthetic corpus and rescale it into the unit ball."""
    if cfg.innocuous_source != "corpus_embedding":
        return None
    source = RandomSource(cfg.seed, stream_id=10_000)
    sequences = synth_corpus(source, size=max(4 * cfg.d, 200))
    spectra = [extract_spectrum(s, 3) for s in sequences]
    K = kernel_matrix(spectra, KernelConfig(k=3, normalize=True))
    embedding = kernel_pca(K, target_variance=1.0)
    coords = embedding.coordinates[:, : cfg.d]
    if coords.shape[1] < cfg.d:
        raise ValueError(
            f"corpus embedding has rank {coords.shape[1]} < requested d={cfg.d}"
        )
    coords = coords - coords.mean(axis=0)
    max_norm = np.linalg.norm(coords, axis=1).max()
    return cfg.innocuous_radius * coords / max_norm


def _limited_rep(cfg: SimConfig, rep: int, pool: np.ndarray | None) -> np.ndarray:
    """One limited-control repetition, vectorized over blocks.

    The displacement recursion is scalar: ``D_{i+1} = D_i + 1/n`` on attack
    steps and ``D_{i+1} = (1 - 1/n) D_i + (eps . a)/n`` on innocuous steps
    (the attack direction is an arbitrary unit vector; only the projection of
    the innocuous point on it enters). Each block is unrolled in closed form
    with cumulative products.
    """
    gen = RandomSource(cfg.seed, stream_id=rep).generator()
    n, nu = cfg.n, cfg.nu
    D = np.empty(cfg.iterations + 1)
    D[0] = 0.0
    current = 0.0
    pos = 0
    # Cap the block so the cumulative decay (1 - 1/n)^block cannot underflow.
    block = min(8192, 200 * n)
    a = np.zeros(cfg.d)
    a[0] = 1.0
    while pos < cfg.iterations:
        length = min(block, cfg.iterations - pos)
        attack_mask = gen.random(length) < nu
        eps = _sample_innocuous(gen, length, cfg, pool)
        e_proj = eps @ a
        alpha_step = np.where(attack_mask, 1.0, 1.0 - 1.0 / n)
        beta_step = np.where(attack_mask, 1.0 / n, e_proj / n)
        P = np.cumprod(alpha_step)
        D[pos + 1 : pos + length + 1] = P * (current + np.cumsum(beta_step / P))
        current = D[pos + length]
        pos += length
    return D


def _aggregate(cfg: SimConfig, per_rep_full: np.ndarray,
               fp: np.ndarray | None = None,
               resets: np.ndarray | None = None,
               protected: bool = False) -> Trace:
    stride = cfg.stride
    indices = np.arange(stride, cfg.iterations + 1, stride)
    per_rep = per_rep_full[:, indices]
    mean = per_rep.mean(axis=0)
    std = per_rep.std(axis=0, ddof=1) if per_rep.shape[0] > 1 else np.zeros(len(indices))
    if protected:
        m = MixModel(nu=cfg.nu, n=cfg.n, alpha=cfg.alpha)
        e_up, e_lo, var = protected_moments(indices, m)
    else:
        m = MixModel(nu=cfg.nu, n=cfg.n, alpha=0.0)
        e_up, var = limited_moments(indices, m)
        e_lo = e_up
    return Trace(
        indices=indices,
        mean_D=mean,
        std_D=std,
        bound_E=np.asarray(e_up, dtype=np.float64),
        bound_E_lower=np.asarray(e_lo, dtype=np.float64),
        bound_var=np.asarray(var, dtype=np.float64),
        fp_rate=(np.zeros(len(indices)) if fp is None else fp),
        reset_flag=(np.zeros(len(indices), dtype=np.int64) if resets is None else resets),
        per_rep_D=per_rep,
    )


def run_axiom6(cfg: SimConfig) -> Trace:
    """Limited-control process: every innocuous point accepted unconditionally."""
    if cfg.model != "axiom6":
        raise ValueError(f"expected model axiom6, got {cfg.model}")
    pool = _corpus_pool(cfg)
    per_rep = np.stack(
        [_limited_rep(cfg, rep, pool) for rep in range(cfg.repetitions)]
    )
    return _aggregate(cfg, per_rep, protected=False)


def run_axiom7(cfg: SimConfig) -> Trace:
    """False-positive-protected process.

    Innocuous points are applied only when inside the acceptance ball; the
    estimated false-positive rate on a holdout sample is checked at every
    logging stride and a breach of ``alpha`` resets the state to the origin
    (the logged displacement at a reset is 0) and freezes updates for the
    rest of the run.
    """
    if cfg.model != "axiom7":
        raise ValueError(f"expected model axiom7, got {cfg.model}")
    pool = _corpus_pool(cfg)
    stride = cfg.stride
    indices = np.arange(stride, cfg.iterations + 1, stride)
    n, nu = cfg.n, cfg.nu
    a = np.zeros(cfg.d)
    a[0] = 1.0
    per_rep = np.empty((cfg.repetitions, cfg.iterations + 1))
    fp_log = np.empty((cfg.repetitions, len(indices)))
    reset_log = np.zeros((cfg.repetitions, len(indices)), dtype=np.int64)
    for rep in range(cfg.repetitions):
        gen = RandomSource(cfg.seed, stream_id=rep).generator()
        holdout = _sample_innocuous(gen, cfg.holdout_size, cfg, pool)
        X = np.zeros(cfg.d)
        frozen = False
        D = per_rep[rep]
        D[0] = 0.0
        pos = 0
        block = 8192
        log_k = 0
        while pos < cfg.iterations:
            length = min(block, cfg.iterations - pos)
            attack_mask = gen.random(length) < nu
            eps = _sample_innocuous(gen, length, cfg, pool)
            for j in range(length):
                i = pos + j
                if not frozen:
                    if attack_mask[j]:
                        X = X + a / n
                    else:
                        e = eps[j]
                        if np.linalg.norm(e - X) <= 1.0:
                            X = X + (e - X) / n
                D[i + 1] = X[0]
                if log_k < len(indices) and i + 1 == indices[log_k]:
                    rate = float(
                        np.mean(np.linalg.norm(holdout - X, axis=1) > 1.0)
                    )
                    if rate > cfg.alpha and not frozen:
                        X = np.zeros(cfg.d)
                        frozen = True
                        reset_log[rep, log_k] = 1
                        rate = float(
                            np.mean(np.linalg.norm(holdout, axis=1) > 1.0)
                        )
                        D[i + 1] = 0.0
                    fp_log[rep, log_k] = rate
                    log_k += 1
            pos += length
    trace = _aggregate(cfg, per_rep, protected=True)
    trace.fp_rate = fp_log.mean(axis=0)
    trace.reset_flag = reset_log.max(axis=0)
    return trace


@dataclass
class GreedyResult:
    """Greedy-attack experiment output.

    Attributes:
        trace: Displacement trace (no closed-form bound applies).
        slopes: Fitted post-burn-in slope per repetition.
        r_squared: Linear-fit R^2 per repetition.
        max_span_residual: Largest representer residual observed (NaN when
            the check is disabled).
    """

    trace: Trace
    slopes: np.ndarray
    r_squared: np.ndarray
    max_span_residual: float


def fit_slope(displacements: np.ndarray, burn_in_fraction: float = 0.1
              ) -> tuple[float, float]:
    """Least-squares slope and R^2 of a displacement trace after burn-in."""
    i = np.arange(len(displacements))
    keep = i >= int(burn_in_fraction * len(displacements))
    A = np.stack([i[keep], np.ones(keep.sum())], axis=1)
    coef, residual, *_ = np.linalg.lstsq(A, displacements[keep], rcond=None)
    total = float(np.sum((displacements[keep] - displacements[keep].mean()) ** 2))
    r2 = 1.0 - float(residual[0]) / total if total > 0 and len(residual) else 1.0
    return float(coef[0]), r2


def run_greedy_gaussian(cfg: SimConfig) -> GreedyResult:
    """Greedy nearest-out attack on Gaussian working sets.

    Per repetition: ``n`` standard-Gaussian points in dimension ``d``, radius
    calibrated to a 0.001 empirical false-positive rate, a random unit attack
    direction, ``iterations`` greedy steps. Reports displacement traces,
    post-burn-in linear fits, and optionally the representer residual of
    every inserted attack point.
    """
    if cfg.model != "greedy_gaussian":
        raise ValueError(f"expected model greedy_gaussian, got {cfg.model}")
    per_rep = np.empty((cfg.repetitions, cfg.iterations + 1))
    slopes = np.empty(cfg.repetitions)
    r2s = np.empty(cfg.repetitions)
    max_residual = 0.0 if cfg.check_span else float("nan")
    for rep in range(cfg.repetitions):
        gen = RandomSource(cfg.seed, stream_id=rep).generator()
        points = gen.normal(size=(cfg.n, cfg.d))
        center = points.mean(axis=0)
        radius = radius_from_quantile(points, center, alpha=0.001)
        state = CentroidState.from_working_set(points, radius)
        direction = gen.normal(size=cfg.d)
        direction /= np.linalg.norm(direction)
        ctx = AttackContext(direction=direction, initial_center=center.copy())
        attack = None
        per_rep[rep, 0] = 0.0
        for it in range(cfg.iterations):
            previous_points = state.working_set.points.copy() if cfg.check_span else None
            state, attack = greedy_step(state, ctx, attack)
            per_rep[rep, it + 1] = attack.trace[-1]
            if cfg.check_span:
                inserted = state.working_set.points[attack.replaced_history[-1][1]]
                residual = span_residual(inserted, ctx, previous_points)
                max_residual = max(max_residual, residual)
        slopes[rep], r2s[rep] = fit_slope(per_rep[rep, 1:])
    stride = cfg.stride
    indices = np.arange(stride, cfg.iterations + 1, stride)
    sub = per_rep[:, indices]
    nan = np.full(len(indices), np.nan)
    trace = Trace(
        indices=indices,
        mean_D=sub.mean(axis=0),
        std_D=sub.std(axis=0, ddof=1) if cfg.repetitions > 1 else np.zeros(len(indices)),
        bound_E=nan,
        bound_E_lower=nan,
        bound_var=nan,
        fp_rate=np.zeros(len(indices)),
        reset_flag=np.zeros(len(indices), dtype=np.int64),
        per_rep_D=sub,
    )
    return GreedyResult(trace=trace, slopes=slopes, r_squared=r2s,
                        max_span_residual=max_residual)


def run_fp_sensitivity(cfg: SimConfig) -> list[tuple[float, float]]:
    """Maximum observed holdout false-positive rate per traffic fraction.

    For each ``nu`` in the grid, runs the protected simulation with an
    effectively non-triggering cap and records the maximum estimated
    false-positive rate over all logged iterations and repetitions.
    """
    if cfg.model != "fp_sensitivity":
        raise ValueError(f"expected model fp_sensitivity, got {cfg.model}")
    curve: list[tuple[float, float]] = []
    for nu in cfg.nu_grid:
        sub = SimConfig(
            model="axiom7", nu=nu, alpha=0.999, n=cfg.n,
            iterations=cfg.iterations, repetitions=cfg.repetitions, d=cfg.d,
            innocuous_source=cfg.innocuous_source,
            innocuous_radius=cfg.innocuous_radius, seed=cfg.seed,
            log_stride=cfg.log_stride, holdout_size=cfg.holdout_size,
        )
        trace = run_axiom7(sub)
        curve.append((float(nu), float(trace.fp_rate.max())))
    return curve


def run_nu_sweep(cfg: SimConfig) -> list[dict[str, float | bool]]:
    """Whether the attack reaches ``target_displacement`` at each ``nu``.

    Runs the limited-control recursion per grid value and reports whether the
    displacement ever touches the target within the iteration budget,
    together with the final displacement.
    """
    if cfg.model != "nu_sweep":
        raise ValueError(f"expected model nu_sweep, got {cfg.model}")
    results: list[dict[str, float | bool]] = []
    for nu in cfg.nu_grid:
        sub = SimConfig(
            model="axiom6", nu=nu, alpha=0.0, n=cfg.n,
            iterations=cfg.iterations, repetitions=cfg.repetitions, d=cfg.d,
            innocuous_source=cfg.innocuous_source,
            innocuous_radius=cfg.innocuous_radius, seed=cfg.seed,
            log_stride=cfg.log_stride,
        )
        pool = _corpus_pool(sub)
        reached = False
        final = 0.0
        for rep in range(sub.repetitions):
            D = _limited_rep(sub, rep, pool)
            reached = reached or bool(D.max() >= cfg.target_displacement)
            final = max(final, float(D[-1]))
        results.append({"nu": float(nu), "reached": reached, "final_D": final})
    return results


def write_summary(path: str | Path, cfg: SimConfig, payload: dict) -> None:
    """Write the summary JSON: config echo plus model-specific results."""
    body = {"config": asdict(cfg), **payload}
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
