"""Closed-form evaluators for the attack-progress theory.

Every bound is a pure function of the iteration index and the model
parameters: exact finite/infinite-horizon displacement, the attacker's effort
estimate, expectation and variance bounds for the limited-control process
(with and without false-positive protection), the critical traffic ratio, the
Voronoi-packing slope approximation, and the geometric-series helper the
variance proofs rely on.

Vectorized: every ``i`` argument accepts a scalar or an integer array and
returns results of matching shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundParams",
    "MixModel",
    "bound_infinite",
    "bound_params",
    "displacement_finite",
    "effort_inverse",
    "exact_infinite",
    "exact_infinite_trace",
    "geometric_series_closed_form",
    "limited_moments",
    "nu_crit",
    "protected_moments",
    "voronoi_slope",
]


@dataclass(frozen=True)
class MixModel:
    """Parameters of the stochastic traffic mix seen by the learner.

    Attributes:
        nu: Adversarial traffic fraction, the Bernoulli parameter in (0, 1).
        n: Learner window size (>= 2).
        alpha: Maximum tolerated false-positive rate in [0, 1); 0 disables
            the protection mechanism.
        eps_second_moment: Second moment ``E(eps^2)`` of the innocuous point
            norm projection, in [0, 1]. Defaults to the distribution-free
            worst case 1.
    """

    nu: float
    n: int
    alpha: float = 0.0
    eps_second_moment: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must be in (0, 1), got {self.nu}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0.0 <= self.eps_second_moment <= 1.0:
            raise ValueError(
                f"eps_second_moment must be in [0, 1], got {self.eps_second_moment}"
            )


@dataclass(frozen=True)
class BoundParams:
    """Per-iteration constants entering the moment bounds.

    Attributes:
        b: Geometric decay base of the expectation recursion
           (``c_i = b**i``).
        c_i: Expectation decay factor at iteration ``i``.
        d_i: Second-moment decay factor at iteration ``i`` (``d_i <= c_i``).
        gamma_i: ``c_i - d_i``, the variance's leading coefficient.
        delta_n: Additive remainder of the variance bound.
        rho_alpha: Protection-specific remainder (0 when ``alpha = 0``).
    """

    b: float
    c_i: np.ndarray | float
    d_i: np.ndarray | float
    gamma_i: np.ndarray | float
    delta_n: np.ndarray | float
    rho_alpha: np.ndarray | float


def _pow_decay(base_deficit: float, i: np.ndarray | int) -> np.ndarray | float:
    """Compute ``(1 - base_deficit)**i`` stably via ``exp(i * log1p(-x))``."""
    return np.exp(np.asarray(i, dtype=np.float64) * math.log1p(-base_deficit))


def bound_infinite(i: np.ndarray | int, n: int) -> np.ndarray | float:
    """Upper bound ``ln(1 + i/n)`` on infinite-horizon displacement."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.log1p(np.asarray(i, dtype=np.float64) / n)


def exact_infinite(i: int, n: int) -> float:
    """Exact infinite-horizon displacement ``sum_{k=1..i} 1/(n+k)``."""
    if n < 1 or i < 0:
        raise ValueError(f"need n >= 1 and i >= 0, got n={n}, i={i}")
    return float(np.sum(1.0 / (n + np.arange(1, i + 1, dtype=np.float64))))


def exact_infinite_trace(i: int, n: int) -> np.ndarray:
    """Cumulative exact displacements ``D_0..D_i`` for the infinite horizon."""
    if n < 1 or i < 0:
        raise ValueError(f"need n >= 1 and i >= 0, got n={n}, i={i}")
    out = np.empty(i + 1)
    out[0] = 0.0
    np.cumsum(1.0 / (n + np.arange(1, i + 1, dtype=np.float64)), out=out[1:])
    return out


def effort_inverse(displacement: float, n: int) -> int:
    """Iterations needed to reach ``displacement``: ``ceil(n (e^D - 1))``."""
    if displacement < 0:
        raise ValueError(f"displacement must be >= 0, got {displacement}")
    return math.ceil(n * math.expm1(displacement))


def displacement_finite(i: np.ndarray | int, n: int) -> np.ndarray | float:
    """Finite-horizon optimal-attack displacement ``i/n``.

    Exact for the average-out rule; the expectation for random-out.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.asarray(i, dtype=np.float64) / n


def bound_params(i: np.ndarray | int, m: MixModel) -> BoundParams:
    """Evaluate the decay constants and remainders at iteration(s) ``i``.

    With ``alpha = 0`` these are the limited-control constants; with
    ``alpha > 0`` the protected-learner constants (which reduce to the former
    at ``alpha = 0``).
    """
    nu, n, alpha = m.nu, m.n, m.alpha
    b = 1.0 - (1.0 - nu) * (1.0 - alpha) / n
    c_i = _pow_decay((1.0 - nu) * (1.0 - alpha) / n, i)
    d_i = _pow_decay(((1.0 - nu) / n) * (2.0 - 1.0 / n) * (1.0 - alpha), i)
    gamma_i = c_i - d_i
    if alpha == 0.0:
        delta_n = (nu**2 + (1.0 - d_i)) / ((2 * n - 1) * (1.0 - nu) ** 2)
        rho_alpha = d_i * 0.0
    else:
        delta_n = (
            (1.0 - d_i)
            * (nu + (1.0 - nu) * m.eps_second_moment)
            / ((2 * n - 1) * (1.0 - nu) * (1.0 - alpha))
        )
        rho_alpha = (
            alpha
            * (1.0 - c_i)
            * (1.0 - d_i)
            * (2 * nu * (1.0 - alpha) + alpha)
            / ((1.0 - 1.0 / (2 * n)) * (1.0 - nu) ** 2 * (1.0 - alpha) ** 2)
        )
    return BoundParams(b=b, c_i=c_i, d_i=d_i, gamma_i=gamma_i,
                       delta_n=delta_n, rho_alpha=rho_alpha)


def limited_moments(
    i: np.ndarray | int, m: MixModel
) -> tuple[np.ndarray | float, np.ndarray | float]:
    """Expectation and variance bound of the limited-control displacement.

    Returns ``(E, Var_bound)`` with
    ``E = (1 - c_i) nu / (1 - nu)`` and
    ``Var <= gamma_i (nu/(1-nu))^2 + delta_n``.
    """
    if m.alpha != 0.0:
        raise ValueError("limited_moments requires alpha = 0; use protected_moments")
    p = bound_params(i, m)
    ratio = m.nu / (1.0 - m.nu)
    expectation = (1.0 - p.c_i) * ratio
    variance_bound = p.gamma_i * ratio**2 + p.delta_n
    return expectation, variance_bound


def protected_moments(
    i: np.ndarray | int, m: MixModel
) -> tuple[np.ndarray | float, np.ndarray | float, np.ndarray | float]:
    """Moment bounds for the false-positive-protected learner.

    Returns ``(E_upper, E_lower, Var_bound)``:
    ``E_upper = (1 - c_i)(nu + alpha(1 - nu)) / ((1 - nu)(1 - alpha))``,
    ``E_lower = (1 - c_i) nu / (1 - nu)``, and
    ``Var <= gamma_i nu^2 / ((1-alpha)^2 (1-nu)^2) + rho(alpha) + delta_n``.

    At ``alpha = 0`` the upper and lower expectations coincide with the
    limited-control expectation exactly.
    """
    nu, alpha = m.nu, m.alpha
    p = bound_params(i, m)
    growth = 1.0 - p.c_i
    e_lower = growth * nu / (1.0 - nu)
    if alpha == 0.0:
        e_upper = growth * nu / (1.0 - nu)
    else:
        e_upper = growth * (nu + alpha * (1.0 - nu)) / ((1.0 - nu) * (1.0 - alpha))
    variance_bound = (
        p.gamma_i * nu**2 / ((1.0 - alpha) ** 2 * (1.0 - nu) ** 2)
        + p.rho_alpha
        + p.delta_n
    )
    return e_upper, e_lower, variance_bound


def nu_crit(displacement: float) -> float:
    """Minimal adversarial traffic fraction to reach ``displacement``: D/(1+D)."""
    if displacement < 0:
        raise ValueError(f"displacement must be >= 0, got {displacement}")
    return displacement / (1.0 + displacement)


def voronoi_slope(n: int, d: int) -> float:
    """Voronoi-packing approximation ``(1/n)^(1/d)`` of the reachable radius
    fraction per greedy iteration; divide by ``n`` for the per-step
    displacement estimate."""
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    return (1.0 / n) ** (1.0 / d)


def geometric_series_closed_form(p: float, q: float, i: int) -> float:
    """Closed form ``p (1 - q^i) / (1 - q)`` of ``s_{k+1} = q s_k + p, s_0=0``.

    The degenerate ``q = 1`` limit returns ``p * i``.
    """
    if i < 0:
        raise ValueError(f"i must be >= 0, got {i}")
    if q == 1.0:
        return p * i
    return p * (1.0 - q**i) / (1.0 - q)
