"""Closed forms for mixing a biased BP gradient with an unbiased ZOO estimate.

With ``g_Z = grad + zeta`` (per-coordinate noise variance ``sigma2``) and
``g_B = grad + b`` (mean bias ``b_bar``, total variance ``tau2``), the mixture
``lam * g_B + (1 - lam) * g_Z`` has

    MSE(lam) = lam^2 (|b_bar|^2 + tau2) + (1 - lam)^2 d sigma2.

The Monte Carlo routines here simulate those noise models directly and serve
as oracles for the closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateStatsError, UnboundedSpeedup

__all__ = [
    "EstimatorStats",
    "accuracy_ratio",
    "descent_iterations",
    "grid_search_lambda",
    "measured_speedup",
    "montecarlo_mse",
    "mse_lambda",
    "optimal_lambda",
    "speedup_ratio",
]


@dataclass(frozen=True)
class EstimatorStats:
    d: int
    sigma2: float
    bias2: float = 0.0
    tau2: float = 0.0
    mu: float = 1.0
    L0: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}", "stats.d")
        for name in ("sigma2", "bias2", "tau2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"must be >= 0, got {getattr(self, name)}", f"stats.{name}")
        if self.mu <= 0 or self.L0 <= 0:
            raise ConfigError("mu and L0 must be positive", "stats")

    @property
    def zoo_error(self) -> float:
        """``d * sigma2``: total squared error of the ZOO estimate."""
        return self.d * self.sigma2

    @property
    def bp_error(self) -> float:
        """``|b_bar|^2 + tau2``: total squared error of the BP surrogate."""
        return self.bias2 + self.tau2


def mse_lambda(stats: EstimatorStats, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}", "lambda")
    return lam**2 * stats.bp_error + (1.0 - lam) ** 2 * stats.zoo_error


def optimal_lambda(stats: EstimatorStats) -> float:
    denom = stats.zoo_error + stats.bp_error
    if denom == 0:
        raise DegenerateStatsError("d*sigma2 + bias2 + tau2 is zero; every lambda is optimal")
    return stats.zoo_error / denom


def speedup_ratio(stats: EstimatorStats) -> float:
    """Iteration-count ratio pure ZOO / optimally mixed, ``1 + d s2 / (b2 + t2)``."""
    if stats.bp_error == 0:
        raise UnboundedSpeedup("BP surrogate has zero bias and variance")
    return 1.0 + stats.zoo_error / stats.bp_error


def accuracy_ratio(stats: EstimatorStats) -> float:
    """Sub-optimality ratio after a fixed number of rounds, ``(1 + (b2 + t2) / (d s2))^-1``."""
    if stats.zoo_error == 0:
        raise DegenerateStatsError("d*sigma2 is zero; accuracy ratio undefined")
    return 1.0 / (1.0 + stats.bp_error / stats.zoo_error)


def grid_search_lambda(stats: EstimatorStats, step: float = 1e-3) -> float:
    """Brute-force argmin of :func:`mse_lambda` on ``{0, step, ..., 1}``."""
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    values = [mse_lambda(stats, float(lam)) for lam in grid]
    return float(grid[int(np.argmin(values))])


def _bias_vector(stats: EstimatorStats) -> np.ndarray:
    # Spread the bias evenly; only its norm enters the MSE.
    return np.full(stats.d, np.sqrt(stats.bias2 / stats.d))


def _mixed_error(stats: EstimatorStats, lam: float, rng, shape) -> np.ndarray:
    zeta = rng.standard_normal(shape) * np.sqrt(stats.sigma2)
    bp_noise = rng.standard_normal(shape) * np.sqrt(stats.tau2 / stats.d)
    return lam * (_bias_vector(stats) + bp_noise) + (1.0 - lam) * zeta


def montecarlo_mse(stats: EstimatorStats, lam: float, trials: int = 10_000, seed: int = 0) -> float:
    """Empirical ``E|g_R - grad|^2`` over ``trials`` independent draws.

    BP variance is spread isotropically (``tau2 / d`` per coordinate).
    """
    if trials < 1000:
        raise ConfigError(f"need at least 1000 trials, got {trials}", "trials")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}", "lambda")
    rng = np.random.default_rng(seed)
    grad = rng.standard_normal(stats.d)
    g_z = grad + rng.standard_normal((trials, stats.d)) * np.sqrt(stats.sigma2)
    g_b = grad + _bias_vector(stats) + rng.standard_normal((trials, stats.d)) * np.sqrt(stats.tau2 / stats.d)
    mixed = lam * g_b + (1.0 - lam) * g_z
    return float(((mixed - grad) ** 2).sum(axis=1).mean())


def descent_iterations(stats: EstimatorStats, lam: float, target: float, seeds, max_iter: int = 200_000) -> np.ndarray:
    """Iterations of noisy gradient descent on ``f(x) = mu/2 |x|^2`` until ``f <= target``.

    Uses the step ``1 / (mu t)``; one trajectory per seed, run side by side.
    Trajectories that never reach ``target`` report ``max_iter``.
    """
    seeds = list(seeds)
    rng = np.random.default_rng(seeds)
    x = np.ones((len(seeds), stats.d))
    hit = np.full(len(seeds), max_iter, dtype=np.int64)
    active = np.ones(len(seeds), dtype=bool)
    for t in range(1, max_iter + 1):
        err = _mixed_error(stats, lam, rng, x.shape)
        x = x - (1.0 / (stats.mu * t)) * (stats.mu * x + err)
        f = 0.5 * stats.mu * (x**2).sum(axis=1)
        reached = active & (f <= target)
        hit[reached] = t
        active &= ~reached
        if not active.any():
            break
    return hit


def measured_speedup(stats: EstimatorStats, target: float, seeds, max_iter: int = 200_000):
    """Mean iterations of pure ZOO over mean iterations at ``optimal_lambda``.

    Returns ``(ratio, zoo_iterations, mixed_iterations)``.
    """
    seeds = list(seeds)
    zoo = descent_iterations(stats, 0.0, target, seeds, max_iter)
    mixed = descent_iterations(stats, optimal_lambda(stats), target, [s + 10_007 for s in seeds], max_iter)
    return float(zoo.mean() / mixed.mean()), zoo, mixed
