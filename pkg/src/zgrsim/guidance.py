"""Cloud role: BP training on public data and the gradient subspace built from it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GuidanceUnavailable, NumericError
from .model import ParameterVector, backprop_gradient, forward_loss
from .rng import StreamAddress, gaussian_stream

__all__ = [
    "ALPHA_MODES",
    "CloudGuidance",
    "GradientSubspace",
    "GuidedPerturbation",
    "adaptive_alpha",
    "build_basis",
    "cloud_bp_round",
    "sample_guided",
]

ALPHA_MODES = ("fixed", "lambda_star")
DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class GradientSubspace:
    basis: np.ndarray  # d x m, orthonormal columns
    m_max: int
    tol: float

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    def project(self, vector) -> np.ndarray:
        return self.basis @ (self.basis.T @ vector)


@dataclass(frozen=True)
class GuidedPerturbation:
    vector: np.ndarray
    round: int
    m: int

    def chunk(self, layer_map, layer_index: int) -> np.ndarray:
        off, length = layer_map[layer_index]
        return self.vector[off:off + length]


def cloud_bp_round(cloud_params: ParameterVector, public_batch, lr: float = 0.1, history=None):
    """One SGD step on ``public_batch``; returns ``(new_params, gradient)``.

    When ``history`` (a bounded deque) is given the gradient is appended to it.
    """
    grad = backprop_gradient(cloud_params, public_batch)
    values = cloud_params.values - lr * grad
    if not np.all(np.isfinite(values)):
        raise NumericError("cloud BP step produced non-finite parameters")
    if history is not None:
        history.append(grad)
    return cloud_params.with_values(values), grad


def build_basis(history, m_max: int = 16, tol: float = 1e-10) -> GradientSubspace:
    """Orthonormalise the newest ``m_max`` gradients by modified Gram-Schmidt.

    Each candidate is projected twice against the vectors already kept
    (re-orthogonalisation). It is dropped when what remains is smaller than
    ``tol`` times its original norm. Raises :class:`GuidanceUnavailable` if
    nothing survives.
    """
    vectors = [np.asarray(g, dtype=np.float64) for g in history]
    if not vectors:
        raise GuidanceUnavailable("gradient history is empty")
    if m_max < 1:
        raise ConfigError(f"m_max must be >= 1, got {m_max}", "guidance.m_max")
    kept: list[np.ndarray] = []
    for g in reversed(vectors):
        if len(kept) == m_max:
            break
        norm = np.linalg.norm(g)
        if not norm > 0 or not np.isfinite(norm):
            continue
        v = g.copy()
        for _ in range(2):
            for q in kept:
                v -= (q @ v) * q
        residual = np.linalg.norm(v)
        if residual < tol * norm:
            continue
        kept.append(v / residual)
    if not kept:
        raise GuidanceUnavailable("all history gradients are degenerate")
    return GradientSubspace(np.column_stack(kept), m_max, tol)


def sample_guided(subspace: GradientSubspace, address: StreamAddress) -> GuidedPerturbation:
    """Draw ``z_g ~ N(0, I_m)`` from ``address`` and return ``V z_g``."""
    if subspace is None or subspace.m == 0:
        raise GuidanceUnavailable("cannot sample a guided perturbation from an empty basis")
    z_g = gaussian_stream(address, subspace.m)
    return GuidedPerturbation(subspace.basis @ z_g, address.round, subspace.m)


def adaptive_alpha(zoo_scale: float, guided_scale: float, mode: str = "fixed",
                   fixed: float = DEFAULT_ALPHA) -> float:
    """Weight of the local perturbation in the hybrid.

    ``zoo_scale`` is the ZOO error ``d*sigma^2``; ``guided_scale`` is the
    squared bias plus variance of the guidance, or 0 when no guided
    measurement exists. In ``lambda_star`` mode the guided share is the optimal
    mixing weight, so ``alpha = 1 - d s2 / (d s2 + b2 + t2)``.
    """
    if mode not in ALPHA_MODES:
        raise ConfigError(f"unknown alpha mode {mode!r}", "federation.alpha_mode")
    if not 0.0 <= fixed <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {fixed}", "federation.alpha")
    if mode == "fixed":
        return float(fixed)
    if zoo_scale < 0 or guided_scale < 0:
        raise ConfigError("scales must be nonnegative", "federation.alpha_mode")
    if zoo_scale == 0 and guided_scale == 0:
        return float(fixed)
    if guided_scale == 0:
        return 1.0
    # Deferred import keeps guidance usable without the analysis module loaded.
    from .theory import EstimatorStats, optimal_lambda

    lam = optimal_lambda(EstimatorStats(d=1, sigma2=zoo_scale, bias2=guided_scale, tau2=0.0))
    return float(min(1.0, max(0.0, 1.0 - lam)))


@dataclass
class CloudGuidance:
    """Stateful cloud role: a BP replica plus a ring buffer of its gradients."""

    params: ParameterVector
    lr: float = 0.1
    m_max: int = 16
    tol: float = 1e-10
    history: deque = field(default=None)
    subspace: GradientSubspace | None = None

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=self.m_max)

    def bp_round(self, public_batch):
        self.params, grad = cloud_bp_round(self.params, public_batch, self.lr, self.history)
        return grad

    def rebuild(self) -> GradientSubspace | None:
        """Refresh the basis; leaves ``subspace`` as None when the history is degenerate."""
        try:
            self.subspace = build_basis(self.history, self.m_max, self.tol)
        except GuidanceUnavailable:
            self.subspace = None
        return self.subspace

    def sync(self, params: ParameterVector):
        self.params = params.copy()

    def loss(self, batch) -> float:
        return forward_loss(self.params, batch)

    def spread(self) -> float:
        """Mean squared deviation of stored gradients from their mean (a tau^2 estimate)."""
        if len(self.history) < 2:
            return 0.0
        h = np.asarray(self.history)
        return float(((h - h.mean(axis=0)) ** 2).sum(axis=1).mean())
