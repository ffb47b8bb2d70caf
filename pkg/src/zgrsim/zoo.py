"""Two-point zeroth-order estimator, hybrid perturbations and edge-side reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GuidanceUnavailable, NumericError, ShapeError
from .model import forward_loss
from .rng import PerturbationSpec, full_perturbation

__all__ = [
    "HybridPerturbation",
    "LossDifference",
    "NORMALIZATIONS",
    "check_orthonormal",
    "hybrid_from_guided",
    "hybrid_perturbation",
    "multi_sample_estimate",
    "probe_vector",
    "reconstruct_gradient",
    "two_point_loss_diff",
]

# "unit": z_h has unit expected squared norm, exactly as the mixing formula reads.
# "matched": z_h is rescaled by sqrt(n) so E||z_h||^2 = n, the same second moment
# as the plain N(0, I) perturbation used in non-guided rounds.
NORMALIZATIONS = ("unit", "matched")


@dataclass(frozen=True)
class LossDifference:
    delta: float
    client_id: int = 0
    round: int = 0
    probe_index: int = 0

    def __post_init__(self):
        if not np.isfinite(self.delta):
            raise NumericError(f"loss difference is not finite: {self.delta}")


@dataclass(frozen=True)
class HybridPerturbation:
    vector: np.ndarray
    alpha: float
    n: int
    m: int
    normalization: str = "unit"


def check_orthonormal(basis, tol: float = 1e-8) -> float:
    """Max deviation of ``V^T V`` from the identity; raises if above ``tol``."""
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2:
        raise ShapeError(f"basis must be a d x m matrix, got shape {basis.shape}")
    if basis.shape[1] == 0:
        return 0.0
    dev = float(np.abs(basis.T @ basis - np.eye(basis.shape[1])).max())
    if dev > tol:
        raise ShapeError(f"basis columns are not orthonormal (max deviation {dev:.3g})")
    return dev


def hybrid_from_guided(z_local, guided, alpha: float, m: int, normalization: str = "unit") -> HybridPerturbation:
    """Mix a local Gaussian draw with an already-formed guided vector ``V z_g``.

    The client and edge only ever see ``V z_g`` (possibly after lossy
    transmission), never ``V`` itself, so this is the form they use.
    """
    z_local = np.asarray(z_local, dtype=np.float64)
    n = z_local.size
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}", "alpha")
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"unknown normalization {normalization!r}", "zoo.normalization")
    if m < 0:
        raise ConfigError(f"subspace dimension must be >= 0, got {m}", "m")
    if m == 0 and alpha < 1.0:
        raise GuidanceUnavailable("no guided direction available (m = 0) and alpha < 1")

    matched = normalization == "matched"
    if alpha == 1.0:
        vector = z_local.copy() if matched else z_local / np.sqrt(n)
    else:
        guided = np.asarray(guided, dtype=np.float64)
        if guided.shape != z_local.shape:
            raise ShapeError(f"guided vector has shape {guided.shape}, expected {z_local.shape}")
        if alpha == 0.0:
            vector = guided * np.sqrt(n / m) if matched else guided / np.sqrt(m)
        elif matched:
            vector = np.sqrt(alpha) * z_local + np.sqrt((1.0 - alpha) * n / m) * guided
        else:
            vector = np.sqrt(alpha / n) * z_local + np.sqrt((1.0 - alpha) / m) * guided
    return HybridPerturbation(vector, float(alpha), n, int(m), normalization)


def hybrid_perturbation(z_local, basis, z_g, alpha: float, normalization: str = "unit") -> HybridPerturbation:
    """``sqrt(alpha/n) z + sqrt((1-alpha)/m) V z_g`` with ``n = d``."""
    z_local = np.asarray(z_local, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != z_local.size:
        raise ShapeError(f"basis must be {z_local.size} x m, got shape {basis.shape}")
    m = basis.shape[1]
    if m == 0:
        return hybrid_from_guided(z_local, None, alpha, 0, normalization)
    check_orthonormal(basis)
    z_g = np.asarray(z_g, dtype=np.float64)
    if z_g.shape != (m,):
        raise ShapeError(f"z_g must have length {m}, got shape {z_g.shape}")
    return hybrid_from_guided(z_local, basis @ z_g, alpha, m, normalization)


def two_point_loss_diff(params, perturbation, epsilon: float, batch, *, loss_fn=forward_loss,
                        client_id: int = 0, round: int = 0, probe_index: int = 0) -> LossDifference:
    """``L(W + eps z) - L(W - eps z)`` on ``batch``; ``params`` is never mutated.

    ``loss_fn(params, batch, values)`` defaults to the model cross-entropy.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}", "epsilon")
    z = np.asarray(perturbation, dtype=np.float64)
    if z.shape != params.values.shape:
        raise ShapeError(f"perturbation has shape {z.shape}, parameters have {params.values.shape}")
    step = epsilon * z
    plus = loss_fn(params, batch, params.values + step)
    if not np.isfinite(plus):
        raise NumericError(f"loss at W + eps*z is not finite ({plus}) for client {client_id}")
    minus = loss_fn(params, batch, params.values - step)
    if not np.isfinite(minus):
        raise NumericError(f"loss at W - eps*z is not finite ({minus}) for client {client_id}")
    return LossDifference(float(plus - minus), client_id, round, probe_index)


def reconstruct_gradient(delta: float, perturbation, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}", "epsilon")
    return (delta / (2.0 * epsilon)) * np.asarray(perturbation, dtype=np.float64)


def probe_vector(spec: PerturbationSpec, layer_map, guided=None, m: int = 0,
                 normalization: str = "unit") -> np.ndarray:
    """The perturbation a probe applies: plain ``z`` or the hybrid ``z_h`` when guided."""
    z = full_perturbation(spec.address, layer_map)
    if not spec.guided:
        return z
    return hybrid_from_guided(z, guided, spec.alpha, m, normalization).vector


def multi_sample_estimate(params, batch, specs, guided=None, m: int = 0, *,
                          normalization: str = "unit", loss_fn=forward_loss) -> np.ndarray:
    """Average of K single-probe estimates; reduces variance roughly as 1/K.

    ``guided`` is either one vector shared by all guided probes or a sequence
    with one vector per spec.
    """
    specs = list(specs)
    if not specs:
        raise ConfigError("need at least one perturbation spec", "K")
    first = specs[0].address
    if any(s.address.round != first.round or s.address.client_id != first.client_id for s in specs):
        raise ConfigError("all specs of one estimate must share round and client", "specs")
    per_spec = guided is not None and not isinstance(guided, np.ndarray)
    total = np.zeros(params.d)
    for k, spec in enumerate(specs):
        g = guided[k] if per_spec else guided
        z = probe_vector(spec, params.layer_map, g, m, normalization)
        diff = two_point_loss_diff(params, z, spec.epsilon, batch, loss_fn=loss_fn,
                                   client_id=first.client_id, round=first.round,
                                   probe_index=spec.address.probe_index)
        total += reconstruct_gradient(diff.delta, z, spec.epsilon)
    return total / len(specs)
