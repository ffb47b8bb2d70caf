"""Layer-wise sampling -> transmission -> application pipeline, and client memory models.

Guided perturbations are produced by the cloud one layer at a time, shipped to
the client, and applied there. Pipelining the three stages across layers hides
most of the transmission and application time behind cloud sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "ActivationModel",
    "MEMORY_MODES",
    "MemorySpec",
    "PipelineResult",
    "PipelineSpec",
    "StageEvent",
    "TRANSFER_MODELS",
    "analytic_latency",
    "client_memory",
    "estimate_activation_memory",
    "finetune_memory_breakdown",
    "hiding_condition",
    "latency_reduction",
    "memory_reduction",
    "simulate_pipeline",
]

STAGES = ("sample", "transmit", "apply")
MEMORY_MODES = ("baseline", "spc", "spc_dtc")
# store_and_forward: a layer is sent only after it is fully sampled.
# cut_through: a layer streams out while it is being sampled, finishing no
# earlier than its sampling does.
TRANSFER_MODELS = ("store_and_forward", "cut_through")


@dataclass(frozen=True)
class PipelineSpec:
    L: int
    T_cs: float
    T_t: float
    T_cc: float
    t_cs: tuple = None
    t_t: tuple = None
    t_cc: tuple = None

    def __post_init__(self):
        if int(self.L) < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}", "pipeline.L")
        object.__setattr__(self, "L", int(self.L))
        for total, per in (("T_cs", "t_cs"), ("T_t", "t_t"), ("T_cc", "t_cc")):
            if getattr(self, total) < 0:
                raise ConfigError(f"must be >= 0, got {getattr(self, total)}", f"pipeline.{total}")
            layer_times = getattr(self, per)
            if layer_times is None:
                layer_times = (getattr(self, total) / self.L,) * self.L
            layer_times = tuple(float(t) for t in layer_times)
            if len(layer_times) != self.L:
                raise ConfigError(f"needs {self.L} per-layer entries, got {len(layer_times)}", f"pipeline.{per}")
            if min(layer_times) < 0:
                raise ConfigError("per-layer times must be >= 0", f"pipeline.{per}")
            object.__setattr__(self, per, layer_times)

    @classmethod
    def from_layers(cls, t_cs, t_t, t_cc) -> "PipelineSpec":
        """Heterogeneous per-layer stage times; totals are their sums."""
        return cls(len(t_cs), float(sum(t_cs)), float(sum(t_t)), float(sum(t_cc)),
                   tuple(t_cs), tuple(t_t), tuple(t_cc))

    def stage_times(self) -> np.ndarray:
        return np.array([self.t_cs, self.t_t, self.t_cc]).T  # L x 3


@dataclass(frozen=True)
class StageEvent:
    layer: int
    stage: str
    start: float
    end: float


@dataclass(frozen=True)
class PipelineResult:
    makespan: float
    events: tuple = field(repr=False)


def analytic_latency(spec: PipelineSpec, mode: str = "pipelined") -> float:
    """``T_cs + T_t + T_cc`` sequentially, ``T_cs + T_cc / L`` when pipelined."""
    if mode == "sequential":
        return spec.T_cs + spec.T_t + spec.T_cc
    if mode == "pipelined":
        return spec.T_cs + spec.T_cc / spec.L
    raise ConfigError(f"unknown latency mode {mode!r}", "pipeline.mode")


def latency_reduction(spec: PipelineSpec) -> float:
    return spec.T_t + (spec.L - 1) / spec.L * spec.T_cc


def hiding_condition(spec: PipelineSpec) -> bool:
    """Per-layer transmit and apply both fit inside per-layer sampling."""
    return all(t <= s and c <= s for s, t, c in zip(spec.t_cs, spec.t_t, spec.t_cc))


def simulate_pipeline(spec: PipelineSpec, pipelined: bool = True,
                      transfer: str = "store_and_forward") -> PipelineResult:
    """Discrete-event schedule of the three stages over all layers.

    Each stage handles layers in order, one at a time. Pipelined, a stage may
    start layer l once it has finished layer l-1 and the previous stage has
    released layer l. Without pipelining every stage waits for the previous
    stage to finish all layers.
    """
    if transfer not in TRANSFER_MODELS:
        raise ConfigError(f"unknown transfer model {transfer!r}", "pipeline.transfer")
    times = spec.stage_times()
    L = spec.L
    start = np.zeros((L, 3))
    end = np.zeros((L, 3))
    if not pipelined:
        clock = 0.0
        for k in range(3):
            for layer in range(L):
                start[layer, k] = clock
                clock += times[layer, k]
                end[layer, k] = clock
    else:
        for layer in range(L):
            for k in range(3):
                free = end[layer - 1, k] if layer > 0 else 0.0
                if k == 0:
                    start[layer, k] = free
                    end[layer, k] = free + times[layer, k]
                elif k == 1 and transfer == "cut_through":
                    start[layer, k] = max(free, start[layer, 0])
                    end[layer, k] = max(start[layer, k] + times[layer, k], end[layer, 0])
                else:
                    start[layer, k] = max(free, end[layer, k - 1])
                    end[layer, k] = start[layer, k] + times[layer, k]
    events = tuple(
        StageEvent(layer, STAGES[k], float(start[layer, k]), float(end[layer, k]))
        for layer in range(L) for k in range(3)
    )
    return PipelineResult(float(end.max()) if L else 0.0, events)


@dataclass(frozen=True)
class MemorySpec:
    Mem0: float
    L: int
    omega: float = None
    theta: float = None
    mode: str = "spc"

    def __post_init__(self):
        if self.mode not in MEMORY_MODES:
            raise ConfigError(f"unknown memory mode {self.mode!r}", "memory.mode")
        if self.Mem0 < 0:
            raise ConfigError("Mem0 must be >= 0", "memory.Mem0")
        if int(self.L) < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}", "memory.L")
        if self.mode == "spc_dtc":
            if self.omega is None or self.theta is None:
                raise ConfigError("spc_dtc needs omega and theta", "memory.omega")
            if not 0.0 <= self.omega <= 1.0:
                raise ConfigError(f"omega must be in [0, 1], got {self.omega}", "memory.omega")
            if not 0.0 < self.theta < 1.0:
                raise ConfigError(f"theta must be in (0, 1), got {self.theta}", "memory.theta")


def client_memory(spec: MemorySpec) -> float:
    """Average client footprint in the same unit as ``Mem0``.

    baseline holds model, local and guided perturbations and the forward
    gradient for every layer (4 x Mem0); with layer-wise pipelining only one
    layer of each perturbation is resident; compressing a fraction ``omega`` of
    that layer to ratio ``theta`` saves ``omega (1 - theta) / L`` more.
    """
    if spec.mode == "baseline":
        return 4.0 * spec.Mem0
    factor = 1.0 + 2.0 / spec.L
    if spec.mode == "spc_dtc":
        factor -= spec.omega * (1.0 - spec.theta) / spec.L
    return factor * spec.Mem0


def memory_reduction(Mem0: float, L: int) -> float:
    return client_memory(MemorySpec(Mem0, L, mode="baseline")) - client_memory(MemorySpec(Mem0, L, mode="spc"))


@dataclass(frozen=True)
class ActivationModel:
    L: int  # layers
    L_ctx: int  # context length in tokens
    B: int  # batch size
    D: int  # hidden size
    H: int  # attention heads
    V_fwd: int
    V_bwd: int
    P: int = 0  # trainable parameters

    def __post_init__(self):
        for name in ("L", "L_ctx", "B", "D", "H", "V_fwd", "V_bwd", "P"):
            if getattr(self, name) < 0:
                raise ConfigError(f"must be >= 0, got {getattr(self, name)}", f"activation.{name}")


# Illustrative LLaMA-7B-like shape; V_fwd/V_bwd are rough stored-tensor counts.
LLAMA_7B_LIKE = ActivationModel(L=32, L_ctx=1024, B=1, D=4096, H=32, V_fwd=16, V_bwd=16, P=6_738_415_616)


def estimate_activation_memory(model: ActivationModel) -> float:
    """``2 L (V_fwd + V_bwd) L_ctx B D + 5 H L_ctx B``, coefficients as written."""
    m = model
    return float(2 * m.L * (m.V_fwd + m.V_bwd) * m.L_ctx * m.B * m.D + 5 * m.H * m.L_ctx * m.B)


def finetune_memory_breakdown(model: ActivationModel) -> dict:
    """Bytes for FP16 weights, FP32 AdamW state and gradients, and FP16 activations."""
    parts = {
        "parameters": 2.0 * model.P,
        "optimizer": 8.0 * model.P,
        "gradients": 4.0 * model.P,
        "activations": estimate_activation_memory(model),
    }
    parts["total"] = sum(parts.values())
    return parts
