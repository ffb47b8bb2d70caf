"""Cloud / edge / client protocol for federated zeroth-order fine-tuning.

One round (FedSGD, one global step):

1. the edge broadcasts the global model to every client;
2. the cloud takes a BP step on public data and, in guided rounds
   (``round % gamma == 0``), rebuilds its gradient basis and ships guided
   perturbations layer by layer to the clients and the edge;
3. each client evaluates ``L(W + eps z_h) - L(W - eps z_h)`` per probe and
   uploads only that scalar;
4. the edge regenerates every client's perturbation from the shared seed,
   reconstructs ``delta / (2 eps) * z_h``, aggregates with the client weights
   and steps the global model;
5. every ``cloud_sync_every`` rounds the edge pushes the model to the cloud.

Everything runs in-process over a deterministic message bus. Latency is
modeled from message sizes, never measured.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .compression import DecompressionModel, TransmissionPlan, choose_omega, compress_chunk, decompress_chunk
from .errors import ConfigError, NumericError, StragglerError
from .guidance import ALPHA_MODES, CloudGuidance, adaptive_alpha, sample_guided
from .model import Batch, ParameterVector, backprop_gradient, forward_loss, predict
from .pipeline import MemorySpec, PipelineSpec, client_memory, simulate_pipeline
from .rng import CLOUD_STREAM, PerturbationSpec, StreamAddress, guided_address
from .zoo import NORMALIZATIONS, probe_vector, reconstruct_gradient, two_point_loss_diff

log = logging.getLogger(__name__)

MODES = ("pure_zoo", "zgr", "bp_oracle")
CLOUD, EDGE = "cloud", "edge"

METRIC_COLUMNS = (
    "round",
    "sim_wall_clock_s",
    "train_loss",
    "eval_accuracy",
    "alpha_used",
    "guided_flag",
    "bytes_cloud_to_client",
    "bytes_client_to_edge",
    "client_mem_bytes",
)
METRICS_SCHEMA_VERSION = 1


def client_name(client_id: int) -> str:
    return f"client:{client_id}"


# -- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class ModelBroadcast:
    sender: str
    recipient: str
    round: int
    params: np.ndarray = field(repr=False)
    root_seed: int
    byte_size: int


@dataclass(frozen=True)
class GuidedChunk:
    """One layer of a guided perturbation ``V z_g``, raw or partly quantized."""

    sender: str
    recipient: str
    round: int
    target_client: int  # whose probe this belongs to; CLOUD_STREAM when shared
    probe_index: int
    layer_index: int
    m: int
    block: object = field(repr=False)  # QuantizedBlock or None
    raw: np.ndarray = field(repr=False)
    byte_size: int

    @property
    def quantized(self) -> bool:
        return self.block is not None

    def values(self) -> np.ndarray:
        return decompress_chunk(self.block, self.raw)


@dataclass(frozen=True)
class LossReport:
    sender: str
    recipient: str
    client_id: int
    round: int
    probe_index: int
    delta: float
    byte_size: int


@dataclass(frozen=True)
class GradientReport:
    """Full gradient upload; only used by the ``bp_oracle`` baseline."""

    sender: str
    recipient: str
    client_id: int
    round: int
    gradient: np.ndarray = field(repr=False)
    byte_size: int


@dataclass(frozen=True)
class ModelSync:
    sender: str
    recipient: str
    round: int
    params: np.ndarray = field(repr=False)
    byte_size: int


def message_record(msg) -> dict:
    """Flat JSON-serialisable summary of a message (arrays are omitted)."""
    rec = {"kind": type(msg).__name__, "round": msg.round, "sender": msg.sender,
           "recipient": msg.recipient, "byte_size": int(msg.byte_size)}
    if isinstance(msg, GuidedChunk):
        target = None if msg.target_client == CLOUD_STREAM else msg.target_client
        rec.update(target_client=target, probe_index=msg.probe_index, layer_index=msg.layer_index,
                   quantized=msg.quantized, length=int(msg.raw.size + (msg.block.original_len if msg.block else 0)))
    elif isinstance(msg, LossReport):
        rec.update(client_id=msg.client_id, probe_index=msg.probe_index, delta=float(msg.delta))
    elif isinstance(msg, GradientReport):
        rec.update(client_id=msg.client_id, length=int(msg.gradient.size))
    elif isinstance(msg, ModelBroadcast):
        rec.update(root_seed=msg.root_seed, length=int(msg.params.size))
    elif isinstance(msg, ModelSync):
        rec.update(length=int(msg.params.size))
    return rec


class MessageBus:
    """In-process delivery log for the current round, plus an optional audit trace."""

    def __init__(self, keep_trace: bool = False):
        self.keep_trace = keep_trace
        self.trace: list[dict] = []
        self.current: list = []

    def send(self, msg):
        self.current.append(msg)
        if self.keep_trace:
            self.trace.append(message_record(msg))

    def start_round(self):
        self.current = []

    def delivered(self, kind, recipient=None):
        return [m for m in self.current if isinstance(m, kind) and (recipient is None or m.recipient == recipient)]

    def bytes_between(self, sender_prefix: str, recipient_prefix: str) -> int:
        return sum(m.byte_size for m in self.current
                   if m.sender.startswith(sender_prefix) and m.recipient.startswith(recipient_prefix))

    def dump_trace(self, path):
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class FederationConfig:
    N: int = 10
    weights: tuple | None = None  # None: proportional to client data size
    eta: float = 0.1
    epsilon: float = 1e-3
    alpha: float = 0.5
    alpha_mode: str = "fixed"
    gamma: int = 5
    m_max: int = 16
    K: int = 1
    rounds_total: int = 100
    cloud_sync_every: int | None = None  # None: every gamma rounds
    root_seed: int = 0
    mode: str = "zgr"
    cloud_lr: float = 0.1
    client_batch: int = 8  # 0: whole local dataset
    public_batch: int = 16
    normalization: str = "matched"
    shared_guidance: bool = False
    basis_tol: float = 1e-10

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"must be >= 1, got {self.N}", "federation.N")
        if self.gamma < 1:
            raise ConfigError(f"must be >= 1, got {self.gamma}", "federation.gamma")
        if self.K < 1:
            raise ConfigError(f"must be >= 1, got {self.K}", "federation.K")
        if self.m_max < 1:
            raise ConfigError(f"must be >= 1, got {self.m_max}", "federation.m_max")
        if self.rounds_total < 1:
            raise ConfigError(f"must be >= 1, got {self.rounds_total}", "federation.rounds_total")
        if not self.epsilon > 0:
            raise ConfigError(f"must be > 0, got {self.epsilon}", "federation.epsilon")
        if not self.eta > 0:
            raise ConfigError(f"must be > 0, got {self.eta}", "federation.eta")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"must be in [0, 1], got {self.alpha}", "federation.alpha")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"must be one of {ALPHA_MODES}, got {self.alpha_mode!r}", "federation.alpha_mode")
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}, got {self.mode!r}", "federation.mode")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"must be one of {NORMALIZATIONS}", "federation.normalization")
        if self.cloud_sync_every is not None and self.cloud_sync_every < 1:
            raise ConfigError("must be >= 1", "federation.cloud_sync_every")
        if self.client_batch < 0 or self.public_batch < 1:
            raise ConfigError("batch sizes must be positive (client_batch 0 means full)", "federation.client_batch")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.N,):
                raise ConfigError(f"need {self.N} weights, got {w.size}", "federation.weights")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError("weights must be nonnegative and sum to 1", "federation.weights")

    @property
    def sync_every(self) -> int:
        return self.gamma if self.cloud_sync_every is None else self.cloud_sync_every

    def is_guided(self, round_index: int) -> bool:
        return self.mode == "zgr" and round_index % self.gamma == 0


@dataclass(frozen=True)
class SystemModel:
    """Link, compute and compression parameters for simulated wall clock and memory."""

    bandwidth_Bps: float = 1.25e6  # 10 Mbit/s
    param_bytes: int = 2  # FP16 on the wire and in client memory
    client_flops: float = 1e9
    cloud_flops: float = 1e11
    loss_report_bytes: int = 20  # three uint32 ids + one float64
    header_bytes: int = 16
    spc: bool = True
    transfer: str = "store_and_forward"
    dtc: bool = True
    dtc_bits: int | None = 4
    dtc_theta: float = 0.25
    dtc_omega: float | str = "adaptive"
    dtc_grid_step: float = 0.05
    dtc_constraint: str = "effective"
    decomp_overhead_s: float = 2e-4
    decomp_throughput_Bps: float = 2e9

    def __post_init__(self):
        if self.bandwidth_Bps <= 0:
            raise ConfigError("must be > 0", "system.bandwidth_Bps")
        if self.client_flops <= 0 or self.cloud_flops <= 0:
            raise ConfigError("must be > 0", "system.client_flops")
        if self.dtc_bits is not None and self.dtc_bits not in range(2, 9):
            raise ConfigError(f"must be in 2..8 or null, got {self.dtc_bits}", "dtc.bits")
        if not 0.0 < self.dtc_theta < 1.0:
            raise ConfigError(f"must be in (0, 1), got {self.dtc_theta}", "dtc.theta")
        if self.dtc_omega != "adaptive" and not (
                isinstance(self.dtc_omega, (int, float)) and 0.0 <= self.dtc_omega <= 1.0):
            raise ConfigError(f"must be 'adaptive' or in [0, 1], got {self.dtc_omega!r}", "dtc.omega")

    @property
    def decomp_model(self) -> DecompressionModel:
        return DecompressionModel(self.decomp_overhead_s, self.decomp_throughput_Bps)

    @property
    def quantizing(self) -> bool:
        return self.dtc and self.dtc_bits is not None


@dataclass(frozen=True)
class DatasetBundle:
    clients: tuple  # one Batch per client
    public: Batch
    eval: Batch


# -- state ------------------------------------------------------------------

@dataclass
class RoundOutcome:
    round: int
    guided: bool
    alpha: float
    gradient: np.ndarray
    wall_clock_s: float
    bytes_cloud_to_client: int
    bytes_client_to_edge: int
    omega: float


@dataclass
class FederationState:
    config: FederationConfig
    system: SystemModel
    data: DatasetBundle
    params: ParameterVector
    weights: np.ndarray
    cloud: CloudGuidance | None
    bus: MessageBus
    round: int = 0
    last: RoundOutcome | None = None
    fallbacks: list = field(default_factory=list)


def init_state(config: FederationConfig, data: DatasetBundle, params: ParameterVector,
               system: SystemModel | None = None, trace: bool = False) -> FederationState:
    if len(data.clients) != config.N:
        raise ConfigError(f"config has N={config.N} but {len(data.clients)} client datasets", "federation.N")
    if config.weights is None:
        sizes = np.array([b.size for b in data.clients], dtype=np.float64)
        weights = sizes / sizes.sum()
    else:
        weights = np.asarray(config.weights, dtype=np.float64)
    cloud = None
    if config.mode == "zgr":
        cloud = CloudGuidance(params.copy(), lr=config.cloud_lr, m_max=config.m_max, tol=config.basis_tol)
    return FederationState(config, system or SystemModel(), data, params.copy(), weights, cloud, MessageBus(trace))


def _minibatch(batch: Batch, size: int, root_seed: int, round_index: int, stream: int) -> Batch:
    if size == 0 or size >= batch.size:
        return batch
    rng = np.random.default_rng([root_seed, round_index, stream, 0x5A47])
    idx = np.sort(rng.choice(batch.size, size=size, replace=False))
    return Batch(batch.inputs[idx], batch.labels[idx])


def client_batch(state: FederationState, client_id: int, round_index: int) -> Batch:
    cfg = state.config
    return _minibatch(state.data.clients[client_id], cfg.client_batch, cfg.root_seed, round_index, client_id)


def probe_spec(config: FederationConfig, round_index: int, client_id: int, probe: int,
               alpha: float, guided: bool) -> PerturbationSpec:
    return PerturbationSpec(StreamAddress(config.root_seed, round_index, client_id, probe), config.epsilon, alpha, guided)


def _guided_key(config: FederationConfig, client_id: int, probe: int):
    return (CLOUD_STREAM if config.shared_guidance else client_id, probe)


# -- roles ------------------------------------------------------------------

def _current_alpha(state: FederationState) -> float:
    cfg = state.config
    if cfg.alpha_mode == "fixed" or state.cloud is None or not state.cloud.history:
        return cfg.alpha
    # Plug-in scales: a two-point probe along g has error ~ d |g|^2, averaged over N*K probes;
    # the guidance error is the spread of the stored cloud gradients.
    g = np.mean(np.asarray(state.cloud.history), axis=0)
    zoo_scale = state.params.d * float(g @ g) / (cfg.N * cfg.K)
    return adaptive_alpha(zoo_scale, state.cloud.spread(), "lambda_star", cfg.alpha)


def _omega(state: FederationState, layer_bytes: float, apply_s: float) -> float:
    sysm = state.system
    if not sysm.quantizing:
        return 0.0
    if sysm.dtc_omega != "adaptive":
        return float(sysm.dtc_omega)
    plan = TransmissionPlan(layer_bytes, sysm.bandwidth_Bps, sysm.dtc_theta, apply_s, sysm.decomp_model)
    return choose_omega(plan, sysm.dtc_grid_step, sysm.dtc_constraint).omega


def _chunk_bytes(block, raw, param_bytes: int, header: int) -> int:
    return header + (block.nbytes if block is not None else 0) + raw.size * param_bytes


def cloud_guided_broadcast(state: FederationState, round_index: int, omega: float):
    """Sample guided perturbations and send them layer by layer to clients and edge.

    Returns the subspace dimension used, or 0 when the basis is empty.
    """
    cfg, sysm = state.config, state.system
    subspace = state.cloud.rebuild()
    if subspace is None:
        state.fallbacks.append(round_index)
        log.warning("round %d: empty gradient basis, falling back to local perturbations", round_index)
        return 0
    bits = sysm.dtc_bits if sysm.quantizing else None
    layer_map = state.params.layer_map
    keys = sorted({_guided_key(cfg, i, k) for i in range(cfg.N) for k in range(cfg.K)})
    for target, probe in keys:
        guided = sample_guided(subspace, guided_address(cfg.root_seed, round_index, target, probe))
        recipients = [client_name(i) for i in range(cfg.N)] if target == CLOUD_STREAM else [client_name(target)]
        recipients.append(EDGE)
        for layer in range(len(layer_map)):
            block, raw = compress_chunk(guided.chunk(layer_map, layer), omega, bits)
            size = _chunk_bytes(block, raw, sysm.param_bytes, sysm.header_bytes)
            for who in recipients:
                state.bus.send(GuidedChunk(CLOUD, who, round_index, target, probe, layer, subspace.m, block, raw, size))
    return subspace.m


def received_guidance(state: FederationState, recipient: str) -> dict:
    """Reassemble ``{(target, probe): V z_g}`` from the chunks delivered to ``recipient``."""
    parts: dict = {}
    for msg in state.bus.delivered(GuidedChunk, recipient):
        parts.setdefault((msg.target_client, msg.probe_index), {})[msg.layer_index] = msg.values()
    n_layers = state.params.num_layers
    out = {}
    for key, layers in parts.items():
        if len(layers) != n_layers:
            raise StragglerError(key[0], state.round)
        out[key] = np.concatenate([layers[k] for k in range(n_layers)])
    return out


def client_probe(state: FederationState, client_id: int, round_index: int, probe: int,
                 alpha: float, guided: bool, m: int, guidance: dict, params: ParameterVector):
    """Perturbation a client (or the edge, regenerating) uses for one probe."""
    cfg = state.config
    spec = probe_spec(cfg, round_index, client_id, probe, alpha, guided)
    g = guidance[_guided_key(cfg, client_id, probe)] if guided and m else None
    return spec, probe_vector(spec, params.layer_map, g, m, cfg.normalization)


def client_step(state: FederationState, client_id: int, params: ParameterVector, round_index: int,
                alpha: float, guided: bool, m: int):
    """Client role: evaluate every probe and upload one scalar per probe."""
    cfg, sysm = state.config, state.system
    me = client_name(client_id)
    guidance = received_guidance(state, me) if guided and m else {}
    batch = client_batch(state, client_id, round_index)
    for probe in range(cfg.K):
        spec, z = client_probe(state, client_id, round_index, probe, alpha, guided, m, guidance, params)
        diff = two_point_loss_diff(params, z, spec.epsilon, batch, client_id=client_id,
                                   round=round_index, probe_index=probe)
        state.bus.send(LossReport(me, EDGE, client_id, round_index, probe, diff.delta, sysm.loss_report_bytes))


def client_local_gradient(state: FederationState, client_id: int, round_index: int, alpha: float,
                          guided: bool, m: int) -> np.ndarray:
    """Test-only path: the client's own ``mean_k delta_k / (2 eps) z_k`` without the edge."""
    cfg = state.config
    guidance = received_guidance(state, client_name(client_id)) if guided and m else {}
    batch = client_batch(state, client_id, round_index)
    total = np.zeros(state.params.d)
    for probe in range(cfg.K):
        spec, z = client_probe(state, client_id, round_index, probe, alpha, guided, m, guidance, state.params)
        diff = two_point_loss_diff(state.params, z, spec.epsilon, batch)
        total += reconstruct_gradient(diff.delta, z, spec.epsilon)
    return total / cfg.K


def edge_aggregate(state: FederationState, reports, round_index: int, alpha: float, guided: bool, m: int) -> np.ndarray:
    """Regenerate each probe, reconstruct and reduce in (client_id, probe) order.

    Per-client estimates are averaged over probes, then weighted by ``w_i``.
    """
    cfg = state.config
    by_key = {}
    for r in reports:
        if r.round == round_index:
            by_key[(r.client_id, r.probe_index)] = r.delta
    guidance = received_guidance(state, EDGE) if guided and m else {}
    total = np.zeros(state.params.d)
    for client_id in range(cfg.N):
        client_sum = np.zeros(state.params.d)
        for probe in range(cfg.K):
            if (client_id, probe) not in by_key:
                raise StragglerError(client_id, round_index, probe)
            spec, z = client_probe(state, client_id, round_index, probe, alpha, guided, m, guidance, state.params)
            client_sum += reconstruct_gradient(by_key[(client_id, probe)], z, spec.epsilon)
        total += state.weights[client_id] * (client_sum / cfg.K)
    return total


def _round_timing(state: FederationState, guided: bool, m: int, omega: float) -> float:
    """Modeled seconds for one round; clients run in parallel on separate links."""
    cfg, sysm = state.config, state.system
    p = state.params
    d = p.d
    B0 = sysm.bandwidth_Bps
    batch = cfg.client_batch if cfg.client_batch else max(b.size for b in state.data.clients)
    forward_s = 2.0 * batch * d / sysm.client_flops
    seconds = (d * sysm.param_bytes + sysm.header_bytes) / B0  # model broadcast
    if cfg.mode == "bp_oracle":
        return seconds + 3.0 * forward_s + (d * sysm.param_bytes + sysm.header_bytes) / B0
    seconds += cfg.K * 2.0 * forward_s + cfg.K * sysm.loss_report_bytes / B0
    if guided and m > 0:
        t_cs, t_t, t_cc = [], [], []
        for _, length in p.layer_map:
            t_cs.append(cfg.K * 2.0 * length * m / sysm.cloud_flops)
            raw_bytes = length * sysm.param_bytes
            sent = raw_bytes * (1.0 - omega) + raw_bytes * omega * sysm.dtc_theta if sysm.quantizing else raw_bytes
            t_t.append(cfg.K * (sent + sysm.header_bytes) / B0)
            decomp = sysm.decomp_model(raw_bytes * omega) if sysm.quantizing else 0.0
            t_cc.append(cfg.K * (3.0 * length / sysm.client_flops + decomp))
        spec = PipelineSpec.from_layers(t_cs, t_t, t_cc)
        seconds += simulate_pipeline(spec, pipelined=sysm.spc, transfer=sysm.transfer).makespan
    return seconds


def client_memory_bytes(state: FederationState, omega: float) -> float:
    sysm = state.system
    mem0 = state.params.d * sysm.param_bytes
    L = state.params.num_layers
    if state.config.mode == "bp_oracle" or not sysm.spc:
        return client_memory(MemorySpec(mem0, L, mode="baseline"))
    if sysm.quantizing:
        return client_memory(MemorySpec(mem0, L, omega, sysm.dtc_theta, mode="spc_dtc"))
    return client_memory(MemorySpec(mem0, L, mode="spc"))


def layer_omega(state: FederationState) -> float:
    """Compression proportion for the average layer of the current model."""
    sysm = state.system
    p = state.params
    mean_len = p.d / p.num_layers
    apply_s = 3.0 * mean_len / sysm.client_flops
    return _omega(state, mean_len * sysm.param_bytes, apply_s)


def run_round(state: FederationState, round_index: int | None = None) -> FederationState:
    cfg, sysm = state.config, state.system
    r = state.round if round_index is None else round_index
    state.round = r
    state.bus.start_round()
    params = state.params
    d = params.d

    for i in range(cfg.N):
        state.bus.send(ModelBroadcast(EDGE, client_name(i), r, params.values, cfg.root_seed,
                                      d * sysm.param_bytes + sysm.header_bytes))

    guided, m, alpha = False, 0, 1.0
    omega = layer_omega(state) if cfg.mode == "zgr" else 0.0
    if cfg.mode == "zgr":
        pub = _minibatch(state.data.public, cfg.public_batch, cfg.root_seed, r, CLOUD_STREAM % (2**32))
        state.cloud.bp_round(pub)
        if cfg.is_guided(r):
            alpha = _current_alpha(state)
            guided = True
            if alpha < 1.0:
                # alpha == 1 needs no guided term; the hybrid is just the rescaled local draw.
                m = cloud_guided_broadcast(state, r, omega)
                if m == 0:
                    guided, alpha = False, 1.0

    if cfg.mode == "bp_oracle":
        for i in range(cfg.N):
            g = backprop_gradient(params, client_batch(state, i, r))
            state.bus.send(GradientReport(client_name(i), EDGE, i, r, g, d * sysm.param_bytes + sysm.header_bytes))
        grads = {m_.client_id: m_.gradient for m_ in state.bus.delivered(GradientReport, EDGE)}
        agg = np.zeros(d)
        for i in range(cfg.N):
            if i not in grads:
                raise StragglerError(i, r)
            agg += state.weights[i] * grads[i]
    else:
        for i in range(cfg.N):
            client_step(state, i, params, r, alpha, guided, m)
        agg = edge_aggregate(state, state.bus.delivered(LossReport, EDGE), r, alpha, guided, m)

    values = params.values - cfg.eta * agg
    if not np.all(np.isfinite(values)):
        raise NumericError(f"global model became non-finite in round {r}")
    state.params = params.with_values(values)

    if state.cloud is not None and (r + 1) % cfg.sync_every == 0:
        state.bus.send(ModelSync(EDGE, CLOUD, r, state.params.values, d * sysm.param_bytes + sysm.header_bytes))
        state.cloud.sync(state.params)

    state.last = RoundOutcome(
        round=r, guided=guided, alpha=alpha if guided else 1.0, gradient=agg,
        wall_clock_s=_round_timing(state, guided, m, omega),
        bytes_cloud_to_client=state.bus.bytes_between(CLOUD, "client:"),
        bytes_client_to_edge=state.bus.bytes_between("client:", EDGE),
        omega=omega if guided else 0.0,
    )
    state.round = r + 1
    return state


# -- experiment -------------------------------------------------------------

@dataclass
class MetricsSeries:
    rows: list = field(default_factory=list)
    columns: tuple = METRIC_COLUMNS

    def append(self, **row):
        self.rows.append(tuple(row[c] for c in self.columns))

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([row[k] for row in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def train_loss(state: FederationState) -> float:
    return float(sum(w * forward_loss(state.params, b) for w, b in zip(state.weights, state.data.clients)))


def eval_accuracy(params: ParameterVector, batch: Batch) -> float:
    return float(np.mean(predict(params, batch.inputs) == batch.labels))


def run_experiment(config: FederationConfig, data: DatasetBundle, params: ParameterVector,
                   system: SystemModel | None = None, trace: bool = False):
    """Run ``rounds_total`` rounds; returns ``(MetricsSeries, final_state)``."""
    state = init_state(config, data, params, system, trace)
    metrics = MetricsSeries()
    clock = 0.0
    for r in range(config.rounds_total):
        run_round(state, r)
        out = state.last
        clock += out.wall_clock_s
        metrics.append(
            round=r,
            sim_wall_clock_s=clock,
            train_loss=train_loss(state),
            eval_accuracy=eval_accuracy(state.params, data.eval),
            alpha_used=out.alpha,
            guided_flag=out.guided,
            bytes_cloud_to_client=out.bytes_cloud_to_client,
            bytes_client_to_edge=out.bytes_client_to_edge,
            client_mem_bytes=client_memory_bytes(state, out.omega),
        )
    return metrics, state
