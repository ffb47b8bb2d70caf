"""Experiment configuration: flat dotted keys in a YAML or JSON file.

Example::

    mode: zgr
    model.arch: [100, 10]
    dataset.kind: gaussian_mixture
    federation.gamma: 5
    dtc.bits: 4

Every key is listed in ``KEYS``; anything else is rejected. Nested mappings are
accepted too and flattened to the same dotted form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .federation import MODES, FederationConfig, SystemModel
from .pipeline import MemorySpec, PipelineSpec

__all__ = [
    "DatasetConfig",
    "ExperimentConfig",
    "KEYS",
    "apply_overrides",
    "config_from_dict",
    "config_to_dict",
    "flatten",
    "load_config",
    "load_pipeline_file",
    "read_mapping",
    "save_config",
    "with_mode",
]

DATASET_KINDS = ("gaussian_mixture", "csv")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "gaussian_mixture"
    n_train: int = 6000
    n_eval: int = 2000
    features: int = 100
    classes: int = 10
    separation: float = 3.0
    seed: int = 0
    concentration: float = 0.5
    public_fraction: float = 0.1
    path: str | None = None
    label_column: str = "label"
    eval_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"must be one of {DATASET_KINDS}, got {self.kind!r}", "dataset.kind")
        if self.kind == "csv" and not self.path:
            raise ConfigError("csv datasets need a path", "dataset.path")
        if self.concentration <= 0:
            raise ConfigError(f"must be > 0, got {self.concentration}", "dataset.concentration")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("sample counts must be >= 1", "dataset.n_train")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "zgr"
    arch: tuple = (100, 10)
    model_seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    system: SystemModel = field(default_factory=SystemModel)
    local_epochs: int = 1
    out_dir: str | None = None
    trace: bool = False
    baseline: str | None = None


def _system(name):
    return ("system", name)


# dotted key -> (section, attribute)
KEYS = {
    "mode": ("top", "mode"),
    "model.arch": ("top", "arch"),
    "model.seed": ("top", "model_seed"),
    **{f"dataset.{f.name}": ("dataset", f.name) for f in fields(DatasetConfig)},
    **{f"federation.{f.name}": ("federation", f.name) for f in fields(FederationConfig) if f.name != "mode"},
    "federation.local_epochs": ("top", "local_epochs"),
    "network.bandwidth_Bps": _system("bandwidth_Bps"),
    "network.param_bytes": _system("param_bytes"),
    "network.header_bytes": _system("header_bytes"),
    "network.loss_report_bytes": _system("loss_report_bytes"),
    "compute.client_flops": _system("client_flops"),
    "compute.cloud_flops": _system("cloud_flops"),
    "pipeline.enabled": _system("spc"),
    "pipeline.transfer": _system("transfer"),
    "dtc.enabled": _system("dtc"),
    "dtc.bits": _system("dtc_bits"),
    "dtc.theta": _system("dtc_theta"),
    "dtc.omega": _system("dtc_omega"),
    "dtc.grid_step": _system("dtc_grid_step"),
    "dtc.constraint": _system("dtc_constraint"),
    "dtc.decomp_overhead_s": _system("decomp_overhead_s"),
    "dtc.decomp_throughput_Bps": _system("decomp_throughput_Bps"),
    "output.dir": ("top", "out_dir"),
    "output.trace": ("top", "trace"),
    "output.baseline": ("top", "baseline"),
}


def flatten(mapping, prefix: str = "") -> dict:
    flat = {}
    for key, value in mapping.items():
        key = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, key + "."))
        else:
            flat[key] = value
    return flat


def read_mapping(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a key-value mapping")
    return flatten(data)


_INT_FIELDS = {"N", "gamma", "m_max", "K", "rounds_total", "root_seed", "client_batch", "public_batch",
               "n_train", "n_eval", "features", "classes", "seed", "model_seed", "local_epochs",
               "param_bytes", "header_bytes", "loss_report_bytes", "cloud_sync_every", "dtc_bits"}
_FLOAT_FIELDS = {"eta", "epsilon", "alpha", "cloud_lr", "basis_tol", "separation", "concentration",
                 "public_fraction", "eval_fraction", "bandwidth_Bps", "client_flops", "cloud_flops",
                 "dtc_theta", "dtc_grid_step", "decomp_overhead_s", "decomp_throughput_Bps"}
_BOOL_FIELDS = {"shared_guidance", "spc", "dtc", "trace"}


_OPTIONAL = {"weights", "cloud_sync_every", "path", "dtc_bits", "out_dir", "baseline"}


def _coerce(key, attr, value):
    if value is None:
        if attr not in _OPTIONAL:
            raise ConfigError("value is required", key)
        return None
    try:
        if attr in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if attr in _INT_FIELDS:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if attr in _FLOAT_FIELDS:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if attr == "dtc_omega":
            return value if value == "adaptive" else float(value)
        if attr in ("arch", "weights"):
            return tuple(int(v) if attr == "arch" else float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value {value!r}", key) from exc
    return value


def config_from_dict(flat: dict) -> ExperimentConfig:
    """Build and validate a config from dotted keys; missing keys take defaults."""
    sections = {"top": {}, "dataset": {}, "federation": {}, "system": {}}
    for key, value in flatten(flat).items():
        if key not in KEYS:
            raise ConfigError("unknown configuration key", key)
        section, attr = KEYS[key]
        sections[section][attr] = _coerce(key, attr, value)

    top = sections["top"]
    mode = top.get("mode", "zgr")
    if mode not in MODES:
        raise ConfigError(f"must be one of {MODES}, got {mode!r}", "mode")
    if top.get("local_epochs", 1) != 1:
        raise ConfigError("only one local epoch (FedSGD) is supported", "federation.local_epochs")
    if top.get("arch") is None:
        top.pop("arch", None)
    dataset = DatasetConfig(**sections["dataset"])
    federation = FederationConfig(mode=mode, **sections["federation"])
    system = SystemModel(**sections["system"])
    cfg = ExperimentConfig(dataset=dataset, federation=federation, system=system, **top)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ExperimentConfig):
    arch = cfg.arch
    if len(arch) < 2 or min(arch) < 1:
        raise ConfigError(f"invalid architecture {arch}", "model.arch")
    if cfg.dataset.kind == "gaussian_mixture":
        if arch[0] != cfg.dataset.features:
            raise ConfigError(f"input size {arch[0]} != dataset.features {cfg.dataset.features}", "model.arch")
        if arch[-1] != cfg.dataset.classes:
            raise ConfigError(f"output size {arch[-1]} != dataset.classes {cfg.dataset.classes}", "model.arch")
    if cfg.federation.gamma > cfg.federation.rounds_total:
        raise ConfigError(f"gamma {cfg.federation.gamma} exceeds rounds_total {cfg.federation.rounds_total}",
                          "federation.gamma")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical flat mapping: every key, sorted, with plain YAML/JSON types."""
    section_objs = {"top": cfg, "dataset": cfg.dataset, "federation": cfg.federation, "system": cfg.system}
    out = {}
    for key, (section, attr) in KEYS.items():
        value = getattr(section_objs[section], attr)
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return dict(sorted(out.items()))


def load_config(path) -> ExperimentConfig:
    return config_from_dict(read_mapping(path))


def save_config(cfg: ExperimentConfig, path):
    data = config_to_dict(cfg)
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=True, default_flow_style=None))


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    flat = config_to_dict(cfg)
    flat.update(flatten(overrides))
    return config_from_dict(flat)


def load_pipeline_file(path):
    """``(PipelineSpec, MemorySpec or None)`` from a file with ``pipeline.*`` and ``memory.*`` keys."""
    flat = read_mapping(path)
    pipe = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("pipeline.")}
    mem = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith("memory.")}
    unknown = [k for k in flat if not k.startswith(("pipeline.", "memory."))]
    if unknown:
        raise ConfigError("unknown key in pipeline spec", unknown[0])
    transfer = pipe.pop("transfer", "store_and_forward")
    try:
        if "t_cs" in pipe and "t_t" in pipe and "t_cc" in pipe and "T_cs" not in pipe:
            spec = PipelineSpec.from_layers(pipe["t_cs"], pipe["t_t"], pipe["t_cc"])
        else:
            spec = PipelineSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in pipe.items()})
    except TypeError as exc:
        raise ConfigError(str(exc), "pipeline") from exc
    memory = None
    if mem:
        mem.setdefault("L", spec.L)
        try:
            memory = MemorySpec(**mem)
        except TypeError as exc:
            raise ConfigError(str(exc), "memory") from exc
    return spec, memory, transfer


def with_mode(cfg: ExperimentConfig, mode: str) -> ExperimentConfig:
    return replace(cfg, mode=mode, federation=replace(cfg.federation, mode=mode))
