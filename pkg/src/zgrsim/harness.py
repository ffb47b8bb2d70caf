"""Run orchestration: datasets from config, metrics files, summaries and sweeps."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, apply_overrides, config_to_dict, read_mapping, save_config
from .data import gaussian_mixture, load_csv, make_bundle
from .errors import ConfigError, ZGRError
from .federation import METRICS_SCHEMA_VERSION, DatasetBundle, MetricsSeries, run_experiment
from .model import Batch, ParameterVector, init_model

log = logging.getLogger(__name__)

ABLATIONS = {
    "full": {},
    "no_guidance": {"mode": "pure_zoo"},
    "no_spc": {"pipeline.enabled": False},
    "no_dtc": {"dtc.enabled": False},
}
SWEEP_COLUMNS = ("cell", "overrides", "status", "convergence_round", "final_accuracy",
                 "final_train_loss", "sim_wall_clock_s", "error")


def build_bundle(cfg: ExperimentConfig) -> DatasetBundle:
    ds = cfg.dataset
    if ds.kind == "gaussian_mixture":
        X, y, means = gaussian_mixture(ds.n_train, ds.features, ds.classes, ds.separation, ds.seed)
        X_eval, y_eval, _ = gaussian_mixture(ds.n_eval, ds.features, ds.classes, ds.separation,
                                             ds.seed + 1_000_003, means=means)
    else:
        X_all, y_all = load_csv(ds.path, ds.label_column)
        order = np.random.default_rng(ds.seed).permutation(y_all.size)
        n_eval = max(1, int(round(ds.eval_fraction * y_all.size)))
        X_eval, y_eval = X_all[order[:n_eval]], y_all[order[:n_eval]]
        X, y = X_all[order[n_eval:]], y_all[order[n_eval:]]
        if X.shape[1] != cfg.arch[0]:
            raise ConfigError(f"CSV has {X.shape[1]} features, model expects {cfg.arch[0]}", "model.arch")
        if y_all.max() >= cfg.arch[-1]:
            raise ConfigError(f"CSV label {y_all.max()} exceeds {cfg.arch[-1]} classes", "model.arch")
    return make_bundle(X, y, X_eval, y_eval, cfg.federation.N, ds.concentration, ds.seed, ds.public_fraction)


def build_model(cfg: ExperimentConfig) -> ParameterVector:
    return init_model(cfg.arch, cfg.model_seed)


def smoothed(values, window: int = 5) -> np.ndarray:
    """Trailing moving average; the first rounds average what is available."""
    values = np.asarray(values, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def first_round_reaching(accuracy, target: float, window: int = 5):
    """1-based round at which smoothed accuracy first reaches ``target``, else None."""
    hits = np.flatnonzero(smoothed(accuracy, window) >= target)
    return int(hits[0]) + 1 if hits.size else None


def convergence_round(accuracy, window: int = 5, fraction: float = 0.99) -> int:
    """First round whose smoothed accuracy reaches ``fraction`` of the smoothed maximum."""
    s = smoothed(accuracy, window)
    return first_round_reaching(accuracy, fraction * s.max(), window)


def summarize(metrics: MetricsSeries, cfg: ExperimentConfig, fallbacks=(), baseline=None) -> dict:
    acc = metrics.column("eval_accuracy")
    conv = convergence_round(acc)
    summary = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "mode": cfg.mode,
        "rounds": len(metrics),
        "convergence_round": conv,
        "final_accuracy": float(acc[-1]),
        "max_smoothed_accuracy": float(smoothed(acc).max()),
        "final_train_loss": float(metrics.column("train_loss")[-1]),
        "sim_wall_clock_s": float(metrics.column("sim_wall_clock_s")[-1]),
        "bytes_cloud_to_client": int(metrics.column("bytes_cloud_to_client").sum()),
        "bytes_client_to_edge": int(metrics.column("bytes_client_to_edge").sum()),
        "fallback_rounds": [int(r) for r in fallbacks],
        "baseline": None,
        "speedup_vs_baseline": None,
    }
    if baseline is not None:
        summary["baseline"] = baseline.get("mode")
        summary["speedup_vs_baseline"] = baseline["convergence_round"] / conv
    return summary


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


@dataclass
class RunResult:
    metrics: MetricsSeries
    summary: dict
    state: object


def load_baseline(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read baseline summary {path}: {exc}", "output.baseline") from exc


def run(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run one experiment; with ``out_dir`` write metrics.csv, summary.json, config.yaml
    and (if tracing) trace.ndjson there.
    """
    out_dir = out_dir or cfg.out_dir
    baseline = load_baseline(cfg.baseline) if cfg.baseline else None
    bundle = build_bundle(cfg)
    metrics, state = run_experiment(cfg.federation, bundle, build_model(cfg), cfg.system, trace=cfg.trace)
    summary = summarize(metrics, cfg, state.fallbacks, baseline)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "metrics.csv", metrics.to_csv())
        doc = dict(summary, metadata={"created_utc": datetime.now(timezone.utc).isoformat(),
                                      "zgrsim_version": __version__})
        _atomic_write(out / "summary.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        save_config(cfg, out / "config.yaml")
        if cfg.trace:
            state.bus.dump_trace(out / "trace.ndjson")
    return RunResult(metrics, summary, state)


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of ``{key: [values]}``; ``ablation`` names map to overrides."""
    keys = sorted(grid)
    cells = []
    for combo in itertools.product(*(list(grid[k]) for k in keys)):
        cell = {}
        for key, value in zip(keys, combo):
            if key == "ablation":
                if value not in ABLATIONS:
                    raise ConfigError(f"unknown ablation {value!r}; choose from {sorted(ABLATIONS)}", "ablation")
                cell["ablation"] = value
            else:
                cell[key] = value
        cells.append(cell)
    return cells


def _cell_overrides(cell: dict) -> dict:
    overrides = {k: v for k, v in cell.items() if k != "ablation"}
    overrides.update(ABLATIONS.get(cell.get("ablation", "full"), {}))
    return overrides


def sweep(cfg: ExperimentConfig, grid: dict, out_dir=None) -> list[dict]:
    """One run per grid cell on shared seeds; failing cells are recorded, not fatal."""
    rows = []
    for k, cell in enumerate(expand_grid(grid)):
        row = {"cell": k, "overrides": json.dumps(cell, sort_keys=True), "status": "ok",
               "convergence_round": None, "final_accuracy": None, "final_train_loss": None,
               "sim_wall_clock_s": None, "error": ""}
        try:
            cell_cfg = apply_overrides(cfg, _cell_overrides(cell))
            cell_dir = Path(out_dir) / f"cell_{k:03d}" if out_dir else None
            result = run(cell_cfg, cell_dir)
            for key in ("convergence_round", "final_accuracy", "final_train_loss", "sim_wall_clock_s"):
                row[key] = result.summary[key]
        except ZGRError as exc:
            log.warning("sweep cell %d failed: %s", k, exc)
            row.update(status="failed", error=str(exc))
        rows.append(row)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _atomic_write(Path(out_dir) / "results.csv", sweep_table(rows))
    return rows


def sweep_table(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if row[k] is None else row[k] for k in SWEEP_COLUMNS})
    return buf.getvalue()


def load_grid(path) -> dict:
    grid = read_mapping(path)
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError("grid values must be non-empty lists", key)
    return grid


def describe_config(cfg: ExperimentConfig) -> dict:
    return config_to_dict(cfg)


def batch_of(bundle: DatasetBundle) -> Batch:
    """All client data stacked into one batch."""
    return Batch(np.vstack([b.inputs for b in bundle.clients]), np.concatenate([b.labels for b in bundle.clients]))
