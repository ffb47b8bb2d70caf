"""Datasets and non-IID client partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .federation import DatasetBundle
from .model import Batch

__all__ = ["Partition", "gaussian_mixture", "load_csv", "make_bundle", "partition_dirichlet"]


def gaussian_mixture(n: int, features: int, classes: int, separation: float = 1.0, seed: int = 0,
                     means=None):
    """``n`` points from ``classes`` isotropic unit-variance Gaussians.

    Class means are drawn once from ``N(0, separation^2 / features * I)`` unless given.
    Returns ``(X, y, means)``.
    """
    if n < 1 or features < 1 or classes < 2:
        raise ConfigError("need n >= 1, features >= 1 and classes >= 2", "dataset")
    rng = np.random.default_rng(seed)
    if means is None:
        means = rng.standard_normal((classes, features)) * (separation / np.sqrt(features))
    y = rng.integers(0, classes, size=n)
    X = means[y] + rng.standard_normal((n, features))
    return X, y.astype(np.int64), means


def load_csv(path, label_column: str = "label"):
    """Numeric CSV with a header row; ``label_column`` holds integer class ids."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if label_column not in header:
            raise ConfigError(f"column {label_column!r} not in header {header}", "dataset.label_column")
        rows = [row for row in reader if row]
    k = header.index(label_column)
    table = np.array(rows, dtype=np.float64)
    y = table[:, k]
    if not np.all(y == np.round(y)) or y.min() < 0:
        raise ConfigError("labels must be nonnegative integers", "dataset.label_column")
    X = np.delete(table, k, axis=1)
    return X, y.astype(np.int64)


@dataclass(frozen=True)
class Partition:
    clients: tuple  # index arrays, one per client
    public: np.ndarray


def partition_dirichlet(labels, N: int, concentration: float, seed: int = 0,
                        public_fraction: float = 0.1) -> Partition:
    """Split sample indices into a public holdout and ``N`` label-skewed clients.

    Each client draws its own label proportions from ``Dirichlet(concentration)``
    and fills an equal share of the non-public samples by sampling labels from
    those proportions, without replacement. When a label runs out, the
    client's proportions are renormalised over the labels still available.
    """
    labels = np.asarray(labels)
    n = labels.size
    if concentration <= 0:
        raise ConfigError(f"must be > 0, got {concentration}", "dataset.concentration")
    if not 0.0 <= public_fraction < 1.0:
        raise ConfigError(f"must be in [0, 1), got {public_fraction}", "dataset.public_fraction")
    n_public = int(round(public_fraction * n))
    if N < 1 or n - n_public < N:
        raise ConfigError(f"cannot give {N} clients a sample each from {n - n_public} samples", "federation.N")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    public = np.sort(order[:n_public])
    pool = order[n_public:]

    classes = np.unique(labels)
    pools = {c: list(pool[labels[pool] == c]) for c in classes}
    sizes = np.full(N, pool.size // N)
    sizes[: pool.size % N] += 1

    clients = []
    for i in range(N):
        p = rng.dirichlet(np.full(classes.size, concentration))
        taken: list = []
        need = int(sizes[i])
        while need > 0:
            avail = np.array([len(pools[c]) for c in classes], dtype=np.float64)
            q = p * (avail > 0)
            q = q / q.sum() if q.sum() > 0 else avail / avail.sum()
            counts = rng.multinomial(need, q)
            for c, k in zip(classes, counts):
                k = min(int(k), len(pools[c]))
                if k:
                    taken.extend(pools[c][:k])
                    del pools[c][:k]
                    need -= k
        clients.append(np.sort(np.asarray(taken, dtype=np.int64)))
    return Partition(tuple(clients), public)


def make_bundle(X, y, X_eval, y_eval, N: int, concentration: float, seed: int = 0,
                public_fraction: float = 0.1) -> DatasetBundle:
    part = partition_dirichlet(y, N, concentration, seed, public_fraction)
    if part.public.size == 0:
        raise ConfigError("public split is empty; raise dataset.public_fraction", "dataset.public_fraction")
    clients = tuple(Batch(X[idx], y[idx]) for idx in part.clients)
    return DatasetBundle(clients, Batch(X[part.public], y[part.public]), Batch(X_eval, y_eval))
