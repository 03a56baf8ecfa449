"""Synthetic classification data and cluster/device partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "DataShard",
    "PartitionSpec",
    "make_synthetic_dataset",
    "load_delimited_dataset",
    "partition",
]


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.features) != len(self.labels) or len(self.features) == 0:
            raise ValueError("features and labels must be non-empty and aligned")


@dataclass(frozen=True)
class DataShard:
    """One device's slice of the training data.

    ``features_aug`` carries a trailing bias column so the learner can use
    a single weight matrix.
    """

    features_aug: np.ndarray
    labels: np.ndarray
    owner: int

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError(f"device {self.owner} received an empty shard")

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class PartitionSpec:
    """How the dataset is spread over clusters and devices.

    scheme  "iid", "dirichlet" (with ``beta``), or "cluster_pathological"
            (with ``labels_per_cluster``)
    """

    scheme: str
    beta: float = 1.0
    labels_per_cluster: int = 2

    def __post_init__(self):
        if self.scheme not in ("iid", "dirichlet", "cluster_pathological"):
            raise ValueError(f"unknown partition scheme {self.scheme!r}")
        if self.scheme == "dirichlet" and self.beta <= 0:
            raise ValueError("dirichlet concentration must be positive")
        if self.scheme == "cluster_pathological" and self.labels_per_cluster < 1:
            raise ValueError("labels_per_cluster must be >= 1")


def make_synthetic_dataset(num_classes: int, dim: int, samples_per_class: int,
                           separation: float, seed: int) -> Dataset:
    """Gaussian class clusters with unit noise and scalable mean spread.

    At separation 0 all classes share one cloud (chance-level accuracy);
    at separation ~3 a linear softmax model separates them almost
    perfectly.
    """
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    means *= separation * np.sqrt(dim)
    xs, ys = [], []
    for c in range(num_classes):
        xs.append(means[c] + rng.normal(size=(samples_per_class, dim)))
        ys.append(np.full(samples_per_class, c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    perm = rng.permutation(len(y))
    return Dataset(x[perm], y[perm], num_classes)


def load_delimited_dataset(features_path: str, labels_path: str,
                           delimiter: str = ",") -> Dataset:
    """Import hook: numeric feature/label text files, same shard contract."""
    x = np.loadtxt(features_path, delimiter=delimiter, ndmin=2)
    y = np.loadtxt(labels_path, delimiter=delimiter, dtype=np.int64)
    return Dataset(x, y, int(y.max()) + 1)


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((len(x), 1))])


def _shards_from_assignment(dataset: Dataset, owner_of: np.ndarray,
                            num_devices: int, rng: np.random.Generator):
    # no device may end up empty: steal one sample from the largest shard
    counts = np.bincount(owner_of, minlength=num_devices)
    for dev in np.flatnonzero(counts == 0):
        donor = int(np.argmax(counts))
        take = rng.choice(np.flatnonzero(owner_of == donor))
        owner_of[take] = dev
        counts = np.bincount(owner_of, minlength=num_devices)
    shards = []
    for dev in range(num_devices):
        idx = np.flatnonzero(owner_of == dev)
        shards.append(DataShard(_augment(dataset.features[idx]),
                                dataset.labels[idx], dev))
    return shards


def partition(dataset: Dataset, spec: PartitionSpec, num_clusters: int,
              devices_per_cluster: int, rng: np.random.Generator):
    """Split the dataset into one shard per device (cluster-major order)."""
    num_devices = num_clusters * devices_per_cluster
    n = len(dataset.labels)
    if n < num_devices:
        raise ValueError("dataset smaller than the device count")

    if spec.scheme == "iid":
        owner_of = rng.permutation(np.arange(n) % num_devices)
    elif spec.scheme == "dirichlet":
        owner_of = np.zeros(n, dtype=np.int64)
        props = rng.dirichlet(np.full(dataset.num_classes, spec.beta),
                              size=num_devices)
        for c in range(dataset.num_classes):
            idx = rng.permutation(np.flatnonzero(dataset.labels == c))
            w = props[:, c]
            w = w / w.sum()
            split = np.floor(np.cumsum(w) * len(idx)).astype(np.int64)
            split[-1] = len(idx)
            start = 0
            for dev in range(num_devices):
                owner_of[idx[start:split[dev]]] = dev
                start = split[dev]
    else:  # cluster_pathological
        lc = min(spec.labels_per_cluster, dataset.num_classes)
        labels_of_cluster = [
            [(cl * lc + k) % dataset.num_classes for k in range(lc)]
            for cl in range(num_clusters)
        ]
        holders = {c: [cl for cl in range(num_clusters)
                       if c in labels_of_cluster[cl]]
                   for c in range(dataset.num_classes)}
        owner_of = np.empty(n, dtype=np.int64)
        for c in range(dataset.num_classes):
            idx = rng.permutation(np.flatnonzero(dataset.labels == c))
            # spread this label's samples over the devices of its clusters
            devs = [cl * devices_per_cluster + d
                    for cl in (holders[c] or list(range(num_clusters)))
                    for d in range(devices_per_cluster)]
            owner_of[idx] = np.asarray(devs)[np.arange(len(idx)) % len(devs)]

    return _shards_from_assignment(dataset, owner_of, num_devices, rng)
