"""Learner execution: device-local SGD, intra-cluster averaging,
inter-server gossip, and consensus-distance bookkeeping.

The learner is multinomial softmax regression, large enough to exhibit
non-IID divergence across clusters yet cheap enough for thousands of
simulated rounds. Parameters live in a flat vector; the SGD inner loop
runs in a JIT kernel (see :mod:`hfelsim.kernels`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataShard
from .kernels import sgd_steps
from .topology import consensus_constraint_lhs

__all__ = [
    "ModelState",
    "init_model",
    "local_sgd",
    "edge_aggregate",
    "inter_server_mix",
    "consensus_pairwise",
    "consensus_average",
    "estimate_consensus_after_mix",
    "softmax_loss",
    "accuracy",
]


@dataclass(frozen=True)
class ModelState:
    """Flat parameter vector of the softmax learner plus its shape."""

    params: np.ndarray
    dim_aug: int
    num_classes: int

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        if p.shape != (self.dim_aug * self.num_classes,):
            raise ValueError("parameter vector does not match declared shape")
        if not np.all(np.isfinite(p)):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "params", p)

    def as_matrix(self) -> np.ndarray:
        return self.params.reshape(self.dim_aug, self.num_classes)

    def replace(self, params: np.ndarray) -> "ModelState":
        return ModelState(params, self.dim_aug, self.num_classes)


def init_model(dim: int, num_classes: int, rng: np.random.Generator,
               scale: float = 0.01) -> ModelState:
    dim_aug = dim + 1
    params = scale * rng.normal(size=dim_aug * num_classes)
    return ModelState(params, dim_aug, num_classes)


def local_sgd(model: ModelState, shard: DataShard, iters: int, batch: int,
              lr: float, momentum: float,
              rng: np.random.Generator) -> ModelState:
    """``iters`` momentum-SGD steps on the shard, sampling with replacement.

    Deterministic given the generator state; the momentum buffer starts at
    zero each call (each edge round restarts from the broadcast model).
    """
    if len(shard) == 0:
        raise ValueError("cannot train on an empty shard")
    batch_idx = rng.integers(0, len(shard), size=(iters, batch))
    w = sgd_steps(model.as_matrix().copy(), shard.features_aug,
                  shard.labels, batch_idx, lr, momentum)
    return model.replace(np.ascontiguousarray(w).ravel())


def edge_aggregate(models) -> ModelState:
    """Uniform average of device models within a cluster."""
    models = list(models)
    stacked = np.stack([m.params for m in models])
    return models[0].replace(stacked.mean(axis=0))


def inter_server_mix(server_models, mixing: np.ndarray, gossip_steps: int):
    """Apply one-hop gossip ``gossip_steps`` times to the stacked models.

    With a symmetric doubly stochastic mixing matrix the mean of the
    server models is preserved exactly (up to roundoff).
    """
    models = list(server_models)
    u = np.stack([m.params for m in models])
    for _ in range(gossip_steps):
        u = mixing @ u
    return [m.replace(u[c]) for c, m in enumerate(models)]


def consensus_pairwise(a: ModelState, b: ModelState) -> float:
    """Euclidean distance between two edge models."""
    return float(np.linalg.norm(a.params - b.params))


def consensus_average(server_models) -> float:
    """Mean distance of the edge models from their average."""
    u = np.stack([m.params for m in server_models])
    mean = u.mean(axis=0)
    return float(np.mean(np.linalg.norm(u - mean, axis=1)))


def estimate_consensus_after_mix(active: np.ndarray,
                                 upsilon: np.ndarray) -> float:
    """Upper bound on the post-gossip average disagreement.

    Shares its implementation with the topology constraint: under the
    worst-case uniform mixing weight, only pairs without an active link
    keep contributing their distance.
    """
    return consensus_constraint_lhs(active, upsilon)


def softmax_loss(model: ModelState, features_aug: np.ndarray,
                 labels: np.ndarray) -> float:
    """Mean cross-entropy of the softmax learner."""
    z = features_aug @ model.as_matrix()
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def accuracy(model: ModelState, features_aug: np.ndarray,
             labels: np.ndarray) -> float:
    pred = (features_aug @ model.as_matrix()).argmax(axis=1)
    return float((pred == labels).mean())
