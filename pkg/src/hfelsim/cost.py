"""Time and energy cost formulas for the two-tier edge learning system.

Every quantity is SI: Hz, bits, seconds, joules, watts. SNR is a linear
ratio everywhere inside the package; dB values are converted once at the
configuration boundary via :func:`db_to_linear`. All functions here are
pure and deterministic; the allocator, topology designer, and harness
treat them as the single source of truth for cost accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CostModelError",
    "DeviceProfile",
    "Hyperparams",
    "ChannelState",
    "db_to_linear",
    "comm_rate",
    "device_comm_time",
    "device_comp_time",
    "comp_energy",
    "comm_energy",
    "device_round_energy",
    "cluster_round_time",
    "server_sync_time",
    "global_round_time",
]


class CostModelError(ValueError):
    """Raised when a cost formula receives an out-of-domain argument."""


@dataclass(frozen=True)
class DeviceProfile:
    """Static per-device parameters.

    mu            CPU cycles needed per training sample
    alpha         effective capacitance coefficient (J*s^2/cycle/Hz^2)
    power         uplink transmit power in watts
    f_min, f_max  CPU frequency bounds in Hz (DVFS range)
    energy_budget total energy available for the whole run, joules
    """

    mu: float
    alpha: float
    power: float
    f_min: float
    f_max: float
    energy_budget: float

    def __post_init__(self):
        if not (0 < self.f_min <= self.f_max):
            raise CostModelError(
                f"frequency bounds must satisfy 0 < f_min <= f_max, "
                f"got [{self.f_min}, {self.f_max}]"
            )
        for name in ("mu", "alpha", "power", "energy_budget"):
            if getattr(self, name) <= 0:
                raise CostModelError(f"{name} must be positive")


@dataclass(frozen=True)
class Hyperparams:
    """Training schedule and model-size hyperparameters.

    global_rounds  number of outer rounds (each ends in server gossip)
    edge_rounds    intra-cluster rounds per global round
    local_iters    SGD iterations per device per edge round
    batch_size     mini-batch size per SGD iteration
    gossip_steps   one-hop gossip repetitions per global round
    model_bits     serialized model size in bits
    lr             learning rate
    """

    global_rounds: int
    edge_rounds: int
    local_iters: int
    batch_size: int
    gossip_steps: int
    model_bits: float
    lr: float

    def __post_init__(self):
        for name in ("global_rounds", "edge_rounds", "local_iters",
                     "batch_size", "gossip_steps"):
            if getattr(self, name) < 1:
                raise CostModelError(f"{name} must be >= 1")
        if self.model_bits <= 0:
            raise CostModelError("model_bits must be positive")
        if self.lr <= 0:
            raise CostModelError("lr must be positive")


@dataclass(frozen=True)
class ChannelState:
    """Wireless state of one cluster for one edge round.

    snr               linear SNR per device (not dB)
    server_bandwidth  total uplink bandwidth budget of the server, Hz
    """

    snr: np.ndarray
    server_bandwidth: float

    def __post_init__(self):
        snr = np.asarray(self.snr, dtype=float)
        object.__setattr__(self, "snr", snr)
        if snr.size == 0 or np.any(snr <= 0):
            raise CostModelError("every device SNR must be positive")
        if self.server_bandwidth <= 0:
            raise CostModelError("server bandwidth must be positive")


def db_to_linear(snr_db):
    """Convert an SNR in dB to the linear ratio used internally."""
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def comm_rate(bandwidth: float, snr: float) -> float:
    """Uplink rate in bits/s for an assigned bandwidth and linear SNR."""
    if bandwidth <= 0 or snr <= 0:
        raise CostModelError("bandwidth and snr must be positive")
    return bandwidth * math.log2(1.0 + snr)


def device_comm_time(model_bits: float, bandwidth: float, snr: float) -> float:
    """Upload time of one model. Download time is zero by design."""
    return model_bits / comm_rate(bandwidth, snr)


def device_comp_time(local_iters: int, batch_size: int, mu: float, f: float) -> float:
    """Compute time for one edge round at CPU frequency ``f``.

    Bounds [f_min, f_max] are deliberately not checked here; this is the
    raw formula used by solvers probing outside the feasible box.
    """
    if f <= 0:
        raise CostModelError("frequency must be positive")
    return local_iters * batch_size * mu / f


def comp_energy(alpha: float, local_iters: int, batch_size: int,
                mu: float, f: float) -> float:
    """DVFS compute energy: (alpha/2) * cycles * f^2."""
    if alpha <= 0 or mu <= 0 or f <= 0:
        raise CostModelError("alpha, mu and f must be positive")
    return 0.5 * alpha * local_iters * batch_size * mu * f * f


def comm_energy(power: float, comm_time: float) -> float:
    """Upload energy; download energy is zero by design."""
    if power <= 0 or comm_time < 0:
        raise CostModelError("power must be positive, comm_time nonnegative")
    return power * comm_time


def device_round_energy(profile: DeviceProfile, hyper: Hyperparams,
                        bandwidth: float, f: float, snr: float,
                        local_iters: int | None = None) -> float:
    """Total device energy for one edge round: upload plus compute.

    ``local_iters`` overrides the schedule's iteration count (used by the
    baseline that rescales per-device iterations).
    """
    iters = hyper.local_iters if local_iters is None else local_iters
    t_com = device_comm_time(hyper.model_bits, bandwidth, snr)
    return (comm_energy(profile.power, t_com)
            + comp_energy(profile.alpha, iters, hyper.batch_size, profile.mu, f))


def cluster_round_time(device_times) -> float:
    """One edge round of a cluster lasts as long as its slowest device."""
    times = list(device_times)
    if not times:
        raise CostModelError("cluster has no devices")
    return max(times)


def server_sync_time(gossip_steps: int, model_bits: float,
                     neighbor_bandwidths) -> float:
    """Gossip time of one server, bounded by its slowest active link."""
    bws = list(neighbor_bandwidths)
    if not bws:
        raise CostModelError("server has no active neighbors")
    if min(bws) <= 0:
        raise CostModelError("neighbor bandwidths must be positive")
    return gossip_steps * model_bits / min(bws)


def global_round_time(per_cluster_edge_times, per_cluster_sync) -> float:
    """Completion time of one global round.

    ``per_cluster_edge_times`` is a C x R array-like of edge-round times;
    ``per_cluster_sync`` the per-cluster gossip times. The slowest cluster
    (its edge rounds plus its sync) determines the result.
    """
    edge = np.asarray(per_cluster_edge_times, dtype=float)
    sync = np.asarray(per_cluster_sync, dtype=float)
    if edge.ndim != 2 or edge.shape[0] != sync.shape[0]:
        raise CostModelError("edge-time matrix and sync vector disagree on C")
    return float(np.max(edge.sum(axis=1) + sync))
